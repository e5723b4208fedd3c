use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point has non-positive depth {depth} in the camera frame")]
    NonPositiveDepth { depth: f64 },

    #[error("landmark cloud is degenerate: {0}")]
    DegenerateCloud(String),

    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },

    #[error("unknown landmark `{0}`")]
    UnknownLandmark(String),

    #[error("all {0} subjects were rejected by the filter")]
    EmptyResult(usize),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("landmark `{landmark}` has only {count} present samples (need at least 2)")]
    InsufficientSamples { landmark: String, count: usize },

    #[error("population must be in the {expected} frame")]
    WrongFrame { expected: &'static str },

    #[error("mean soft-tissue mode requested without population statistics")]
    MissingStats,

    #[error("subject `{subject}` lacks required landmark `{landmark}`")]
    MissingLandmark { subject: String, landmark: String },

    #[error("only {visible} landmarks visible (need at least 4)")]
    TooFewVisible { visible: usize },

    #[error("degenerate overlay configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("no rankings to summarize")]
    EmptyRankings,

    #[error("config error at {location}: {message}")]
    Config { location: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn schema(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema { location: location.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
