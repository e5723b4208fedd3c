//! Run manifests and staged output directories.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cfsim::harness::{ExperimentConfig, MatrixFormat, RunStats};
use cfsim::LandmarkSet;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_VERSION: u32 = 1;

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).with_context(|| format!("cannot read {}", path.display()))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the output directory for outputs; as given for inputs.
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, recorded_as: PathBuf) -> Result<Self> {
        Ok(FileDigest { path: recorded_as, sha256: sha256_file(path)? })
    }
}

/// Where the subjects came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum PopulationRecord {
    Generated { subjects: usize, seed: u64 },
    File { path: PathBuf, sha256: String },
}

/// Everything a `simulate` or `run` needs besides the worker count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub name: String,
    pub landmark_set: LandmarkSet,
    pub population: PopulationRecord,
    pub matrix_format: MatrixFormat,
    pub conditions: Vec<ExperimentConfig>,
    /// The config file as written, kept for reference only.
    pub config_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Snapshot {
    Generate { landmark_set: LandmarkSet, subjects: usize, seed: u64, file_name: String },
    Simulate(RunSnapshot),
    Run(RunSnapshot),
    Report { inputs: Vec<PathBuf> },
}

impl Snapshot {
    pub fn command(&self) -> &'static str {
        match self {
            Snapshot::Generate { .. } => "generate",
            Snapshot::Simulate(_) => "simulate",
            Snapshot::Run(_) => "run",
            Snapshot::Report { .. } => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub total_s: f64,
    pub conditions: Vec<RunStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub tool: String,
    pub rng: String,
    pub snapshot: Snapshot,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub timing: Timing,
}

impl RunManifest {
    pub fn new(snapshot: Snapshot) -> Self {
        RunManifest {
            manifest_version: MANIFEST_VERSION,
            tool: format!("cfsim {}", env!("CARGO_PKG_VERSION")),
            rng: cfsim::rng::GENERATOR_NAME.to_string(),
            snapshot,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timing: Timing::default(),
        }
    }

    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read manifest {}", path.display()))?;
        let m: RunManifest =
            serde_json::from_str(&text).with_context(|| format!("{} is not a valid manifest", path.display()))?;
        if m.manifest_version != MANIFEST_VERSION {
            bail!("{}: unsupported manifest version {}", path.display(), m.manifest_version);
        }
        Ok(m)
    }

    /// Output digests that differ from `other`'s, by path.
    pub fn output_mismatches(&self, other: &RunManifest) -> Vec<PathBuf> {
        let mut bad = Vec::new();
        for d in &other.outputs {
            match self.outputs.iter().find(|o| o.path == d.path) {
                Some(o) if o.sha256 == d.sha256 => {}
                _ => bad.push(d.path.clone()),
            }
        }
        bad
    }
}

/// Output files are written into `<out>/<command>.partial/` and moved into
/// `<out>` only once the command has succeeded. A failed command leaves its
/// files in the quarantine directory and never touches earlier results.
pub struct Staging {
    out_dir: PathBuf,
    dir: PathBuf,
}

impl Staging {
    pub fn new(out_dir: &Path, command: &str) -> Result<Self> {
        fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
        let dir = out_dir.join(format!("{command}.partial"));
        if dir.exists() {
            fs::remove_dir_all(&dir).with_context(|| format!("cannot clear {}", dir.display()))?;
        }
        fs::create_dir(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Staging { out_dir: out_dir.to_path_buf(), dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn staged_files(&self) -> Result<Vec<String>> {
        let mut names = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            names.push(entry?.file_name().to_string_lossy().into_owned());
        }
        names.sort();
        Ok(names)
    }

    /// Records digests of everything staged, writes the manifest and moves
    /// all files into the output directory.
    pub fn commit(self, mut manifest: RunManifest) -> Result<RunManifest> {
        let manifest_name = RunManifest::file_name(manifest.snapshot.command());
        manifest.outputs = self
            .staged_files()?
            .into_iter()
            .filter(|n| *n != manifest_name)
            .map(|n| FileDigest::of(&self.path(&n), PathBuf::from(&n)))
            .collect::<Result<_>>()?;
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(self.path(&manifest_name), text)?;
        // The manifest goes last, so its presence implies complete outputs.
        let mut names = self.staged_files()?;
        names.retain(|n| *n != manifest_name);
        names.push(manifest_name);
        for name in names {
            let to = self.out_dir.join(&name);
            fs::rename(self.path(&name), &to).with_context(|| format!("cannot move {name} into place"))?;
        }
        fs::remove_dir(&self.dir)?;
        Ok(manifest)
    }
}
