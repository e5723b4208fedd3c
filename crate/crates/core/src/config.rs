//! Experiment config files.
//!
//! A config is TOML with a `schema_version`. Every photo and solver parameter
//! has a named field with a default, so a minimal file only names the
//! experiment:
//!
//! ```toml
//! schema_version = 1
//! experiment = "E4"
//! subjects = 70
//! seed = 1
//! noise_px = [0, 5]
//!
//! [fstt]
//! thickness = "mean"
//! direction = ["real", "mean"]
//!
//! [visibility]
//! mode = "fixed_count"
//! k = [8, 10, 12, 14, 16]
//! ```
//!
//! `noise_px`, `fstt.direction` and `visibility.k` take a value or a list;
//! lists expand into one condition per combination, ordered by `k`, then
//! direction, then noise.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fstt::{DirectionMode, FsttConfig, ThicknessMode};
use crate::harness::{ExperimentConfig, ExperimentId, MatrixFormat};
use crate::landmarks::LandmarkSet;
use crate::photo::{PhotoRanges, VisibilityModel, DEFAULT_HALF_ANGLE_DEG};
use crate::solver::SolverOptions;
use crate::{Error, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub experiment: ExperimentId,
    #[serde(default)]
    pub name: Option<String>,
    /// Defaults to `set_b` for E4 and `set_a` otherwise.
    #[serde(default)]
    pub landmark_set: Option<LandmarkSet>,
    /// Subjects to generate; ignored when the population comes from a file.
    #[serde(default = "default_subjects")]
    pub subjects: usize,
    #[serde(default = "default_photos_per_pose")]
    pub photos_per_pose: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_noise")]
    pub noise_px: OneOrMany<f64>,
    #[serde(default = "default_matrix_format")]
    pub matrix_format: MatrixFormat,
    #[serde(default)]
    pub population: PopulationSection,
    #[serde(default)]
    pub fstt: Option<FsttSection>,
    #[serde(default)]
    pub visibility: Option<VisibilitySection>,
    #[serde(default)]
    pub photo: PhotoRanges,
    #[serde(default)]
    pub solver: SolverOptions,
}

fn default_subjects() -> usize {
    30
}

fn default_photos_per_pose() -> usize {
    5
}

fn default_noise() -> OneOrMany<f64> {
    OneOrMany::One(0.0)
}

fn default_matrix_format() -> MatrixFormat {
    MatrixFormat::Csv
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSection {
    /// Population CSV; relative paths resolve against the config file.
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Generator seed; defaults to the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FsttSection {
    pub thickness: ThicknessMode,
    #[serde(default = "default_direction")]
    pub direction: OneOrMany<DirectionMode>,
}

fn default_direction() -> OneOrMany<DirectionMode> {
    OneOrMany::One(DirectionMode::Real)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisibilityMode {
    Geometric,
    FixedCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisibilitySection {
    pub mode: VisibilityMode,
    #[serde(default)]
    pub k: Option<OneOrMany<usize>>,
    #[serde(default = "default_half_angle")]
    pub half_angle_deg: f64,
}

fn default_half_angle() -> f64 {
    DEFAULT_HALF_ANGLE_DEG
}

/// Where the subjects of a run come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PopulationSource {
    Generate { subjects: usize, seed: u64 },
    File(PathBuf),
}

/// A parsed and validated config.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub landmark_set: LandmarkSet,
    pub population: PopulationSource,
    pub matrix_format: MatrixFormat,
    pub conditions: Vec<ExperimentConfig>,
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config(&text, &path.display().to_string())?;
    if let PopulationSource::File(p) = &mut cfg.population {
        if p.is_relative() {
            *p = path.parent().unwrap_or(Path::new("")).join(&*p);
        }
    }
    Ok(cfg)
}

/// Parses config text; `origin` prefixes error locations.
pub fn parse_config(text: &str, origin: &str) -> Result<RunConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        Error::Config {
            location: match line {
                Some(l) => format!("{origin}:{l}"),
                None => origin.to_string(),
            },
            message: e.message().to_string(),
        }
    })?;
    let located = |field: &str, message: String| Error::Config {
        location: match find_key(text, field) {
            Some(l) => format!("{origin}:{l} ({field})"),
            None => format!("{origin} ({field})"),
        },
        message,
    };
    if file.schema_version != CONFIG_SCHEMA_VERSION {
        return Err(located(
            "schema_version",
            format!("unsupported schema version {} (expected {CONFIG_SCHEMA_VERSION})", file.schema_version),
        ));
    }
    let conditions = expand(&file).map_err(|e| match e {
        Error::Config { location, message } => located(&location, message),
        other => other,
    })?;
    let population = match &file.population.path {
        Some(p) => PopulationSource::File(p.clone()),
        None => PopulationSource::Generate { subjects: file.subjects, seed: file.population.seed.unwrap_or(file.seed) },
    };
    Ok(RunConfig {
        name: file.name.clone().unwrap_or_else(|| file.experiment.to_string().to_lowercase()),
        landmark_set: conditions[0].landmark_set,
        population,
        matrix_format: file.matrix_format,
        conditions,
    })
}

fn expand(file: &ConfigFile) -> Result<Vec<ExperimentConfig>> {
    let bad = |field: &str, message: &str| Error::Config { location: field.into(), message: message.into() };
    let set = file.landmark_set.unwrap_or(if file.experiment == ExperimentId::E4 {
        LandmarkSet::SetB
    } else {
        LandmarkSet::SetA
    });
    let (thickness, directions) = match (&file.fstt, file.experiment) {
        (Some(f), _) => (f.thickness, f.direction.values()),
        (None, ExperimentId::E1) => (ThicknessMode::Real, vec![DirectionMode::Real]),
        (None, ExperimentId::E2) => (ThicknessMode::None, vec![DirectionMode::Real]),
        (None, _) => (ThicknessMode::Mean, vec![DirectionMode::Real, DirectionMode::Mean]),
    };
    let visibilities: Vec<VisibilityModel> = match &file.visibility {
        None if file.experiment == ExperimentId::E4 => {
            crate::harness::E4_VISIBLE_COUNTS.iter().map(|&k| VisibilityModel::fixed(k)).collect()
        }
        None => vec![VisibilityModel::default()],
        Some(v) => match (v.mode, &v.k) {
            (VisibilityMode::Geometric, None) => vec![VisibilityModel::Geometric { half_angle_deg: v.half_angle_deg }],
            (VisibilityMode::Geometric, Some(_)) => {
                return Err(bad("visibility.k", "only valid with mode = \"fixed_count\""))
            }
            (VisibilityMode::FixedCount, None) => {
                return Err(bad("visibility.k", "required with mode = \"fixed_count\""))
            }
            (VisibilityMode::FixedCount, Some(k)) => k
                .values()
                .into_iter()
                .map(|k| VisibilityModel::FixedCount { k, half_angle_deg: v.half_angle_deg })
                .collect(),
        },
    };
    let noises = file.noise_px.values();
    for (field, empty) in [
        ("fstt.direction", directions.is_empty()),
        ("visibility.k", visibilities.is_empty()),
        ("noise_px", noises.is_empty()),
    ] {
        if empty {
            return Err(bad(field, "list must not be empty"));
        }
    }

    let mut out = Vec::new();
    for visibility in &visibilities {
        for &direction in &directions {
            for &noise_px in &noises {
                let c = ExperimentConfig {
                    experiment: file.experiment,
                    landmark_set: set,
                    subject_count: file.subjects,
                    photos_per_pose: file.photos_per_pose,
                    fstt: FsttConfig::new(thickness, direction),
                    visibility: *visibility,
                    noise_px,
                    seed: file.seed,
                    photo_ranges: file.photo,
                    solver: file.solver,
                };
                c.validate().map_err(|e| match e {
                    Error::Config { location, message } => {
                        let field = match location.as_str() {
                            "subject_count" => "subjects".to_string(),
                            "photo" => "photo".to_string(),
                            other => other.to_string(),
                        };
                        Error::Config { location: field, message }
                    }
                    other => other,
                })?;
                out.push(c);
            }
        }
    }
    Ok(out)
}

fn line_of(text: &str, offset: usize) -> usize {
    1 + text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count()
}

/// Line of a dotted key (`table.key` or a top-level `key`), if written out.
fn find_key(text: &str, dotted: &str) -> Option<usize> {
    let (table, key) = match dotted.rsplit_once('.') {
        Some((t, k)) => (t, k),
        None => ("", dotted),
    };
    let mut current = String::new();
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim().to_string();
            if current == table {
                header_line = Some(i + 1);
            }
            continue;
        }
        if current == table {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header_line
}
