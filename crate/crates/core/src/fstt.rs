//! Predicting face (skin) landmarks from skull (bone) landmarks.
//!
//! A regime is a pair of how much is known about the soft tissue thickness and
//! about its direction:
//!
//! | regime           | thickness         | direction           | experiment |
//! |------------------|-------------------|---------------------|------------|
//! | `(real, real)`   | subject's own     | subject's own       | E1         |
//! | `(none, _)`      | 0                 | irrelevant          | E2         |
//! | `(mean, real)`   | population mean   | subject's own       | E3, E4     |
//! | `(mean, mean)`   | population mean   | population mean     | E3, E4     |
//!
//! Population means are taken in the common aligned frame.

use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::Point3;
use crate::landmarks::{LandmarkId, Registry};
use crate::population::{PopulationStats, SubjectRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThicknessMode {
    Real,
    Mean,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionMode {
    Real,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FsttConfig {
    pub thickness: ThicknessMode,
    pub direction: DirectionMode,
}

impl FsttConfig {
    pub const REAL: FsttConfig = FsttConfig { thickness: ThicknessMode::Real, direction: DirectionMode::Real };
    pub const NONE: FsttConfig = FsttConfig { thickness: ThicknessMode::None, direction: DirectionMode::Real };

    pub fn new(thickness: ThicknessMode, direction: DirectionMode) -> Self {
        FsttConfig { thickness, direction }
    }

    pub fn needs_stats(&self) -> bool {
        self.thickness == ThicknessMode::Mean
            || (self.thickness != ThicknessMode::None && self.direction == DirectionMode::Mean)
    }
}

impl fmt::Display for ThicknessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThicknessMode::Real => "Real",
            ThicknessMode::Mean => "Mean",
            ThicknessMode::None => "None",
        })
    }
}

impl fmt::Display for DirectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DirectionMode::Real => "Real",
            DirectionMode::Mean => "Mean",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CephPrediction {
    pub regime: FsttConfig,
    /// Predicted skin position per requested landmark, in request order.
    pub points: Vec<(LandmarkId, Point3)>,
}

/// Predicts the skin position of each requested landmark as `bone + t·d`.
pub fn predict(
    subject: &SubjectRecord,
    landmarks: &[LandmarkId],
    config: FsttConfig,
    stats: Option<&PopulationStats>,
    registry: &Registry,
) -> Result<CephPrediction> {
    let stats = match (config.needs_stats(), stats) {
        (true, None) => return Err(Error::MissingStats),
        (_, s) => s,
    };
    let mut points = Vec::with_capacity(landmarks.len());
    for &id in landmarks {
        let entry = subject.entry(id).ok_or_else(|| Error::MissingLandmark {
            subject: subject.subject_id.clone(),
            landmark: registry.name(id).into(),
        })?;
        let mean = || {
            stats
                .and_then(|s| s.get(id))
                .ok_or_else(|| Error::InsufficientSamples { landmark: registry.name(id).into(), count: 0 })
        };
        let thickness = match config.thickness {
            ThicknessMode::None => {
                points.push((id, entry.bone));
                continue;
            }
            ThicknessMode::Real => entry.thickness(),
            ThicknessMode::Mean => mean()?.mean_thickness,
        };
        let direction: Vector3<f64> = match config.direction {
            DirectionMode::Real => entry.direction(),
            DirectionMode::Mean => mean()?.direction(),
        };
        // Real-real reproduces the measured skin point exactly.
        let p = if config == FsttConfig::REAL { entry.skin } else { entry.bone + direction * thickness };
        points.push((id, p));
    }
    Ok(CephPrediction { regime: config, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate_population, GeneratorSpec};
    use crate::landmarks::LandmarkSet;
    use crate::population::{compute_stats, Population};

    fn aligned(n: usize, seed: u64) -> Population {
        generate_population(&GeneratorSpec::new(LandmarkSet::SetA, n), seed).unwrap().aligned().unwrap()
    }

    const ALL: [FsttConfig; 5] = [
        FsttConfig::REAL,
        FsttConfig::NONE,
        FsttConfig { thickness: ThicknessMode::Mean, direction: DirectionMode::Real },
        FsttConfig { thickness: ThicknessMode::Mean, direction: DirectionMode::Mean },
        FsttConfig { thickness: ThicknessMode::Real, direction: DirectionMode::Mean },
    ];

    #[test]
    fn real_real_is_true_skin_and_none_is_bone() {
        let pop = aligned(5, 1);
        for s in &pop.subjects {
            let p = predict(s, &pop.landmarks, FsttConfig::REAL, None, pop.registry).unwrap();
            let n = predict(s, &pop.landmarks, FsttConfig::NONE, None, pop.registry).unwrap();
            for ((id, a), (_, b)) in p.points.iter().zip(&n.points) {
                let e = s.entry(*id).unwrap();
                assert_eq!(*a, e.skin);
                assert_eq!(*b, e.bone);
            }
        }
    }

    #[test]
    fn mean_mode_on_identical_population_recovers_skin() {
        let base = aligned(1, 2);
        let subjects =
            (0..5).map(|i| SubjectRecord { subject_id: format!("C{i}"), ..base.subjects[0].clone() }).collect();
        let pop = Population { subjects, ..base };
        let stats = compute_stats(&pop, &pop.landmarks).unwrap();
        let cfg = FsttConfig::new(ThicknessMode::Mean, DirectionMode::Mean);
        let p = predict(&pop.subjects[0], &pop.landmarks, cfg, Some(&stats), pop.registry).unwrap();
        for (id, q) in &p.points {
            assert!((q - pop.subjects[0].entry(*id).unwrap().skin).norm() < 1e-9);
        }
    }

    #[test]
    fn thickness_and_error_bounds_hold() {
        let pop = aligned(40, 3);
        let stats = compute_stats(&pop, &pop.landmarks).unwrap();
        for s in &pop.subjects {
            for cfg in ALL {
                let p = predict(s, &pop.landmarks, cfg, Some(&stats), pop.registry).unwrap();
                for (id, q) in &p.points {
                    let e = s.entry(*id).unwrap();
                    let st = stats.get(*id).unwrap();
                    let t = match cfg.thickness {
                        ThicknessMode::Real => e.thickness(),
                        ThicknessMode::Mean => st.mean_thickness,
                        ThicknessMode::None => 0.0,
                    };
                    assert!(((q - e.bone).norm() - t).abs() < 1e-12);
                    if cfg.thickness == ThicknessMode::Mean {
                        let d = match cfg.direction {
                            DirectionMode::Real => e.direction(),
                            DirectionMode::Mean => st.direction(),
                        };
                        let bound = (e.thickness() - t).abs() + t * (e.direction() - d).norm();
                        assert!((q - e.skin).norm() <= bound + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn missing_inputs_are_errors() {
        let pop = aligned(3, 4);
        let cfg = FsttConfig::new(ThicknessMode::Mean, DirectionMode::Real);
        assert!(matches!(predict(&pop.subjects[0], &pop.landmarks, cfg, None, pop.registry), Err(Error::MissingStats)));
        let mut s = pop.subjects[0].clone();
        s.set(pop.landmarks[2], None);
        assert!(matches!(
            predict(&s, &pop.landmarks, FsttConfig::REAL, None, pop.registry),
            Err(Error::MissingLandmark { .. })
        ));
    }
}
