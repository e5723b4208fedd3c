//! Synthetic population generator.
//!
//! Subjects are drawn from a statistical shape model built on a shipped
//! template skull (`data/template_v1.toml`):
//!
//! ```text
//! bone_l = template_l + Σ_k c_k σ_k mode_k(l) + jitter_l      c_k ~ N(0, 1)
//! skin_l = bone_l + t_l d_l                                    t_l ~ N(μ_l, σ_l) truncated
//! ```
//!
//! `mode_k` are smooth deformation fields (random quadratic polynomials of the
//! template position, fixed by the template's `mode_seed`) normalized to 1 mm
//! RMS, with `σ_k = mode_sd · decay^k`. `d_l` is the template outward
//! direction tilted by a small random rotation. Finally each subject receives
//! a random rigid head pose, as a scan in the dataset frame would.
//!
//! Every subject draws from its own stream and draws values for every
//! template landmark, so subject `i` is the same whatever the subject count or
//! landmark set.

use std::sync::LazyLock;

use nalgebra::{Rotation3, Unit, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::{rotation_from_ypr_deg, AlignmentTransform, Point3};
use crate::landmarks::{LandmarkId, LandmarkSet, Registry};
use crate::population::{Frame, LandmarkEntry, Population, Provenance, Sex, SubjectRecord};
use crate::rng::{self, Purpose};
use crate::{Error, Result};

const TEMPLATE_V1: &str = include_str!("../data/template_v1.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub shape_modes: usize,
    pub mode_seed: u64,
    pub mode_sd_mm: f64,
    pub mode_decay: f64,
    pub jitter_sd_mm: f64,
    pub direction_sd_deg: f64,
    pub head_pose_sd_deg: f64,
    pub head_offset_sd_mm: f64,
    pub fstt_min_mm: f64,
    pub fstt_max_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateLandmark {
    pub name: String,
    pub bone: [f64; 3],
    pub outward: [f64; 3],
    pub fstt_mean: f64,
    pub fstt_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub version: u32,
    pub generator: GeneratorParams,
    #[serde(rename = "landmark")]
    pub landmarks: Vec<TemplateLandmark>,
}

static STANDARD_TEMPLATE: LazyLock<Template> =
    LazyLock::new(|| Template::parse(TEMPLATE_V1).expect("shipped template is valid"));

impl Template {
    pub fn standard() -> &'static Template {
        &STANDARD_TEMPLATE
    }

    pub fn parse(text: &str) -> Result<Template> {
        let mut t: Template = toml::from_str(text).map_err(|e| Error::schema("template", e.to_string()))?;
        for l in &mut t.landmarks {
            let n = Vector3::from(l.outward).normalize();
            if !n.iter().all(|c| c.is_finite()) || !(l.fstt_mean > 0.0) || !(l.fstt_sd >= 0.0) {
                return Err(Error::schema("template", format!("bad entry for {}", l.name)));
            }
            l.outward = [n.x, n.y, n.z];
        }
        Ok(t)
    }

    pub fn landmark(&self, name: &str) -> Option<&TemplateLandmark> {
        self.landmarks.iter().find(|l| l.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub landmark_set: LandmarkSet,
    pub subjects: usize,
}

impl GeneratorSpec {
    pub fn new(landmark_set: LandmarkSet, subjects: usize) -> Self {
        GeneratorSpec { landmark_set, subjects }
    }
}

fn mode_features(p: &Vector3<f64>) -> [f64; 10] {
    let q = p / 60.0;
    [q.x, q.y, q.z, q.x * q.x, q.y * q.y, q.z * q.z, q.x * q.y, q.y * q.z, q.x * q.z, q.x.abs()]
}

/// Deformation modes evaluated at every template landmark, 1 mm RMS each.
fn shape_modes(template: &Template) -> Vec<Vec<Vector3<f64>>> {
    let params = &template.generator;
    (0..params.shape_modes)
        .map(|k| {
            let mut rng = rng::stream(params.mode_seed, Purpose::ShapeModes, &[k as u64]);
            let coeffs: Vec<[f64; 10]> =
                (0..3).map(|_| std::array::from_fn(|_| StandardNormal.sample(&mut rng))).collect();
            let field: Vec<Vector3<f64>> = template
                .landmarks
                .iter()
                .map(|l| {
                    let phi = mode_features(&Vector3::from(l.bone));
                    let c = |axis: usize| coeffs[axis].iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>();
                    Vector3::new(c(0), c(1), c(2))
                })
                .collect();
            let rms = (field.iter().map(|v| v.norm_squared()).sum::<f64>() / field.len() as f64).sqrt();
            field.into_iter().map(|v| v / rms).collect()
        })
        .collect()
}

fn truncated_normal<R: Rng>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let normal = Normal::new(mean, sd).expect("finite parameters");
    for _ in 0..10_000 {
        let v = normal.sample(rng);
        if v > lo && v < hi {
            return v;
        }
    }
    mean.clamp(lo, hi)
}

/// Tilts a unit vector by a normal-distributed angle about a random
/// perpendicular axis.
fn perturb_direction<R: Rng>(rng: &mut R, d: &Vector3<f64>, sd_deg: f64) -> Vector3<f64> {
    let helper = if d.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = d.cross(&helper).normalize();
    let e2 = d.cross(&e1);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let axis = Unit::new_normalize(e1 * phi.cos() + e2 * phi.sin());
    let angle: f64 = StandardNormal.sample(rng);
    Rotation3::from_axis_angle(&axis, angle * sd_deg.to_radians()) * d
}

/// Draws a synthetic population in the dataset frame.
pub fn generate_population(spec: &GeneratorSpec, seed: u64) -> Result<Population> {
    generate_with_template(spec, seed, Template::standard())
}

pub fn generate_with_template(spec: &GeneratorSpec, seed: u64, template: &Template) -> Result<Population> {
    if spec.subjects == 0 {
        return Err(Error::InvalidSpec("subject count must be positive".into()));
    }
    let registry = Registry::standard();
    let ids = spec.landmark_set.ids(registry);
    for &id in &ids {
        if template.landmark(registry.name(id)).is_none() {
            return Err(Error::InvalidSpec(format!("template lacks `{}`", registry.name(id))));
        }
    }
    let params = &template.generator;
    let modes = shape_modes(template);
    let template_ids: Vec<Option<LandmarkId>> = template.landmarks.iter().map(|l| registry.id(&l.name)).collect();

    let subjects = (0..spec.subjects)
        .map(|i| {
            let mut rng = rng::stream(seed, Purpose::Subject, &[i as u64]);
            let sex = if rng.random_bool(265.0 / 500.0) { Sex::M } else { Sex::F };
            let age = rng.random_range(18..=96);
            let coeffs: Vec<f64> = (0..params.shape_modes)
                .map(|k| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * params.mode_sd_mm * params.mode_decay.powi(k as i32)
                })
                .collect();
            let pose_sd = params.head_pose_sd_deg;
            let mut normal = |sd: f64| -> f64 {
                let z: f64 = StandardNormal.sample(&mut rng);
                sd * z
            };
            let head = AlignmentTransform {
                rotation: rotation_from_ypr_deg(normal(pose_sd), normal(pose_sd), normal(pose_sd)),
                translation: Vector3::new(
                    normal(params.head_offset_sd_mm),
                    normal(params.head_offset_sd_mm),
                    normal(params.head_offset_sd_mm),
                ),
            };

            let mut record = SubjectRecord::new(format!("S{:04}", i + 1), sex, age, registry.len());
            for (l, tl) in template.landmarks.iter().enumerate() {
                let mut bone = Vector3::from(tl.bone);
                for (k, c) in coeffs.iter().enumerate() {
                    bone += modes[k][l] * *c;
                }
                let jitter: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
                bone += Vector3::from(jitter) * params.jitter_sd_mm;
                let t = truncated_normal(&mut rng, tl.fstt_mean, tl.fstt_sd, params.fstt_min_mm, params.fstt_max_mm);
                let d = perturb_direction(&mut rng, &Vector3::from(tl.outward), params.direction_sd_deg);
                let bone = Point3::from(bone);
                let entry = LandmarkEntry { bone: head.apply(&bone), skin: head.apply(&(bone + d * t)) };
                if let Some(id) = template_ids[l].filter(|id| ids.contains(id)) {
                    record.set(id, Some(entry));
                }
            }
            record
        })
        .collect();

    Population::new(
        registry,
        ids,
        subjects,
        Frame::Dataset,
        Provenance {
            source: "generator".into(),
            generator: Some(spec.clone()),
            seed: Some(seed),
            tool_version: env!("CARGO_PKG_VERSION").into(),
        },
    )
}
