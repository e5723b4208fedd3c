//! Synthetic photographs: projected landmark observations under a randomized
//! camera, pose, resolution, visibility and localization noise.
//!
//! A [`SyntheticPhoto`] keeps what an examiner would see
//! ([`PhotoObservations`]) apart from the simulation ground truth
//! ([`GroundTruth`]). The overlay solver only ever receives the former.

use std::fmt;
use std::path::Path;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{project_camera_point, rotation_from_ypr_deg, CameraModel, Point2, Point3, RigidPose};
use crate::landmarks::{LandmarkId, Registry};
use crate::population::csv_io;
use crate::rng::{self, Purpose};
use crate::{Error, Result};

pub const PHOTO_SCHEMA_VERSION: u32 = 1;

/// Fraction of the smaller image dimension spanned by the framed landmarks.
pub const FRAMING_FRACTION: f64 = 0.7;
/// Default visibility half-angle between a landmark normal and the camera.
pub const DEFAULT_HALF_ANGLE_DEG: f64 = 80.0;
pub const MIN_VISIBLE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoseClass {
    Frontal,
    Lateral,
}

impl PoseClass {
    pub const ALL: [PoseClass; 2] = [PoseClass::Frontal, PoseClass::Lateral];

    /// Yaw of the pose-class base orientation; lateral views show the left side.
    pub fn base_yaw_deg(self) -> f64 {
        match self {
            PoseClass::Frontal => 0.0,
            PoseClass::Lateral => 90.0,
        }
    }

    pub fn code(self) -> char {
        match self {
            PoseClass::Frontal => 'F',
            PoseClass::Lateral => 'L',
        }
    }
}

impl fmt::Display for PoseClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoseClass::Frontal => "frontal",
            PoseClass::Lateral => "lateral",
        })
    }
}

/// Ranges of the randomized photo parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhotoRanges {
    pub focal: [f64; 2],
    pub rotation_deg: [f64; 2],
    pub width: [u32; 2],
    pub height: [u32; 2],
}

impl Default for PhotoRanges {
    fn default() -> Self {
        PhotoRanges { focal: [0.5, 1.5], rotation_deg: [-15.0, 15.0], width: [600, 1200], height: [600, 1000] }
    }
}

impl PhotoRanges {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.focal[0] > 0.0 && self.focal[0] <= self.focal[1]) {
            return Err(format!("focal range {:?} must be positive and ordered", self.focal));
        }
        if !(self.rotation_deg[0] <= self.rotation_deg[1] && self.rotation_deg[1] - self.rotation_deg[0] < 90.0) {
            return Err(format!("rotation range {:?} must be ordered and narrower than 90°", self.rotation_deg));
        }
        for (name, r) in [("width", self.width), ("height", self.height)] {
            if r[0] == 0 || r[0] > r[1] {
                return Err(format!("{name} range {r:?} must be positive and ordered"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotoSpec {
    pub pose_class: PoseClass,
    pub yaw_offset_deg: f64,
    pub pitch_offset_deg: f64,
    pub roll_offset_deg: f64,
    pub focal: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub noise_px: f64,
    pub rng_seed: u64,
}

impl PhotoSpec {
    pub fn rotation(&self) -> Rotation3<f64> {
        rotation_from_ypr_deg(
            self.pose_class.base_yaw_deg() + self.yaw_offset_deg,
            self.pitch_offset_deg,
            self.roll_offset_deg,
        )
    }
}

/// Draws a photo spec from the default ranges.
pub fn sample_spec(pose_class: PoseClass, noise_px: f64, seed: u64) -> PhotoSpec {
    sample_spec_with(&PhotoRanges::default(), pose_class, noise_px, seed)
}

pub fn sample_spec_with(ranges: &PhotoRanges, pose_class: PoseClass, noise_px: f64, seed: u64) -> PhotoSpec {
    let mut rng = rng::stream(seed, Purpose::PhotoSpec, &[]);
    let [r0, r1] = ranges.rotation_deg;
    let mut angle = || rng.random_range(r0..=r1);
    let (yaw, pitch, roll) = (angle(), angle(), angle());
    PhotoSpec {
        pose_class,
        yaw_offset_deg: yaw,
        pitch_offset_deg: pitch,
        roll_offset_deg: roll,
        focal: rng.random_range(ranges.focal[0]..=ranges.focal[1]),
        image_width: rng.random_range(ranges.width[0]..=ranges.width[1]),
        image_height: rng.random_range(ranges.height[0]..=ranges.height[1]),
        noise_px,
        rng_seed: seed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum VisibilityModel {
    /// A landmark is visible when its outward normal is within the half angle
    /// of the direction toward the camera.
    Geometric { half_angle_deg: f64 },
    /// Geometric pre-filter, then a random subset of `k` landmarks.
    FixedCount { k: usize, half_angle_deg: f64 },
}

impl Default for VisibilityModel {
    fn default() -> Self {
        VisibilityModel::Geometric { half_angle_deg: DEFAULT_HALF_ANGLE_DEG }
    }
}

impl VisibilityModel {
    pub fn fixed(k: usize) -> Self {
        VisibilityModel::FixedCount { k, half_angle_deg: DEFAULT_HALF_ANGLE_DEG }
    }

    pub fn half_angle_deg(&self) -> f64 {
        match *self {
            VisibilityModel::Geometric { half_angle_deg } | VisibilityModel::FixedCount { half_angle_deg, .. } => {
                half_angle_deg
            }
        }
    }

    pub fn fixed_count(&self) -> Option<usize> {
        match *self {
            VisibilityModel::FixedCount { k, .. } => Some(k),
            VisibilityModel::Geometric { .. } => None,
        }
    }
}

/// A 3D landmark to be photographed, with its outward surface normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub landmark: LandmarkId,
    pub position: Point3,
    pub normal: Vector3<f64>,
}

/// What the overlay solver is allowed to see of a photo.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotoObservations {
    pub photo_id: String,
    pub image_width: u32,
    pub image_height: u32,
    /// Sorted by landmark id.
    pub observations: Vec<(LandmarkId, Point2)>,
}

impl PhotoObservations {
    pub fn visible_set(&self) -> Vec<LandmarkId> {
        self.observations.iter().map(|(id, _)| *id).collect()
    }
}

/// Simulation ground truth, for evaluation only.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub subject_id: String,
    pub replicate: usize,
    pub spec: PhotoSpec,
    pub camera: CameraModel,
    pub pose: RigidPose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPhoto {
    pub observed: PhotoObservations,
    truth: GroundTruth,
}

impl SyntheticPhoto {
    pub fn new(observed: PhotoObservations, truth: GroundTruth) -> Self {
        SyntheticPhoto { observed, truth }
    }

    pub fn photo_id(&self) -> &str {
        &self.observed.photo_id
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }
}

pub fn photo_id(subject_id: &str, pose: PoseClass, replicate: usize) -> String {
    format!("{subject_id}-{}{replicate}", pose.code())
}

/// Distance that makes the projected cloud span `target` pixels.
fn framing_distance(rotated: &[Vector3<f64>], focal_px: f64, target: f64) -> f64 {
    let span = |d: f64| {
        let (mut umin, mut umax, mut vmin, mut vmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for q in rotated {
            let z = q.z + d;
            let (u, v) = (focal_px * q.x / z, focal_px * q.y / z);
            umin = umin.min(u);
            umax = umax.max(u);
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
        (umax - umin).max(vmax - vmin)
    };
    let nearest = rotated.iter().map(|q| q.z).fold(f64::MAX, f64::min);
    let extent = rotated.iter().map(|q| q.norm()).fold(0.0, f64::max).max(1e-9);
    let mut lo = -nearest + 1e-6 * extent;
    let mut hi = lo + extent;
    while span(hi) > target {
        lo = hi;
        hi += 2.0 * (hi + nearest);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if span(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi.abs() {
            break;
        }
    }
    hi
}

/// Selection priority of a landmark in a photo; lower is picked first.
fn visibility_priority(seed: u64, id: LandmarkId) -> u64 {
    rng::derive(Purpose::Visibility, &[seed, id.0 as u64])
}

/// Renders one noiseless photo of a landmark cloud.
///
/// The camera looks at the cloud centroid from the pose-class orientation and
/// sits at the distance where the projected cloud spans
/// [`FRAMING_FRACTION`] of the smaller image side.
pub fn render(
    cloud: &[CloudPoint],
    spec: &PhotoSpec,
    visibility: &VisibilityModel,
    subject_id: &str,
    replicate: usize,
) -> Result<SyntheticPhoto> {
    if cloud.len() < MIN_VISIBLE {
        return Err(Error::TooFewVisible { visible: cloud.len() });
    }
    let camera = CameraModel::centered(spec.focal, spec.image_width, spec.image_height);
    let rotation = spec.rotation();
    let centroid = cloud.iter().fold(Vector3::zeros(), |a, c| a + c.position.coords) / cloud.len() as f64;
    let rotated: Vec<Vector3<f64>> = cloud.iter().map(|c| rotation * (c.position.coords - centroid)).collect();
    let target = FRAMING_FRACTION * spec.image_width.min(spec.image_height) as f64;
    let distance = framing_distance(&rotated, camera.focal_px(), target);
    let pose = RigidPose::new(rotation, Vector3::new(0.0, 0.0, distance) - rotation * centroid);

    let cos_limit = visibility.half_angle_deg().to_radians().cos();
    let mut visible: Vec<(LandmarkId, Point2)> = Vec::new();
    for c in cloud {
        let x = pose.transform(&c.position);
        let toward_camera = -x.normalize();
        if (rotation * c.normal).dot(&toward_camera) <= cos_limit {
            continue;
        }
        let p = project_camera_point(&camera, &x)?;
        if camera.contains(&p) {
            visible.push((c.landmark, p));
        }
    }
    if let Some(k) = visibility.fixed_count() {
        if visible.len() > k {
            visible.sort_by_key(|(id, _)| visibility_priority(spec.rng_seed, *id));
            visible.truncate(k);
        }
    }
    visible.sort_by_key(|(id, _)| *id);
    if visible.len() < MIN_VISIBLE {
        return Err(Error::TooFewVisible { visible: visible.len() });
    }

    Ok(SyntheticPhoto {
        observed: PhotoObservations {
            photo_id: photo_id(subject_id, spec.pose_class, replicate),
            image_width: spec.image_width,
            image_height: spec.image_height,
            observations: visible,
        },
        truth: GroundTruth { subject_id: subject_id.to_string(), replicate, spec: *spec, camera, pose },
    })
}

/// Displaces every observation by an independent uniform draw from the
/// square `[-noise_px, noise_px]²`, clamped to the image.
///
/// Each landmark draws from its own stream, so a landmark's displacement does
/// not depend on which other landmarks are visible, and displacements at
/// different noise levels are scaled copies of each other.
pub fn apply_noise(photo: &SyntheticPhoto, noise_px: f64, seed: u64) -> SyntheticPhoto {
    let mut out = photo.clone();
    out.truth.spec.noise_px = noise_px;
    if noise_px == 0.0 {
        return out;
    }
    let (w, h) = (photo.observed.image_width as f64, photo.observed.image_height as f64);
    for (id, p) in &mut out.observed.observations {
        let mut rng = rng::stream(seed, Purpose::Noise, &[id.0 as u64]);
        let du: f64 = rng.random_range(-1.0..=1.0);
        let dv: f64 = rng.random_range(-1.0..=1.0);
        *p = Point2::new((p.x + noise_px * du).clamp(0.0, w), (p.y + noise_px * dv).clamp(0.0, h));
    }
    out
}

// ---------------------------------------------------------------------------
// Photo set files

#[derive(Debug, Serialize, Deserialize)]
struct ObservationRow {
    photo_id: String,
    subject_id: String,
    landmark_name: String,
    u: f64,
    v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotoHeader {
    pub photo_id: String,
    pub image_width: u32,
    pub image_height: u32,
}

/// Evaluation-only record of how a photo was made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub photo_id: String,
    pub subject_id: String,
    pub replicate: usize,
    pub spec: PhotoSpec,
    pub camera: CameraModel,
    pub rotation_ypr_deg: [f64; 3],
    /// Row-major camera rotation.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSection {
    pub truth: Vec<TruthRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotoSetMeta {
    pub schema_version: u32,
    pub photos: Vec<PhotoHeader>,
    /// Ground truth; never handed to the solver.
    pub evaluation: EvaluationSection,
}

fn truth_record(photo: &SyntheticPhoto) -> TruthRecord {
    let t = &photo.truth;
    let (y, p, r) = t.pose.ypr_deg();
    let m = t.pose.rotation.matrix();
    TruthRecord {
        photo_id: photo.observed.photo_id.clone(),
        subject_id: t.subject_id.clone(),
        replicate: t.replicate,
        spec: t.spec,
        camera: t.camera,
        rotation_ypr_deg: [y, p, r],
        rotation: std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)])),
        translation: [t.pose.translation.x, t.pose.translation.y, t.pose.translation.z],
    }
}

/// Writes the observation CSV and its `.meta.toml` sidecar.
pub fn save_photo_set(photos: &[SyntheticPhoto], path: &Path, registry: &Registry) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    for photo in photos {
        for (id, p) in &photo.observed.observations {
            w.serialize(ObservationRow {
                photo_id: photo.observed.photo_id.clone(),
                subject_id: photo.truth.subject_id.clone(),
                landmark_name: registry.name(*id).into(),
                u: p.x,
                v: p.y,
            })
            .map_err(|e| csv_io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let meta = PhotoSetMeta {
        schema_version: PHOTO_SCHEMA_VERSION,
        photos: photos
            .iter()
            .map(|p| PhotoHeader {
                photo_id: p.observed.photo_id.clone(),
                image_width: p.observed.image_width,
                image_height: p.observed.image_height,
            })
            .collect(),
        evaluation: EvaluationSection { truth: photos.iter().map(truth_record).collect() },
    };
    let sidecar = path.with_extension("meta.toml");
    std::fs::write(&sidecar, toml::to_string_pretty(&meta).expect("photo metadata serializes"))
        .map_err(|e| Error::io(&sidecar, e))
}

/// Reads a photo set back into full photos (observations plus ground truth).
pub fn load_photo_set(path: &Path, registry: &Registry) -> Result<Vec<SyntheticPhoto>> {
    let sidecar = path.with_extension("meta.toml");
    let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let meta: PhotoSetMeta =
        toml::from_str(&text).map_err(|e| Error::schema(sidecar.display().to_string(), e.to_string()))?;

    let mut photos: Vec<SyntheticPhoto> = meta
        .photos
        .iter()
        .zip(&meta.evaluation.truth)
        .map(|(h, t)| {
            if h.photo_id != t.photo_id {
                return Err(Error::schema(sidecar.display().to_string(), "photo and truth lists disagree"));
            }
            let m = Matrix3::from_fn(|i, j| t.rotation[i][j]);
            Ok(SyntheticPhoto {
                observed: PhotoObservations {
                    photo_id: h.photo_id.clone(),
                    image_width: h.image_width,
                    image_height: h.image_height,
                    observations: Vec::new(),
                },
                truth: GroundTruth {
                    subject_id: t.subject_id.clone(),
                    replicate: t.replicate,
                    spec: t.spec,
                    camera: t.camera,
                    pose: RigidPose::new(Rotation3::from_matrix_unchecked(m), Vector3::from(t.translation)),
                },
            })
        })
        .collect::<Result<_>>()?;
    if meta.photos.len() != meta.evaluation.truth.len() {
        return Err(Error::schema(sidecar.display().to_string(), "photo and truth lists disagree"));
    }
    let index: std::collections::HashMap<String, usize> =
        photos.iter().enumerate().map(|(i, p)| (p.observed.photo_id.clone(), i)).collect();

    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    for (i, row) in reader.deserialize::<ObservationRow>().enumerate() {
        let loc = format!("{}:{}", path.display(), i + 2);
        let row = row.map_err(|e| Error::schema(&loc, e.to_string()))?;
        let k =
            *index.get(&row.photo_id).ok_or_else(|| Error::schema(&loc, format!("unknown photo {}", row.photo_id)))?;
        let id = registry.lookup(&row.landmark_name)?;
        photos[k].observed.observations.push((id, Point2::new(row.u, row.v)));
    }
    for p in &mut photos {
        p.observed.observations.sort_by_key(|(id, _)| *id);
    }
    Ok(photos)
}
