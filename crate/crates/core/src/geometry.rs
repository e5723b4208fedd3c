//! Points, rigid poses, the pinhole camera and population alignment.
//!
//! Scene frame convention (also the aligned frame produced by [`pca_align`]):
//! `x` points toward the subject's left, `y` points down (inferior) and `z`
//! points into the head (posterior). A camera with identity rotation therefore
//! looks at the face from the front, with image `u` to the right and `v` down.

use nalgebra::{Matrix3, Rotation3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::landmarks::{LandmarkId, Laterality, Registry};
use crate::population::SubjectRecord;
use crate::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Point2 = nalgebra::Point2<f64>;

/// Points closer than this to the camera plane cannot be projected.
pub const EPSILON_DEPTH: f64 = 1e-9;

/// Camera-from-scene rigid transform: `X_cam = rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidPose {
    pub fn identity() -> Self {
        RigidPose { rotation: Rotation3::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        RigidPose { rotation, translation }
    }

    /// Intrinsic yaw (about `y`), then pitch (about `x`), then roll (about
    /// `z`), in degrees: `R = Ry(yaw) * Rx(pitch) * Rz(roll)`.
    pub fn from_ypr_deg(yaw: f64, pitch: f64, roll: f64, translation: Vector3<f64>) -> Self {
        RigidPose { rotation: rotation_from_ypr_deg(yaw, pitch, roll), translation }
    }

    /// Inverse of [`RigidPose::from_ypr_deg`]; pitch is reported in [-90, 90].
    pub fn ypr_deg(&self) -> (f64, f64, f64) {
        let m = self.rotation.matrix();
        let pitch = (-m[(1, 2)]).clamp(-1.0, 1.0).asin();
        let yaw = m[(0, 2)].atan2(m[(2, 2)]);
        let roll = m[(1, 0)].atan2(m[(1, 1)]);
        (yaw.to_degrees(), pitch.to_degrees(), roll.to_degrees())
    }

    pub fn transform(&self, p: &Point3) -> Vector3<f64> {
        self.rotation * p.coords + self.translation
    }

    /// Largest deviation of `RᵀR` from identity, plus `|det R - 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let m = self.rotation.matrix();
        let e = (m.transpose() * m - Matrix3::identity()).abs().max();
        e.max((m.determinant() - 1.0).abs())
    }
}

pub fn rotation_from_ypr_deg(yaw: f64, pitch: f64, roll: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), yaw.to_radians())
        * Rotation3::from_axis_angle(&Vector3::x_axis(), pitch.to_radians())
        * Rotation3::from_axis_angle(&Vector3::z_axis(), roll.to_radians())
}

/// Pinhole camera without distortion or skew.
///
/// `focal` is a multiplier of the image width: the focal length in pixels is
/// `focal * image_width`, so focal 0.5 gives a 90° horizontal field of view
/// and focal 1.5 about 37°.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub focal: f64,
    pub principal_point: [f64; 2],
    pub image_width: u32,
    pub image_height: u32,
}

impl CameraModel {
    /// Camera with the principal point at the image centre.
    pub fn centered(focal: f64, image_width: u32, image_height: u32) -> Self {
        CameraModel {
            focal,
            principal_point: [image_width as f64 / 2.0, image_height as f64 / 2.0],
            image_width,
            image_height,
        }
    }

    pub fn focal_px(&self) -> f64 {
        self.focal * self.image_width as f64
    }

    pub fn principal(&self) -> Point2 {
        Point2::new(self.principal_point[0], self.principal_point[1])
    }

    pub fn contains(&self, p: &Point2) -> bool {
        (0.0..=self.image_width as f64).contains(&p.x) && (0.0..=self.image_height as f64).contains(&p.y)
    }
}

/// Perspective projection of a scene point through `pose` and `camera`.
pub fn project(camera: &CameraModel, pose: &RigidPose, p: &Point3) -> Result<Point2> {
    project_camera_point(camera, &pose.transform(p))
}

pub(crate) fn project_camera_point(camera: &CameraModel, x: &Vector3<f64>) -> Result<Point2> {
    if x.z <= EPSILON_DEPTH {
        return Err(Error::NonPositiveDepth { depth: x.z });
    }
    let f = camera.focal_px();
    Ok(Point2::new(camera.principal_point[0] + f * x.x / x.z, camera.principal_point[1] + f * x.y / x.z))
}

/// Rigid map from a subject's dataset frame into the common aligned frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTransform {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl AlignmentTransform {
    pub fn identity() -> Self {
        AlignmentTransform { rotation: Rotation3::identity(), translation: Vector3::zeros() }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn invert(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation.inverse() * (p.coords - self.translation))
    }
}

/// Relative eigenvalue below which the bone cloud counts as rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;
/// Relative cue magnitude below which an anatomical sign cue is ignored.
const CUE_TOLERANCE: f64 = 1e-6;

/// Per-subject PCA frame of the present bone landmarks.
///
/// The centroid goes to the origin and each principal axis to a coordinate
/// axis. Axis assignment and signs are anatomical so that every subject lands
/// in the same orientation:
///
/// * `x` is the principal axis best aligned with the left-minus-right landmark
///   offset, pointing left;
/// * of the two remaining axes the one with larger variance is `y`, the other
///   `z`, and `z` is signed so the mean midline landmark lies anterior
///   (negative `z`);
/// * `y = z × x` keeps the frame right handed.
///
/// Without bilateral or midline landmarks the assignment falls back to
/// variance order, and signs to positive skew, then to the first landmark with
/// a non-negligible coordinate.
pub fn pca_frame(points: &[(LandmarkId, Point3)], registry: &Registry) -> Result<AlignmentTransform> {
    if points.len() < 3 {
        return Err(Error::DegenerateCloud(format!("{} landmarks present", points.len())));
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector3::zeros(), |acc, (_, p)| acc + p.coords) / n;
    let centered: Vec<(LandmarkId, Vector3<f64>)> = points.iter().map(|(id, p)| (*id, p.coords - centroid)).collect();
    let cov = centered.iter().fold(Matrix3::zeros(), |acc, (_, d)| acc + d * d.transpose()) / n;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    if !(values[0] > 0.0) || values[2] <= RANK_TOLERANCE * values[0] {
        return Err(Error::DegenerateCloud(format!(
            "covariance eigenvalues {:.3e}, {:.3e}, {:.3e}",
            values[0], values[1], values[2]
        )));
    }
    let axes: Vec<Vector3<f64>> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    let scale = values[0].sqrt();

    let mean_of = |lat: Laterality| -> Option<Vector3<f64>> {
        let sel: Vec<_> = centered.iter().filter(|(id, _)| registry.get(*id).laterality == lat).collect();
        (!sel.is_empty()).then(|| sel.iter().fold(Vector3::zeros(), |a, (_, d)| a + d) / sel.len() as f64)
    };
    let lateral_cue = match (mean_of(Laterality::Left), mean_of(Laterality::Right)) {
        (Some(l), Some(r)) if (l - r).norm() > CUE_TOLERANCE * scale => Some(l - r),
        _ => None,
    };
    let anterior_cue = mean_of(Laterality::Midline).map(|m| -m);

    let (x_idx, y_idx, z_idx) = match lateral_cue {
        Some(cue) => {
            let x = (0..3).max_by(|&a, &b| axes[a].dot(&cue).abs().total_cmp(&axes[b].dot(&cue).abs())).unwrap();
            let rest: Vec<usize> = (0..3).filter(|&i| i != x).collect();
            (x, rest[0], rest[1])
        }
        None => (0, 1, 2),
    };

    let x_axis = orient(axes[x_idx], lateral_cue, &centered, scale);
    let (y_axis, z_axis) = if lateral_cue.is_some() {
        let z = orient(axes[z_idx], anterior_cue, &centered, scale);
        (z.cross(&x_axis), z)
    } else {
        let y = orient(axes[y_idx], None, &centered, scale);
        (y, x_axis.cross(&y))
    };

    let m = Matrix3::from_rows(&[x_axis.transpose(), y_axis.transpose(), z_axis.transpose()]);
    let rotation = Rotation3::from_matrix_unchecked(m);
    Ok(AlignmentTransform { rotation, translation: -(rotation * centroid) })
}

fn orient(
    axis: Vector3<f64>,
    cue: Option<Vector3<f64>>,
    centered: &[(LandmarkId, Vector3<f64>)],
    scale: f64,
) -> Vector3<f64> {
    if let Some(c) = cue {
        let d = axis.dot(&c);
        if d.abs() > CUE_TOLERANCE * scale {
            return if d > 0.0 { axis } else { -axis };
        }
    }
    let n = centered.len() as f64;
    let third = centered.iter().map(|(_, d)| axis.dot(d).powi(3)).sum::<f64>() / n;
    if third.abs() > CUE_TOLERANCE * scale.powi(3) {
        return if third > 0.0 { axis } else { -axis };
    }
    let mut sorted: Vec<_> = centered.to_vec();
    sorted.sort_by_key(|(id, _)| *id);
    for (_, d) in sorted {
        let c = axis.dot(&d);
        if c.abs() > CUE_TOLERANCE * scale {
            return if c > 0.0 { axis } else { -axis };
        }
    }
    axis
}

/// Aligns each subject into the common frame using its own bone landmarks.
///
/// Skin landmarks follow the same rigid map.
pub fn pca_align(
    subjects: &[SubjectRecord],
    registry: &Registry,
) -> Result<(Vec<SubjectRecord>, Vec<AlignmentTransform>)> {
    let mut aligned = Vec::with_capacity(subjects.len());
    let mut transforms = Vec::with_capacity(subjects.len());
    for s in subjects {
        let bone: Vec<(LandmarkId, Point3)> = s.present().map(|(id, e)| (id, e.bone)).collect();
        let t = pca_frame(&bone, registry).map_err(|e| match e {
            Error::DegenerateCloud(msg) => Error::DegenerateCloud(format!("subject {}: {msg}", s.subject_id)),
            other => other,
        })?;
        aligned.push(s.transformed(&t));
        transforms.push(t);
    }
    Ok((aligned, transforms))
}
