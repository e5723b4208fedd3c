//! Skull-face overlay: estimating the camera that best superimposes a set of
//! 3D landmarks onto the 2D landmarks of a photograph, and scoring the fit.
//!
//! The unknowns are the camera rotation (3), translation (3) and focal (1);
//! the principal point stays at the image centre. Estimation is in two stages:
//!
//! 1. Initializations. [`linear_candidate`] solves the projection linearly
//!    when there are at least six correspondences, which is exact on
//!    noiseless data. [`initial_candidates`] fits a weak-perspective (scaled
//!    orthographic) camera: the model is viewed along each of the 26
//!    directions of the 3×3×3 grid, and along the depth-reversed twin of each
//!    view, and a 2D similarity (rotation, scale, translation) is fitted in
//!    closed form to the observations.
//! 2. [`refine`]: damped Gauss-Newton (Levenberg-Marquardt) on the sum of
//!    squared reprojection residuals, with the rotation updated on the left
//!    by the exponential map of a 3-vector about the model centroid. A slow
//!    refinement switches to the full Hessian.
//!
//! [`solve`] refines the linear estimate and the best few weak-perspective
//! starts (every one of them for small problems) and keeps the lowest final
//! cost. The similarity score is the RMSE of the reprojection residuals in
//! pixels.

use nalgebra::{Matrix3, Rotation3, SMatrix, SVector, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraModel, Point2, Point3, RigidPose, EPSILON_DEPTH};
use crate::landmarks::LandmarkId;
use crate::photo::PhotoObservations;
use crate::{Error, Result};

pub const PARAMS: usize = 7;
pub const DEFAULT_FOCAL_BOUNDS: [f64; 2] = [0.1, 10.0];
/// Number of weak-perspective initializations: the grid directions and their
/// depth-reversed twins.
pub const CANDIDATES: usize = 52;
type Mat7 = SMatrix<f64, PARAMS, PARAMS>;
type Vec7 = SVector<f64, PARAMS>;

/// Correspondences between predicted 3D landmarks and photo observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SfoProblem {
    pub ids: Vec<LandmarkId>,
    pub model: Vec<Point3>,
    pub observed: Vec<Point2>,
    pub image_width: u32,
    pub image_height: u32,
    /// Model centroid. Rotation steps turn the model about this point, which
    /// keeps rotation and translation nearly decoupled.
    pub pivot: Point3,
}

impl SfoProblem {
    /// Matches model points and observations by landmark id. Landmarks seen
    /// in the photo but missing from the model are dropped.
    pub fn new(model_points: &[(LandmarkId, Point3)], photo: &PhotoObservations) -> Result<Self> {
        Self::from_parts(model_points, &photo.observations, photo.image_width, photo.image_height)
    }

    pub fn from_parts(
        model_points: &[(LandmarkId, Point3)],
        observations: &[(LandmarkId, Point2)],
        image_width: u32,
        image_height: u32,
    ) -> Result<Self> {
        let mut ids = Vec::new();
        let mut model = Vec::new();
        let mut observed = Vec::new();
        for (k, (id, p)) in observations.iter().enumerate() {
            if observations[..k].iter().any(|(j, _)| j == id) {
                return Err(Error::DegenerateConfiguration(format!("duplicate observation of landmark {}", id.0)));
            }
            let mut matches = model_points.iter().filter(|(j, _)| j == id);
            if let Some((_, m)) = matches.next() {
                if matches.next().is_some() {
                    return Err(Error::DegenerateConfiguration(format!("duplicate model landmark {}", id.0)));
                }
                ids.push(*id);
                model.push(*m);
                observed.push(*p);
            }
        }
        if ids.len() < 4 {
            return Err(Error::DegenerateConfiguration(format!("{} correspondences (need at least 4)", ids.len())));
        }
        let pivot = Point3::from(model.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / model.len() as f64);
        Ok(SfoProblem { ids, model, observed, image_width, image_height, pivot })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn principal(&self) -> [f64; 2] {
        [self.image_width as f64 / 2.0, self.image_height as f64 / 2.0]
    }

    pub fn camera(&self, focal: f64) -> CameraModel {
        CameraModel::centered(focal, self.image_width, self.image_height)
    }

    /// Parameters moved by a step `[δrot, δt, δf]`. The rotation is applied
    /// on the left about the pivot, so `δt` moves the pivot.
    pub fn step(&self, params: &CameraParams, delta: &[f64; PARAMS]) -> CameraParams {
        let w = Vector3::new(delta[0], delta[1], delta[2]);
        let mut rotation = Rotation3::new(w) * params.pose.rotation;
        rotation.renormalize();
        let c = self.pivot.coords;
        let translation = params.pose.translation + params.pose.rotation * c - rotation * c
            + Vector3::new(delta[3], delta[4], delta[5]);
        CameraParams { pose: RigidPose::new(rotation, translation), focal: params.focal + delta[6] }
    }
}

/// Camera parameters being estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraParams {
    pub pose: RigidPose,
    pub focal: f64,
}

impl CameraParams {
    pub fn new(pose: RigidPose, focal: f64) -> Self {
        CameraParams { pose, focal }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMetric {
    /// Root mean square residual norm.
    #[default]
    Rmse,
    /// Mean residual norm.
    Mae,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Number of weak-perspective initializations refined.
    pub starts: usize,
    /// Problems with fewer correspondences than this refine `small_starts`
    /// initializations instead. They have no linear estimate, more local
    /// minima, and each refinement is cheap.
    pub small_below: usize,
    pub small_starts: usize,
    pub step_tolerance: f64,
    pub cost_tolerance: f64,
    pub metric: SimilarityMetric,
    /// Scale (pixels) of an optional Cauchy loss; `None` is plain least squares.
    pub cauchy_scale_px: Option<f64>,
    /// Box constraint on the focal. For a poorly matching skull the cost
    /// can keep falling towards the orthographic limit (focal and depth both
    /// growing without bound); the box stops that drift.
    pub focal_bounds: [f64; 2],
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 200,
            starts: 2,
            small_below: 7,
            small_starts: CANDIDATES,
            step_tolerance: 1e-10,
            cost_tolerance: 1e-12,
            metric: SimilarityMetric::Rmse,
            cauchy_scale_px: None,
            focal_bounds: DEFAULT_FOCAL_BOUNDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfoSolution {
    pub pose: RigidPose,
    pub focal: f64,
    /// Reprojection residual `projected - observed` per landmark, pixels.
    pub residuals: Vec<(LandmarkId, [f64; 2])>,
    pub similarity: f64,
    /// Half the sum of squared residuals.
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Reprojection residuals `[u0, v0, u1, v1, ...]`; `None` if a point is not in
/// front of the camera.
pub fn residuals(problem: &SfoProblem, params: &CameraParams) -> Option<Vec<f64>> {
    let [cx, cy] = problem.principal();
    let fw = params.focal * problem.image_width as f64;
    let mut out = Vec::with_capacity(2 * problem.len());
    for (p, o) in problem.model.iter().zip(&problem.observed) {
        let x = params.pose.rotation * p.coords + params.pose.translation;
        if x.z <= EPSILON_DEPTH {
            return None;
        }
        out.push(cx + fw * x.x / x.z - o.x);
        out.push(cy + fw * x.y / x.z - o.y);
    }
    Some(out)
}

/// Analytic Jacobian of [`residuals`] with respect to `[δrot, δt, δf]` at
/// `params`, one row per residual.
pub fn jacobian(problem: &SfoProblem, params: &CameraParams) -> Option<Vec<[f64; PARAMS]>> {
    let mut rows = Vec::with_capacity(2 * problem.len());
    for_each_point(problem, params, |_, ju, jv| {
        rows.push(ju);
        rows.push(jv);
    })?;
    Some(rows)
}

/// Calls `f(residual, d residual_u, d residual_v)` per correspondence.
#[inline]
fn for_each_point(
    problem: &SfoProblem,
    params: &CameraParams,
    mut f: impl FnMut([f64; 2], [f64; PARAMS], [f64; PARAMS]),
) -> Option<()> {
    let [cx, cy] = problem.principal();
    let w = problem.image_width as f64;
    let fw = params.focal * w;
    let r = params.pose.rotation.matrix();
    let t = params.pose.translation;
    let pivot = problem.pivot.coords;
    for (p, o) in problem.model.iter().zip(&problem.observed) {
        // Pivot-relative position, rotated; the lever arm of a rotation step.
        let q = r * (p.coords - pivot);
        let x = r * p.coords + t;
        if x.z <= EPSILON_DEPTH {
            return None;
        }
        let iz = 1.0 / x.z;
        let (xn, yn) = (x.x * iz, x.y * iz);
        let res = [cx + fw * xn - o.x, cy + fw * yn - o.y];
        // d(u, v)/dX
        let a = fw * iz;
        let du = [a, 0.0, -a * xn];
        let dv = [0.0, a, -a * yn];
        // dX/dδ_k = e_k × q
        let cols = [[0.0, -q.z, q.y], [q.z, 0.0, -q.x], [-q.y, q.x, 0.0]];
        let dot = |g: &[f64; 3], c: &[f64; 3]| g[0] * c[0] + g[1] * c[1] + g[2] * c[2];
        let ju = [dot(&du, &cols[0]), dot(&du, &cols[1]), dot(&du, &cols[2]), du[0], du[1], du[2], w * xn];
        let jv = [dot(&dv, &cols[0]), dot(&dv, &cols[1]), dot(&dv, &cols[2]), dv[0], dv[1], dv[2], w * yn];
        f(res, ju, jv);
    }
    Some(())
}

fn robust_cost(residuals: &[f64], cauchy: Option<f64>) -> f64 {
    match cauchy {
        None => 0.5 * residuals.iter().map(|r| r * r).sum::<f64>(),
        Some(c) => {
            let c2 = c * c;
            residuals.chunks_exact(2).map(|r| 0.5 * c2 * (1.0 + (r[0] * r[0] + r[1] * r[1]) / c2).ln()).sum()
        }
    }
}

fn cost_at(problem: &SfoProblem, params: &CameraParams, cauchy: Option<f64>) -> f64 {
    if !(params.focal > 0.0) {
        return f64::INFINITY;
    }
    match residuals(problem, params) {
        Some(r) => robust_cost(&r, cauchy),
        None => f64::INFINITY,
    }
}

/// Weak-perspective initializations, best first. The candidates are the grid
/// view directions and their depth-reversed twins, ranked by weak-perspective
/// residual.
pub fn initial_candidates(problem: &SfoProblem, count: usize) -> Result<Vec<CameraParams>> {
    let n = problem.len() as f64;
    let centroid = problem.model.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let centered: Vec<Vector3<f64>> = problem.model.iter().map(|p| p.coords - centroid).collect();
    let cov = centered.iter().fold(Matrix3::zeros(), |a, d| a + d * d.transpose()) / n;
    let eigen = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));
    let ev = order.map(|i| eigen.eigenvalues[i]);
    if !(ev[0] > 0.0) || ev[1] <= 1e-12 * ev[0] {
        return Err(Error::DegenerateConfiguration("model points are collinear".into()));
    }
    // Reflecting the model through its best-fit plane and the camera through
    // the image plane leaves a weak-perspective image of a flat model
    // unchanged: the depth-reversal ambiguity.
    let normal: Vector3<f64> = eigen.eigenvectors.column(order[2]).into_owned();
    let reverse_depth = |r: &Rotation3<f64>| -> Rotation3<f64> {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0))
            * r.matrix()
            * (Matrix3::identity() - 2.0 * normal * normal.transpose());
        Rotation3::from_matrix_unchecked(m)
    };
    let radius = centered.iter().map(|d| d.norm()).fold(0.0, f64::max);

    let obs_centroid = problem.observed.iter().fold(Vector3::zeros(), |a, p| a + Vector3::new(p.x, p.y, 0.0)) / n;
    let obs: Vec<(f64, f64)> = problem.observed.iter().map(|p| (p.x - obs_centroid.x, p.y - obs_centroid.y)).collect();
    let obs_energy: f64 = obs.iter().map(|(u, v)| u * u + v * v).sum();

    // Best in-plane rotation and scale for a camera orientation, by complex
    // least squares: o ≈ z q, z = Σ conj(q) o / Σ |q|².
    let fit = |view: &Rotation3<f64>| -> Option<(f64, Rotation3<f64>, f64)> {
        let m = view.matrix();
        let (mut re, mut im, mut qq) = (0.0, 0.0, 0.0);
        for (d, (u, v)) in centered.iter().zip(&obs) {
            let a = m[(0, 0)] * d.x + m[(0, 1)] * d.y + m[(0, 2)] * d.z;
            let b = m[(1, 0)] * d.x + m[(1, 1)] * d.y + m[(1, 2)] * d.z;
            re += a * u + b * v;
            im += a * v - b * u;
            qq += a * a + b * b;
        }
        if !(qq > 0.0) {
            return None;
        }
        let residual = obs_energy - (re * re + im * im) / qq;
        let scale = (re * re + im * im).sqrt() / qq;
        Some((residual, Rotation3::from_axis_angle(&Vector3::z_axis(), im.atan2(re)) * view, scale))
    };
    let mut scored: Vec<(f64, usize, Rotation3<f64>, f64)> = Vec::with_capacity(CANDIDATES);
    for (k, dir) in grid_directions().into_iter().enumerate() {
        if let Some((residual, rotation, scale)) = fit(&view_rotation(&dir)) {
            scored.push((residual, 2 * k, rotation, scale));
            if let Some((residual, rotation, scale)) = fit(&reverse_depth(&rotation)) {
                scored.push((residual, 2 * k + 1, rotation, scale));
            }
        }
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let [cx, cy] = problem.principal();
    let focal = 1.0;
    let fw = focal * problem.image_width as f64;
    let candidates: Vec<CameraParams> = scored
        .into_iter()
        .take(count)
        .map(|(_, _, rotation, scale)| {
            let rc = rotation * centroid;
            let mut depth = if scale > 0.0 { fw / scale } else { 10.0 * radius };
            // Keep the whole model in front of the camera.
            depth = depth.max(2.0 * radius).max(1e-6);
            let xc = Vector3::new((obs_centroid.x - cx) * depth / fw, (obs_centroid.y - cy) * depth / fw, depth);
            CameraParams::new(RigidPose::new(rotation, xc - rc), focal)
        })
        .collect();
    if candidates.is_empty() {
        return Err(Error::DegenerateConfiguration("no usable view direction".into()));
    }
    Ok(candidates)
}

/// Direct linear estimate of the projection from at least six
/// correspondences, decomposed into a camera. `None` when the points are too
/// few, nearly coplanar, or the estimate is not a valid camera.
pub fn linear_candidate(problem: &SfoProblem, focal_bounds: [f64; 2]) -> Option<CameraParams> {
    let n = problem.len();
    if n < 6 {
        return None;
    }
    let [cx, cy] = problem.principal();
    let w = problem.image_width as f64;
    let c = problem.pivot.coords;
    let spread = (problem.model.iter().map(|p| (p.coords - c).norm_squared()).sum::<f64>() / n as f64).sqrt();
    if !(spread > 0.0) {
        return None;
    }
    let mut ata = SMatrix::<f64, 12, 12>::zeros();
    for (p, o) in problem.model.iter().zip(&problem.observed) {
        let d = (p.coords - c) / spread;
        let xh = [d.x, d.y, d.z, 1.0];
        let (x, y) = ((o.x - cx) / w, (o.y - cy) / w);
        for (img, row_block) in [(x, 0), (y, 4)] {
            let mut row = SVector::<f64, 12>::zeros();
            for k in 0..4 {
                row[row_block + k] = -xh[k];
                row[8 + k] = img * xh[k];
            }
            ata += row * row.transpose();
        }
    }
    let eigen = SymmetricEigen::new(ata);
    let (imin, _) = eigen.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    let v = eigen.eigenvectors.column(imin);
    let mut p = nalgebra::Matrix3x4::from_fn(|i, j| v[4 * i + j]);
    if p.fixed_view::<3, 3>(0, 0).determinant() < 0.0 {
        p = -p;
    }
    let rows = |i: usize| Vector3::new(p[(i, 0)], p[(i, 1)], p[(i, 2)]);
    let (r1, r2, r3) = (rows(0), rows(1), rows(2));
    let scale = r3.norm();
    let focal = 0.5 * (r1.norm() + r2.norm()) / scale;
    if !(focal >= focal_bounds[0] && focal <= focal_bounds[1]) {
        return None;
    }
    let m = Matrix3::from_rows(&[
        (r1 / (focal * scale)).transpose(),
        (r2 / (focal * scale)).transpose(),
        (r3 / scale).transpose(),
    ]);
    // Nearest rotation.
    let svd = m.svd(true, true);
    let rot = svd.u? * svd.v_t?;
    if rot.determinant() <= 0.0 {
        return None;
    }
    let t = Vector3::new(p[(0, 3)] / (focal * scale), p[(1, 3)] / (focal * scale), p[(2, 3)] / scale) * spread;
    let rotation = Rotation3::from_matrix_unchecked(rot);
    let params = CameraParams::new(RigidPose::new(rotation, t - rotation * c), focal);
    cost_at(problem, &params, None).is_finite().then_some(params)
}

/// The best weak-perspective initialization.
pub fn initialize(problem: &SfoProblem) -> Result<(RigidPose, f64)> {
    let c = initial_candidates(problem, 1)?[0];
    Ok((c.pose, c.focal))
}

/// The 26 non-zero directions of `{-1, 0, 1}³`, normalized.
pub fn grid_directions() -> Vec<Vector3<f64>> {
    let mut dirs = Vec::with_capacity(26);
    for i in -1..=1 {
        for j in -1..=1 {
            for k in -1..=1 {
                if (i, j, k) != (0, 0, 0) {
                    dirs.push(Vector3::new(i as f64, j as f64, k as f64).normalize());
                }
            }
        }
    }
    dirs
}

/// A camera rotation whose optical axis (third row) is `dir`.
fn view_rotation(dir: &Vector3<f64>) -> Rotation3<f64> {
    let up = if dir.y.abs() < 0.9 { Vector3::y() } else { Vector3::z() };
    let a = up.cross(dir).normalize();
    let b = dir.cross(&a);
    Rotation3::from_matrix_unchecked(Matrix3::from_rows(&[a.transpose(), b.transpose(), dir.transpose()]))
}

const NEWTON_AFTER: usize = 30;

/// Gauss-Newton matrix `JᵀWJ` and gradient `JᵀWr` of the cost.
fn normal_equations(problem: &SfoProblem, params: &CameraParams, cauchy: Option<f64>) -> Option<(Mat7, Vec7)> {
    let mut h = Mat7::zeros();
    let mut g = Vec7::zeros();
    for_each_point(problem, params, |r, ju, jv| {
        let weight = match cauchy {
            None => 1.0,
            Some(c) => 1.0 / (1.0 + (r[0] * r[0] + r[1] * r[1]) / (c * c)),
        };
        let ju = Vec7::from(ju);
        let jv = Vec7::from(jv);
        h += weight * (ju * ju.transpose() + jv * jv.transpose());
        g += weight * (ju * r[0] + jv * r[1]);
    })?;
    Some((h, g))
}

/// Hessian of the cost by central differences of the analytic gradient, with
/// steps sized to move the residuals by about 1e-4 px.
fn full_hessian(problem: &SfoProblem, params: &CameraParams, cauchy: Option<f64>, gn: &Mat7) -> Option<Mat7> {
    let mut h = Mat7::zeros();
    for k in 0..PARAMS {
        let step = 1e-4 / gn[(k, k)].max(1e-24).sqrt();
        let mut d = [0.0; PARAMS];
        d[k] = step;
        let (_, gp) = normal_equations(problem, &problem.step(params, &d), cauchy)?;
        d[k] = -step;
        let (_, gm) = normal_equations(problem, &problem.step(params, &d), cauchy)?;
        h.set_column(k, &((gp - gm) / (2.0 * step)));
    }
    let h = 0.5 * (h + h.transpose());
    h.iter().all(|v| v.is_finite()).then_some(h)
}

/// Levenberg-Marquardt refinement from one starting point.
pub fn refine(problem: &SfoProblem, init: &CameraParams, options: &SolverOptions) -> Result<SfoSolution> {
    let cauchy = options.cauchy_scale_px;
    let mut params = *init;
    params.focal = params.focal.clamp(options.focal_bounds[0], options.focal_bounds[1]);
    let mut cost = cost_at(problem, &params, cauchy);
    if !cost.is_finite() {
        return Err(Error::NumericalFailure("initial cost is not finite".into()));
    }
    let mut lambda = 1e-4;
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < options.max_iters {
        if cost == 0.0 {
            converged = true;
            break;
        }
        let (gn, mut g) = normal_equations(problem, &params, cauchy)
            .ok_or_else(|| Error::NumericalFailure("point behind the camera".into()))?;
        if !gn.iter().chain(g.iter()).all(|v| v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite Jacobian".into()));
        }
        iterations += 1;
        // Gauss-Newton ignores the curvature of the residuals, which leaves it
        // zig-zagging down narrow valleys when the residuals stay large. A
        // refinement still running after a few iterations switches to the
        // full Hessian.
        let mut h =
            if iterations > NEWTON_AFTER { full_hessian(problem, &params, cauchy, &gn).unwrap_or(gn) } else { gn };
        let scale = gn.diagonal();

        // Hold the focal on a bound the gradient pushes against.
        let [f_lo, f_hi] = options.focal_bounds;
        let pinned = (params.focal >= f_hi && g[6] < 0.0) || (params.focal <= f_lo && g[6] > 0.0);
        if pinned {
            for i in 0..PARAMS {
                h[(6, i)] = 0.0;
                h[(i, 6)] = 0.0;
            }
            h[(6, 6)] = 1.0;
            g[6] = 0.0;
        }

        loop {
            let mut damped = h;
            for i in 0..PARAMS {
                damped[(i, i)] += lambda * scale[i].max(1e-12);
            }
            let step = match damped.cholesky() {
                Some(ch) => -ch.solve(&g),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        break 'outer;
                    }
                    continue;
                }
            };
            if step.norm() < options.step_tolerance {
                converged = true;
                break 'outer;
            }
            let mut candidate = problem.step(&params, &step.into());
            candidate.focal = candidate.focal.clamp(f_lo, f_hi);
            let new_cost = cost_at(problem, &candidate, cauchy);
            if new_cost < cost {
                let decrease = (cost - new_cost) / cost;
                params = candidate;
                cost = new_cost;
                lambda = (lambda * 0.1).max(1e-12);
                if decrease < options.cost_tolerance {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                break 'outer;
            }
        }
    }

    let r = residuals(problem, &params).ok_or_else(|| Error::NumericalFailure("point behind the camera".into()))?;
    let residuals: Vec<(LandmarkId, [f64; 2])> =
        problem.ids.iter().zip(r.chunks_exact(2)).map(|(id, c)| (*id, [c[0], c[1]])).collect();
    let mut solution = SfoSolution {
        pose: params.pose,
        focal: params.focal,
        residuals,
        similarity: 0.0,
        cost: 0.5 * r.iter().map(|v| v * v).sum::<f64>(),
        converged,
        iterations,
    };
    solution.similarity = score(&solution, options.metric);
    if !solution.similarity.is_finite() {
        return Err(Error::NumericalFailure("non-finite similarity".into()));
    }
    Ok(solution)
}

/// Multi-start overlay: refines the linear estimate and the top
/// weak-perspective initializations, keeping the lowest final cost (ties keep
/// the earlier start).
pub fn solve(problem: &SfoProblem, options: &SolverOptions) -> Result<SfoSolution> {
    let mut best: Option<SfoSolution> = None;
    let mut last_err = None;
    let count = if problem.len() < options.small_below { options.small_starts } else { options.starts }.max(1);
    let starts = linear_candidate(problem, options.focal_bounds).into_iter().chain(initial_candidates(problem, count)?);
    for init in starts {
        match refine(problem, &init, options) {
            Ok(s) => {
                if best.as_ref().map_or(true, |b| objective(&s, options) < objective(b, options)) {
                    best = Some(s);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::NumericalFailure("no start succeeded".into())))
}

fn objective(s: &SfoSolution, options: &SolverOptions) -> f64 {
    match options.cauchy_scale_px {
        None => s.cost,
        Some(c) => {
            let flat: Vec<f64> = s.residuals.iter().flat_map(|(_, r)| *r).collect();
            robust_cost(&flat, Some(c))
        }
    }
}

/// Similarity of an overlay from its stored residuals, in pixels; lower is
/// better.
pub fn score(solution: &SfoSolution, metric: SimilarityMetric) -> f64 {
    let n = solution.residuals.len() as f64;
    if n == 0.0 {
        return f64::INFINITY;
    }
    let sq = solution.residuals.iter().map(|(_, r)| r[0] * r[0] + r[1] * r[1]);
    match metric {
        SimilarityMetric::Rmse => (sq.sum::<f64>() / n).sqrt(),
        SimilarityMetric::Mae => sq.map(f64::sqrt).sum::<f64>() / n,
    }
}
