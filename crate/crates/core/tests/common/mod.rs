//! Brute-force reference implementations used by the integration tests.
//!
//! Nothing here calls into the crate's solver or ranking code: the camera is
//! parameterized by Euler angles, searched on a dense rotation grid, polished
//! with Nelder-Mead and finished with finite-difference Gauss-Newton.

#![allow(dead_code)]

use cfsim::fstt::{predict, FsttConfig};
use cfsim::generator::{generate_population, GeneratorSpec};
use cfsim::photo::{render, sample_spec, CloudPoint, PoseClass, SyntheticPhoto, VisibilityModel};
use cfsim::population::Population;
use cfsim::{LandmarkId, LandmarkSet};

pub type Params = [f64; 7];

/// One overlay problem in plain arrays.
#[derive(Debug, Clone)]
pub struct Instance {
    pub model: Vec<[f64; 3]>,
    pub observed: Vec<[f64; 2]>,
    pub width: f64,
    pub height: f64,
    pub focal_bounds: [f64; 2],
}

impl Instance {
    /// Matches model points and observations by landmark id.
    pub fn new(
        model: &[(LandmarkId, cfsim::Point3)],
        obs: &[(LandmarkId, cfsim::Point2)],
        width: u32,
        height: u32,
        focal_bounds: [f64; 2],
    ) -> Option<Instance> {
        let mut m = Vec::new();
        let mut o = Vec::new();
        for (id, p) in obs {
            if let Some((_, q)) = model.iter().find(|(j, _)| j == id) {
                m.push([q.x, q.y, q.z]);
                o.push([p.x, p.y]);
            }
        }
        (m.len() >= 4).then_some(Instance {
            model: m,
            observed: o,
            width: width as f64,
            height: height as f64,
            focal_bounds,
        })
    }
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

/// `Ry(yaw) Rx(pitch) Rz(roll)`, radians.
pub fn euler(yaw: f64, pitch: f64, roll: f64) -> [[f64; 3]; 3] {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sr, cr) = roll.sin_cos();
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]];
    let rz = [[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]];
    mat_mul(&mat_mul(&ry, &rx), &rz)
}

fn apply(r: &[[f64; 3]; 3], p: &[f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2])
}

/// Residuals `[u0 - o0, v0 - o0', ...]` or `None` outside the feasible set.
pub fn residuals(inst: &Instance, p: &Params) -> Option<Vec<f64>> {
    let f = p[6];
    if !(f >= inst.focal_bounds[0] && f <= inst.focal_bounds[1]) {
        return None;
    }
    let r = euler(p[0], p[1], p[2]);
    let mut out = Vec::with_capacity(2 * inst.model.len());
    for (m, o) in inst.model.iter().zip(&inst.observed) {
        let q = apply(&r, m);
        let (x, y, z) = (q[0] + p[3], q[1] + p[4], q[2] + p[5]);
        if z <= 1e-9 {
            return None;
        }
        out.push(inst.width / 2.0 + f * inst.width * x / z - o[0]);
        out.push(inst.height / 2.0 + f * inst.width * y / z - o[1]);
    }
    Some(out)
}

pub fn cost(inst: &Instance, p: &Params) -> f64 {
    residuals(inst, p).map_or(f64::INFINITY, |r| 0.5 * r.iter().map(|v| v * v).sum::<f64>())
}

/// Best translation for a fixed rotation and focal under weak perspective.
fn weak_fit(inst: &Instance, yaw: f64, pitch: f64, roll: f64, focal: f64) -> Option<Params> {
    let r = euler(yaw, pitch, roll);
    let n = inst.model.len() as f64;
    let q: Vec<[f64; 3]> = inst.model.iter().map(|m| apply(&r, m)).collect();
    let qm = [0, 1, 2].map(|i| q.iter().map(|v| v[i]).sum::<f64>() / n);
    let om = [0, 1].map(|i| inst.observed.iter().map(|v| v[i]).sum::<f64>() / n);
    let (mut num, mut den) = (0.0, 0.0);
    for (a, o) in q.iter().zip(&inst.observed) {
        let (dx, dy) = (a[0] - qm[0], a[1] - qm[1]);
        num += dx * (o[0] - om[0]) + dy * (o[1] - om[1]);
        den += dx * dx + dy * dy;
    }
    let s = num / den;
    if !(s > 0.0) {
        return None;
    }
    let fw = focal * inst.width;
    let depth = fw / s;
    let tx = (om[0] - inst.width / 2.0) * depth / fw - qm[0];
    let ty = (om[1] - inst.height / 2.0) * depth / fw - qm[1];
    Some([yaw, pitch, roll, tx, ty, depth - qm[2], focal])
}

pub fn nelder_mead(f: impl Fn(&Params) -> f64, start: Params, scale: Params, iters: usize) -> (Params, f64) {
    let mut simplex: Vec<(Params, f64)> = Vec::with_capacity(8);
    simplex.push((start, f(&start)));
    for i in 0..7 {
        let mut p = start;
        p[i] += scale[i];
        simplex.push((p, f(&p)));
    }
    let combine = |a: &Params, b: &Params, t: f64| -> Params { std::array::from_fn(|i| a[i] + t * (b[i] - a[i])) };
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let centroid: Params = std::array::from_fn(|i| simplex[..7].iter().map(|s| s.0[i]).sum::<f64>() / 7.0);
        let worst = simplex[7];
        let refl = combine(&centroid, &worst.0, -1.0);
        let fr = f(&refl);
        if fr < simplex[0].1 {
            let exp = combine(&centroid, &worst.0, -2.0);
            let fe = f(&exp);
            simplex[7] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < simplex[6].1 {
            simplex[7] = (refl, fr);
        } else {
            let con = combine(&centroid, &worst.0, 0.5);
            let fc = f(&con);
            if fc < worst.1 {
                simplex[7] = (con, fc);
            } else {
                let best = simplex[0].0;
                for s in simplex.iter_mut().skip(1) {
                    s.0 = combine(&best, &s.0, 0.5);
                    s.1 = f(&s.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve_linear(mut a: [[f64; 7]; 7], mut b: [f64; 7]) -> Option<[f64; 7]> {
    for c in 0..7 {
        let p = (c..7).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..7 {
            let k = a[r][c] / a[c][c];
            for j in c..7 {
                a[r][j] -= k * a[c][j];
            }
            b[r] -= k * b[c];
        }
    }
    let mut x = [0.0; 7];
    for r in (0..7).rev() {
        x[r] = (b[r] - (r + 1..7).map(|j| a[r][j] * x[j]).sum::<f64>()) / a[r][r];
    }
    Some(x)
}

/// Damped Gauss-Newton with a central-difference Jacobian. The focal is held
/// fixed while it sits on a bound.
pub fn fd_gauss_newton(inst: &Instance, mut p: Params, iters: usize) -> (Params, f64) {
    let mut c = cost(inst, &p);
    let mut mu = 1e-3;
    for _ in 0..iters {
        let Some(r) = residuals(inst, &p) else { break };
        let mut jac = vec![[0.0; 7]; r.len()];
        for k in 0..7 {
            let h = 1e-6 * p[k].abs().max(1.0);
            let (mut a, mut b) = (p, p);
            a[k] += h;
            b[k] -= h;
            let (Some(ra), Some(rb)) = (residuals_unbounded(inst, &a), residuals_unbounded(inst, &b)) else {
                return (p, c);
            };
            for i in 0..r.len() {
                jac[i][k] = (ra[i] - rb[i]) / (2.0 * h);
            }
        }
        let mut jtj = [[0.0; 7]; 7];
        let mut jtr = [0.0; 7];
        for (row, ri) in jac.iter().zip(&r) {
            for a in 0..7 {
                jtr[a] += row[a] * ri;
                for b in 0..7 {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        let [lo, hi] = inst.focal_bounds;
        if (p[6] >= hi && jtr[6] < 0.0) || (p[6] <= lo && jtr[6] > 0.0) {
            for a in 0..7 {
                jtj[6][a] = 0.0;
                jtj[a][6] = 0.0;
            }
            jtj[6][6] = 1.0;
            jtr[6] = 0.0;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut m = jtj;
            for a in 0..7 {
                m[a][a] += mu * jtj[a][a].max(1e-12);
            }
            let Some(step) = solve_linear(m, jtr.map(|v| -v)) else { break };
            let mut q: Params = std::array::from_fn(|i| p[i] + step[i]);
            q[6] = q[6].clamp(lo, hi);
            let cq = cost(inst, &q);
            if cq < c {
                improved = c - cq > 1e-15 * c;
                p = q;
                c = cq;
                mu = (mu * 0.3).max(1e-12);
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (p, c)
}

fn residuals_unbounded(inst: &Instance, p: &Params) -> Option<Vec<f64>> {
    let wide = Instance { focal_bounds: [1e-12, f64::MAX], ..inst.clone() };
    residuals(&wide, p)
}

/// Global minimum of the overlay cost: exhaustive grid over rotation and
/// log-spaced focal, then polishing of the best cells.
pub fn brute_force(inst: &Instance) -> (Params, f64) {
    let deg = std::f64::consts::PI / 180.0;
    let [lo, hi] = inst.focal_bounds;
    let focals: Vec<f64> = (0..9).map(|k| lo * (hi / lo).powf(k as f64 / 8.0)).collect();
    let mut cells: Vec<(f64, Params)> = Vec::new();
    for yi in 0..18 {
        for pi in 0..13 {
            for ri in 0..18 {
                let (y, p, r) = (
                    (-180.0 + 20.0 * yi as f64) * deg,
                    (-90.0 + 15.0 * pi as f64) * deg,
                    (-180.0 + 20.0 * ri as f64) * deg,
                );
                for &f in &focals {
                    if let Some(x) = weak_fit(inst, y, p, r, f) {
                        let c = cost(inst, &x);
                        if c.is_finite() {
                            cells.push((c, x));
                        }
                    }
                }
            }
        }
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = (cells[0].1, f64::INFINITY);
    for (_, start) in cells.iter().take(40) {
        let scale = [0.1, 0.1, 0.1, 5.0, 5.0, 0.05 * start[5].abs().max(10.0), 0.1 * start[6]];
        let (p, _) = nelder_mead(|x| cost(inst, x), *start, scale, 3000);
        let (p, c) = fd_gauss_newton(inst, p, 1000);
        if c < best.1 {
            best = (p, c);
        }
    }
    best
}

/// RMSE of the reprojection residuals at the brute-force optimum.
pub fn brute_force_similarity(inst: &Instance) -> f64 {
    let (_, c) = brute_force(inst);
    (2.0 * c / inst.model.len() as f64).sqrt()
}

/// Candidate order for one photo by selection sort on (score, subject id).
pub fn naive_order(scores: &[f64], ids: &[String]) -> Vec<usize> {
    let mut left: Vec<usize> = (0..scores.len()).collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        let mut pick = 0;
        for k in 1..left.len() {
            let (a, b) = (left[k], left[pick]);
            if scores[a] < scores[b] || (scores[a] == scores[b] && ids[a] < ids[b]) {
                pick = k;
            }
        }
        out.push(left.remove(pick));
    }
    out
}

/// Aligned population of `n` generated subjects.
pub fn aligned(set: LandmarkSet, n: usize, seed: u64) -> Population {
    generate_population(&GeneratorSpec::new(set, n), seed).unwrap().aligned().unwrap()
}

/// Skin cloud of a subject for rendering.
pub fn skin_cloud(pop: &Population, i: usize) -> Vec<CloudPoint> {
    pop.subjects[i]
        .present()
        .map(|(id, e)| CloudPoint { landmark: id, position: e.skin, normal: e.direction() })
        .collect()
}

/// Noiseless photo of subject `i` and its own (real, real) prediction.
pub fn own_fixture(
    pop: &Population,
    i: usize,
    pose: PoseClass,
    seed: u64,
) -> (SyntheticPhoto, Vec<(LandmarkId, cfsim::Point3)>) {
    let photo =
        render(&skin_cloud(pop, i), &sample_spec(pose, 0.0, seed), &VisibilityModel::default(), "x", 0).unwrap();
    let pred = predict(&pop.subjects[i], &pop.landmarks, FsttConfig::REAL, None, pop.registry).unwrap();
    (photo, pred.points)
}

/// Landmarks of the micro instances: spread over the face, at least four
/// visible from either side.
pub const MICRO_LANDMARKS: [&str; 5] = ["Glabella", "Left Zygion", "Right Zygion", "Rhinion", "Left Orbitale"];

/// `n` generated subjects reduced to [`MICRO_LANDMARKS`], aligned.
pub fn micro_population(n: usize, seed: u64) -> Population {
    let mut pop = generate_population(&GeneratorSpec::new(LandmarkSet::SetA, n), seed).unwrap();
    let mut keep: Vec<LandmarkId> = MICRO_LANDMARKS.iter().map(|m| pop.registry.lookup(m).unwrap()).collect();
    keep.sort();
    for s in &mut pop.subjects {
        for id in &pop.landmarks {
            if !keep.contains(id) {
                s.set(*id, None);
            }
        }
    }
    pop.landmarks = keep;
    pop.aligned().unwrap()
}
