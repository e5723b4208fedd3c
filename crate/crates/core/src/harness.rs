//! Identification experiments: galleries of simulated photos, N×N overlay
//! matrices, rankings and identification metrics.
//!
//! Every skull (row) is overlaid on every photo (column). For each photo the
//! candidates are ranked by ascending similarity and the rank of the true
//! subject is recorded. Accuracy is the rank-1 rate, in percent.
//!
//! Photo specs are seeded by `(seed, subject index, pose class, replicate)`
//! only. Runs that differ in noise, visible-landmark count or soft-tissue
//! regime therefore photograph the same subjects from the same cameras, and
//! their differences reflect the condition rather than resampling.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fstt::{predict, DirectionMode, FsttConfig, ThicknessMode};
use crate::landmarks::{LandmarkId, LandmarkSet};
use crate::photo::{
    apply_noise, render, sample_spec_with, CloudPoint, PhotoRanges, PoseClass, SyntheticPhoto, VisibilityModel,
};
use crate::population::{compute_stats, filter_subjects, FilterCriteria, FilterReport, Population};
use crate::rng::{self, Purpose};
use crate::solver::{solve, SfoProblem, SolverOptions};
use crate::{Error, Result};

/// Accepted visible-landmark counts for E4.
pub const E4_VISIBLE_COUNTS: [usize; 5] = [8, 10, 12, 14, 16];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExperimentId {
    E1,
    E2,
    E3,
    E4,
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One experimental condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub landmark_set: LandmarkSet,
    pub subject_count: usize,
    pub photos_per_pose: usize,
    pub fstt: FsttConfig,
    pub visibility: VisibilityModel,
    pub noise_px: f64,
    pub seed: u64,
    pub photo_ranges: PhotoRanges,
    pub solver: SolverOptions,
}

impl ExperimentConfig {
    fn base(experiment: ExperimentId, landmark_set: LandmarkSet, subject_count: usize, seed: u64) -> Self {
        ExperimentConfig {
            experiment,
            landmark_set,
            subject_count,
            photos_per_pose: 5,
            fstt: FsttConfig::REAL,
            visibility: VisibilityModel::default(),
            noise_px: 0.0,
            seed,
            photo_ranges: PhotoRanges::default(),
            solver: SolverOptions::default(),
        }
    }

    /// Perfect soft-tissue knowledge.
    pub fn e1(subject_count: usize, seed: u64) -> Self {
        Self::base(ExperimentId::E1, LandmarkSet::SetA, subject_count, seed)
    }

    /// Skull against photos of skulls.
    pub fn e2(subject_count: usize, seed: u64) -> Self {
        ExperimentConfig {
            fstt: FsttConfig::NONE,
            ..Self::base(ExperimentId::E2, LandmarkSet::SetA, subject_count, seed)
        }
    }

    /// Mean thickness with real or mean direction.
    pub fn e3(subject_count: usize, direction: DirectionMode, noise_px: f64, seed: u64) -> Self {
        ExperimentConfig {
            fstt: FsttConfig::new(ThicknessMode::Mean, direction),
            noise_px,
            ..Self::base(ExperimentId::E3, LandmarkSet::SetA, subject_count, seed)
        }
    }

    /// E3 with a fixed number of visible landmarks on the second landmark set.
    pub fn e4(subject_count: usize, k: usize, direction: DirectionMode, noise_px: f64, seed: u64) -> Self {
        ExperimentConfig {
            fstt: FsttConfig::new(ThicknessMode::Mean, direction),
            visibility: VisibilityModel::fixed(k),
            noise_px,
            ..Self::base(ExperimentId::E4, LandmarkSet::SetB, subject_count, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Err(Error::Config { location: field.into(), message });
        if self.subject_count == 0 {
            return bad("subject_count", "must be at least 1".into());
        }
        if self.photos_per_pose == 0 {
            return bad("photos_per_pose", "must be at least 1".into());
        }
        if !(self.noise_px.is_finite() && self.noise_px >= 0.0) {
            return bad("noise_px", format!("{} is not a non-negative number", self.noise_px));
        }
        if let Err(m) = self.photo_ranges.validate() {
            return bad("photo", m);
        }
        let angle = self.visibility.half_angle_deg();
        if !(angle > 0.0 && angle <= 180.0) {
            return bad("visibility.half_angle_deg", format!("{angle} is outside (0, 180]"));
        }
        let [f_lo, f_hi] = self.solver.focal_bounds;
        if !(f_lo > 0.0 && f_lo < f_hi) {
            return bad(
                "solver.focal_bounds",
                format!("{:?} must be positive and increasing", self.solver.focal_bounds),
            );
        }
        match self.experiment {
            ExperimentId::E2 if self.fstt.thickness != ThicknessMode::None => {
                bad("fstt.thickness", "E2 overlays skulls on skull photos; thickness must be `none`".into())
            }
            ExperimentId::E4 => match self.visibility.fixed_count() {
                Some(k) if E4_VISIBLE_COUNTS.contains(&k) => Ok(()),
                Some(k) => bad("visibility.k", format!("{k} is not one of {E4_VISIBLE_COUNTS:?}")),
                None => bad("visibility.mode", "E4 requires `fixed_count`".into()),
            },
            _ => Ok(()),
        }
    }

    /// Photos per subject.
    pub fn photos_per_subject(&self) -> usize {
        self.photos_per_pose * PoseClass::ALL.len()
    }

    /// Label of the visibility column in report tables.
    pub fn visibility_label(&self) -> String {
        match self.visibility.fixed_count() {
            Some(k) => format!("{k}L"),
            None => "geom".into(),
        }
    }
}

/// Filters a population on the landmarks of `set` and aligns the survivors.
pub fn prepare_population(pop: &Population, set: LandmarkSet) -> Result<(Population, FilterReport)> {
    let ids = set.ids(pop.registry);
    if let Some(missing) = ids.iter().find(|id| !pop.landmarks.contains(id)) {
        return Err(Error::InvalidSpec(format!(
            "population does not cover landmark `{}` of {set}",
            pop.registry.name(*missing)
        )));
    }
    let (filtered, report) = filter_subjects(pop, &FilterCriteria::new(ids))?;
    Ok((filtered.aligned()?, report))
}

/// Landmarks of the configured set that the population covers.
pub fn experiment_landmarks(config: &ExperimentConfig, pop: &Population) -> Vec<LandmarkId> {
    config.landmark_set.ids(pop.registry).into_iter().filter(|id| pop.landmarks.contains(id)).collect()
}

/// Seed of one gallery photo. Masked to 63 bits so it survives formats with
/// signed integers.
pub fn photo_seed(seed: u64, subject_index: usize, pose: PoseClass, replicate: usize) -> u64 {
    let pose_index = PoseClass::ALL.iter().position(|p| *p == pose).unwrap() as u64;
    rng::derive(Purpose::PhotoSpec, &[seed, subject_index as u64, pose_index, replicate as u64]) >> 1
}

/// Renders the photos of every subject: subject-major, then pose class, then
/// replicate.
pub fn build_gallery(config: &ExperimentConfig, pop: &Population) -> Result<Vec<SyntheticPhoto>> {
    let ids = experiment_landmarks(config, pop);
    let from_bone = config.experiment == ExperimentId::E2;
    let mut gallery = Vec::with_capacity(pop.len() * config.photos_per_subject());
    for (i, s) in pop.subjects.iter().enumerate() {
        let cloud: Vec<CloudPoint> = ids
            .iter()
            .filter_map(|&id| {
                s.entry(id).map(|e| CloudPoint {
                    landmark: id,
                    position: if from_bone { e.bone } else { e.skin },
                    normal: e.direction(),
                })
            })
            .collect();
        for pose in PoseClass::ALL {
            for r in 0..config.photos_per_pose {
                gallery.push(gallery_photo(
                    config,
                    &cloud,
                    &s.subject_id,
                    photo_seed(config.seed, i, pose, r),
                    pose,
                    r,
                )?);
            }
        }
    }
    Ok(gallery)
}

/// Spec draws per gallery photo before giving up on a subject.
pub const MAX_PHOTO_DRAWS: u64 = 64;

/// Renders one gallery photo. A draw that leaves fewer than four landmarks
/// visible is replaced by a fresh draw from a seed derived from `seed` and
/// the attempt number, so every subject keeps its full set of photos.
pub fn gallery_photo(
    config: &ExperimentConfig,
    cloud: &[CloudPoint],
    subject_id: &str,
    seed: u64,
    pose: PoseClass,
    replicate: usize,
) -> Result<SyntheticPhoto> {
    let mut last = Error::TooFewVisible { visible: 0 };
    for attempt in 0..MAX_PHOTO_DRAWS {
        let s = if attempt == 0 { seed } else { rng::derive(Purpose::PhotoSpec, &[seed, attempt]) >> 1 };
        let spec = sample_spec_with(&config.photo_ranges, pose, config.noise_px, s);
        match render(cloud, &spec, &config.visibility, subject_id, replicate) {
            Ok(clean) => return Ok(apply_noise(&clean, config.noise_px, s)),
            Err(e @ Error::TooFewVisible { .. }) if cloud.len() >= crate::photo::MIN_VISIBLE => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// Similarity of every skull (row) against every photo (column).
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonMatrix {
    pub skull_ids: Vec<String>,
    pub photo_ids: Vec<String>,
    /// Row of the true subject of each photo.
    pub truth: Vec<usize>,
    /// Row-major scores; `+inf` marks a failed overlay.
    pub scores: Vec<f64>,
}

impl ComparisonMatrix {
    pub fn new(skull_ids: Vec<String>, photo_ids: Vec<String>, truth: Vec<usize>, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != skull_ids.len() * photo_ids.len() || truth.len() != photo_ids.len() {
            return Err(Error::InvalidSpec("matrix dimensions do not match".into()));
        }
        if truth.iter().any(|&t| t >= skull_ids.len()) {
            return Err(Error::InvalidSpec("photo truth outside the candidate rows".into()));
        }
        if scores.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return Err(Error::InvalidSpec("scores must be finite or +inf".into()));
        }
        Ok(ComparisonMatrix { skull_ids, photo_ids, truth, scores })
    }

    pub fn rows(&self) -> usize {
        self.skull_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.photo_ids.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.cols() + col]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub photo_id: String,
    /// Candidate rows, best first.
    pub order: Vec<usize>,
    pub rank_of_truth: usize,
}

/// Ranks the candidates of every photo by ascending similarity. Equal scores
/// are ordered by skull id, then row.
pub fn rank_queries(matrix: &ComparisonMatrix) -> Vec<RankingResult> {
    (0..matrix.cols())
        .map(|c| {
            let mut order: Vec<usize> = (0..matrix.rows()).collect();
            order.sort_by(|&a, &b| {
                matrix
                    .get(a, c)
                    .total_cmp(&matrix.get(b, c))
                    .then_with(|| matrix.skull_ids[a].cmp(&matrix.skull_ids[b]))
                    .then(a.cmp(&b))
            });
            let rank_of_truth = 1 + order.iter().position(|&r| r == matrix.truth[c]).unwrap();
            RankingResult { photo_id: matrix.photo_ids[c].clone(), order, rank_of_truth }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub queries: usize,
    pub averaged_rank: f64,
    /// Rank-1 rate in percent.
    pub accuracy: f64,
    /// `cmc[r - 1]` is the fraction of queries with the truth in the top `r`.
    pub cmc: Vec<f64>,
}

/// Metrics of a set of rankings over `candidates` skulls.
pub fn compute_metrics(rankings: &[RankingResult]) -> Result<Metrics> {
    let candidates = rankings.first().ok_or(Error::EmptyRankings)?.order.len();
    metrics_from_ranks(&rankings.iter().map(|r| r.rank_of_truth).collect::<Vec<_>>(), candidates)
}

pub fn metrics_from_ranks(ranks: &[usize], candidates: usize) -> Result<Metrics> {
    if ranks.is_empty() {
        return Err(Error::EmptyRankings);
    }
    let n = ranks.len() as f64;
    let mut hist = vec![0usize; candidates];
    for &r in ranks {
        if r == 0 || r > candidates {
            return Err(Error::InvalidSpec(format!("rank {r} outside 1..={candidates}")));
        }
        hist[r - 1] += 1;
    }
    let mut cumulative = 0;
    let cmc: Vec<f64> = hist
        .iter()
        .map(|h| {
            cumulative += h;
            cumulative as f64 / n
        })
        .collect();
    Ok(Metrics {
        queries: ranks.len(),
        averaged_rank: ranks.iter().sum::<usize>() as f64 / n,
        accuracy: cmc[0] * 100.0,
        cmc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotoRank {
    pub photo_id: String,
    pub subject_id: String,
    pub rank: usize,
    pub visible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseBreakdown {
    pub pose_class: PoseClass,
    pub mean_visible: f64,
    pub averaged_rank: f64,
    pub accuracy: f64,
}

/// Machine-readable outcome of one condition. Contains no timing, so equal
/// inputs give byte-identical report files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub landmark_count: usize,
    pub subjects: usize,
    pub photos: usize,
    pub sfo_count: usize,
    /// Overlays that failed and scored `+inf`.
    pub failed_sfo: usize,
    pub averaged_rank: f64,
    pub accuracy: f64,
    pub cmc: Vec<f64>,
    pub by_pose: Vec<PoseBreakdown>,
    pub ranks: Vec<PhotoRank>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub workers: usize,
    pub elapsed_s: f64,
    pub sfo_per_s: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub matrix: ComparisonMatrix,
    pub report: ExperimentReport,
    pub stats: RunStats,
}

/// Runs one condition on a prepared (filtered, aligned) population with
/// `workers` threads. The result does not depend on `workers`.
pub fn run_experiment(config: &ExperimentConfig, pop: &Population, workers: usize) -> Result<ExperimentOutput> {
    config.validate()?;
    let start = Instant::now();
    let pop = pop.aligned()?;
    let ids = experiment_landmarks(config, &pop);
    if ids.len() < crate::photo::MIN_VISIBLE {
        return Err(Error::InvalidSpec(format!(
            "only {} landmarks of {} in the population",
            ids.len(),
            config.landmark_set
        )));
    }
    let stats = if config.fstt.needs_stats() { Some(compute_stats(&pop, &ids)?) } else { None };
    let models: Vec<Vec<(LandmarkId, crate::Point3)>> = pop
        .subjects
        .iter()
        .map(|s| predict(s, &ids, config.fstt, stats.as_ref(), pop.registry).map(|p| p.points))
        .collect::<Result<_>>()?;
    let gallery = build_gallery(config, &pop)?;

    let rows = models.len();
    let cols = gallery.len();
    let cell = |k: usize| -> f64 {
        let (r, c) = (k / cols, k % cols);
        SfoProblem::new(&models[r], &gallery[c].observed)
            .and_then(|p| solve(&p, &config.solver))
            .map_or(f64::INFINITY, |s| s.similarity)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
    let scores: Vec<f64> = pool.install(|| (0..rows * cols).into_par_iter().with_min_len(64).map(cell).collect());

    let index: std::collections::HashMap<&str, usize> =
        pop.subjects.iter().enumerate().map(|(i, s)| (s.subject_id.as_str(), i)).collect();
    let truth: Vec<usize> = gallery.iter().map(|p| index[p.truth().subject_id.as_str()]).collect();
    let matrix = ComparisonMatrix::new(
        pop.subjects.iter().map(|s| s.subject_id.clone()).collect(),
        gallery.iter().map(|p| p.photo_id().to_string()).collect(),
        truth,
        scores,
    )?;
    let rankings = rank_queries(&matrix);
    let metrics = compute_metrics(&rankings)?;

    let ranks: Vec<PhotoRank> = rankings
        .iter()
        .zip(&gallery)
        .map(|(r, p)| PhotoRank {
            photo_id: r.photo_id.clone(),
            subject_id: p.truth().subject_id.clone(),
            rank: r.rank_of_truth,
            visible: p.observed.observations.len(),
        })
        .collect();
    let by_pose = PoseClass::ALL
        .iter()
        .map(|&pose| {
            let sel: Vec<(&PhotoRank, &SyntheticPhoto)> =
                ranks.iter().zip(&gallery).filter(|(_, p)| p.truth().spec.pose_class == pose).collect();
            let m = metrics_from_ranks(&sel.iter().map(|(r, _)| r.rank).collect::<Vec<_>>(), rows)?;
            Ok(PoseBreakdown {
                pose_class: pose,
                mean_visible: sel.iter().map(|(r, _)| r.visible as f64).sum::<f64>() / sel.len() as f64,
                averaged_rank: m.averaged_rank,
                accuracy: m.accuracy,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let sfo_count = rows * cols;
    let report = ExperimentReport {
        config: config.clone(),
        landmark_count: ids.len(),
        subjects: rows,
        photos: cols,
        sfo_count,
        failed_sfo: matrix.scores.iter().filter(|s| s.is_infinite()).count(),
        averaged_rank: metrics.averaged_rank,
        accuracy: metrics.accuracy,
        cmc: metrics.cmc,
        by_pose,
        ranks,
    };
    let elapsed_s = start.elapsed().as_secs_f64();
    let stats = RunStats { workers: workers.max(1), elapsed_s, sfo_per_s: sfo_count as f64 / elapsed_s.max(1e-9) };
    Ok(ExperimentOutput { matrix, report, stats })
}

// ---------------------------------------------------------------------------
// Matrix files

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    Csv,
    Binary,
}

const MATRIX_MAGIC: &[u8; 8] = b"CFSMTX01";

#[derive(Debug, Serialize, Deserialize)]
struct MatrixRow {
    photo_id: String,
    skull_id: String,
    similarity: f64,
    truth: u8,
}

/// Writes a matrix as CSV (`photo_id,skull_id,similarity,truth`, photo-major)
/// or as the binary layout: magic, row and column counts (u32 LE), the
/// length-prefixed skull ids, photo ids, truth rows (u32 LE) and the row-major
/// scores (f64 LE).
pub fn save_matrix(matrix: &ComparisonMatrix, path: &Path, format: MatrixFormat) -> Result<()> {
    match format {
        MatrixFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(|e| crate::population::csv_io(path, e))?;
            for c in 0..matrix.cols() {
                for r in 0..matrix.rows() {
                    w.serialize(MatrixRow {
                        photo_id: matrix.photo_ids[c].clone(),
                        skull_id: matrix.skull_ids[r].clone(),
                        similarity: matrix.get(r, c),
                        truth: (matrix.truth[c] == r) as u8,
                    })
                    .map_err(|e| crate::population::csv_io(path, e))?;
                }
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
        MatrixFormat::Binary => {
            let mut buf = Vec::with_capacity(16 + 8 * matrix.scores.len());
            buf.extend_from_slice(MATRIX_MAGIC);
            buf.extend_from_slice(&(matrix.rows() as u32).to_le_bytes());
            buf.extend_from_slice(&(matrix.cols() as u32).to_le_bytes());
            for id in matrix.skull_ids.iter().chain(&matrix.photo_ids) {
                buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
                buf.extend_from_slice(id.as_bytes());
            }
            for &t in &matrix.truth {
                buf.extend_from_slice(&(t as u32).to_le_bytes());
            }
            for s in &matrix.scores {
                buf.extend_from_slice(&s.to_le_bytes());
            }
            std::fs::File::create(path).and_then(|mut f| f.write_all(&buf)).map_err(|e| Error::io(path, e))
        }
    }
}

pub fn load_matrix(path: &Path) -> Result<ComparisonMatrix> {
    let mut bytes = Vec::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MATRIX_MAGIC) {
        read_binary(&bytes).ok_or_else(|| Error::schema(path.display().to_string(), "truncated binary matrix"))?
    } else {
        read_csv(path, &bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.at..self.at + n)?;
        self.at += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<usize> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?) as usize)
    }

    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

fn read_binary(bytes: &[u8]) -> Option<Result<ComparisonMatrix>> {
    let mut cur = Cursor { bytes, at: MATRIX_MAGIC.len() };
    let rows = cur.u32()?;
    let cols = cur.u32()?;
    let mut ids = Vec::with_capacity(rows + cols);
    for _ in 0..rows + cols {
        let n = cur.u32()?;
        ids.push(String::from_utf8(cur.take(n)?.to_vec()).ok()?);
    }
    let photo_ids = ids.split_off(rows);
    let truth = (0..cols).map(|_| cur.u32()).collect::<Option<Vec<_>>>()?;
    let scores = (0..rows * cols).map(|_| cur.f64()).collect::<Option<Vec<_>>>()?;
    if cur.at != bytes.len() {
        return None;
    }
    Some(ComparisonMatrix::new(ids, photo_ids, truth, scores))
}

fn read_csv(path: &Path, bytes: &[u8]) -> Result<ComparisonMatrix> {
    let mut reader = csv::Reader::from_reader(bytes);
    let mut skull_ids: Vec<String> = Vec::new();
    let mut photo_ids: Vec<String> = Vec::new();
    let mut truth: Vec<Option<usize>> = Vec::new();
    let mut by_photo: Vec<Vec<f64>> = Vec::new();
    for (line, row) in reader.deserialize::<MatrixRow>().enumerate() {
        let loc = || format!("{}:{}", path.display(), line + 2);
        let row = row.map_err(|e| Error::schema(loc(), e.to_string()))?;
        if photo_ids.last() != Some(&row.photo_id) {
            if photo_ids.contains(&row.photo_id) {
                return Err(Error::schema(loc(), format!("rows of photo `{}` are not contiguous", row.photo_id)));
            }
            photo_ids.push(row.photo_id.clone());
            truth.push(None);
            by_photo.push(Vec::new());
        }
        let c = photo_ids.len() - 1;
        let r = by_photo[c].len();
        if c == 0 {
            skull_ids.push(row.skull_id.clone());
        } else if skull_ids.get(r) != Some(&row.skull_id) {
            return Err(Error::schema(loc(), "skull order differs between photos"));
        }
        if row.truth == 1 {
            truth[c] = Some(r);
        }
        by_photo[c].push(row.similarity);
    }
    let truth = truth
        .into_iter()
        .zip(&photo_ids)
        .map(|(t, p)| {
            t.ok_or_else(|| Error::schema(path.display().to_string(), format!("photo `{p}` has no true skull")))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = skull_ids.len();
    if by_photo.iter().any(|c| c.len() != rows) {
        return Err(Error::schema(path.display().to_string(), "photos have different candidate counts"));
    }
    let cols = photo_ids.len();
    let scores = (0..rows * cols).map(|k| by_photo[k % cols][k / cols]).collect();
    ComparisonMatrix::new(skull_ids, photo_ids, truth, scores)
}

pub fn save_report(report: &ExperimentReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_report(path: &Path) -> Result<ExperimentReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::schema(format!("{}:{}", path.display(), e.line()), e.to_string()))
}

/// Subject id encoded in a gallery photo id.
pub fn photo_subject(photo_id: &str) -> Option<&str> {
    photo_id.rsplit_once('-').map(|(s, _)| s)
}
