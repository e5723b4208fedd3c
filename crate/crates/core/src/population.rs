//! Subjects, populations, dataset files, outlier filtering and population
//! soft-tissue statistics.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::generator::GeneratorSpec;
use crate::geometry::{AlignmentTransform, Point3};
use crate::landmarks::{LandmarkId, Registry};
use crate::{Error, Result};

pub const POPULATION_SCHEMA_VERSION: u32 = 1;

/// Bounds of a plausible soft-tissue thickness, millimetres (exclusive).
pub const FSTT_VALID_RANGE_MM: (f64, f64) = (0.0, 60.0);
/// Default outlier gate: `|t - median| > k * MAD`.
pub const DEFAULT_MAD_K: f64 = 5.0;
pub const DEFAULT_MAD_FLOOR_MM: f64 = 1.0;
/// Scales a median absolute deviation to a normal standard deviation.
pub const MAD_TO_SD: f64 = 1.4826;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
}

/// Paired bone and skin position of one landmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkEntry {
    pub bone: Point3,
    pub skin: Point3,
}

impl LandmarkEntry {
    pub fn thickness(&self) -> f64 {
        (self.skin - self.bone).norm()
    }

    /// Unit bone-to-skin direction.
    pub fn direction(&self) -> Vector3<f64> {
        (self.skin - self.bone).normalize()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub sex: Sex,
    pub age: u32,
    /// Indexed by [`LandmarkId`]; `None` marks a landmark missing from the scan.
    pub landmarks: Vec<Option<LandmarkEntry>>,
}

impl SubjectRecord {
    pub fn new(subject_id: impl Into<String>, sex: Sex, age: u32, registry_len: usize) -> Self {
        SubjectRecord { subject_id: subject_id.into(), sex, age, landmarks: vec![None; registry_len] }
    }

    pub fn entry(&self, id: LandmarkId) -> Option<&LandmarkEntry> {
        self.landmarks.get(id.index()).and_then(Option::as_ref)
    }

    pub fn set(&mut self, id: LandmarkId, entry: Option<LandmarkEntry>) {
        self.landmarks[id.index()] = entry;
    }

    pub fn is_present(&self, id: LandmarkId) -> bool {
        self.entry(id).is_some()
    }

    pub fn present(&self) -> impl Iterator<Item = (LandmarkId, &LandmarkEntry)> {
        self.landmarks.iter().enumerate().filter_map(|(i, e)| e.as_ref().map(|e| (LandmarkId(i as u16), e)))
    }

    pub fn transformed(&self, t: &AlignmentTransform) -> SubjectRecord {
        SubjectRecord {
            landmarks: self
                .landmarks
                .iter()
                .map(|e| e.map(|e| LandmarkEntry { bone: t.apply(&e.bone), skin: t.apply(&e.skin) }))
                .collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Dataset,
    Aligned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// `generator` or `file`.
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub tool_version: String,
}

impl Provenance {
    pub fn file() -> Self {
        Provenance {
            source: "file".into(),
            generator: None,
            seed: None,
            tool_version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Population {
    pub registry: &'static Registry,
    /// Landmarks the population covers, ascending.
    pub landmarks: Vec<LandmarkId>,
    pub subjects: Vec<SubjectRecord>,
    pub frame: Frame,
    pub provenance: Provenance,
}

impl Population {
    pub fn new(
        registry: &'static Registry,
        landmarks: Vec<LandmarkId>,
        subjects: Vec<SubjectRecord>,
        frame: Frame,
        provenance: Provenance,
    ) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for s in &subjects {
            if !seen.insert(s.subject_id.as_str()) {
                return Err(Error::InvalidSpec(format!("duplicate subject id `{}`", s.subject_id)));
            }
            if s.landmarks.len() != registry.len() {
                return Err(Error::InvalidSpec(format!("subject `{}` does not match the registry", s.subject_id)));
            }
        }
        Ok(Population { registry, landmarks, subjects, frame, provenance })
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Same population mapped into the common PCA frame.
    pub fn aligned(&self) -> Result<Population> {
        if self.frame == Frame::Aligned {
            return Ok(self.clone());
        }
        let (subjects, _) = crate::geometry::pca_align(&self.subjects, self.registry)?;
        Ok(Population { subjects, frame: Frame::Aligned, ..self.clone() })
    }

    fn with_subjects(&self, subjects: Vec<SubjectRecord>) -> Population {
        Population { subjects, ..self.clone() }
    }
}

// ---------------------------------------------------------------------------
// Dataset files

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    subject_id: String,
    sex: Sex,
    age: u32,
    landmark_name: String,
    bone_x: Option<f64>,
    bone_y: Option<f64>,
    bone_z: Option<f64>,
    skin_x: Option<f64>,
    skin_y: Option<f64>,
    skin_z: Option<f64>,
    present: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationMeta {
    pub schema_version: u32,
    pub frame: Frame,
    pub subjects: usize,
    pub landmarks: usize,
    pub provenance: Provenance,
}

/// `population.csv` -> `population.meta.toml`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.toml")
}

/// Reads a dataset CSV (and its metadata sidecar when present).
///
/// Landmarks absent from a subject's rows, or rows with `present = 0`, are
/// marked missing.
pub fn load_population(path: &Path, registry: &'static Registry) -> Result<Population> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| Error::schema(format!("{}:1", path.display()), e.to_string()))?.clone();
    const EXPECTED: [&str; 11] = [
        "subject_id",
        "sex",
        "age",
        "landmark_name",
        "bone_x",
        "bone_y",
        "bone_z",
        "skin_x",
        "skin_y",
        "skin_z",
        "present",
    ];
    if headers.iter().collect::<Vec<_>>() != EXPECTED {
        return Err(Error::schema(format!("{}:1", path.display()), format!("header must be `{}`", EXPECTED.join(","))));
    }

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut subjects: Vec<SubjectRecord> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut covered = std::collections::BTreeSet::new();
    for (i, record) in reader.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let loc = || format!("{}:{line}", path.display());
        let row = record.map_err(|e| Error::schema(loc(), e.to_string()))?;
        let id = registry.lookup(&row.landmark_name)?;
        covered.insert(id);
        if !seen.insert((row.subject_id.clone(), id)) {
            return Err(Error::schema(loc(), format!("duplicate row for {} / {}", row.subject_id, row.landmark_name)));
        }
        let k = *index.entry(row.subject_id.clone()).or_insert_with(|| {
            subjects.push(SubjectRecord::new(row.subject_id.clone(), row.sex, row.age, registry.len()));
            subjects.len() - 1
        });
        let subject = &mut subjects[k];
        if subject.sex != row.sex || subject.age != row.age {
            return Err(Error::schema(loc(), format!("inconsistent sex/age for subject {}", row.subject_id)));
        }
        match row.present {
            0 => subject.set(id, None),
            1 => {
                let coords = [row.bone_x, row.bone_y, row.bone_z, row.skin_x, row.skin_y, row.skin_z];
                let mut v = [0.0; 6];
                for (slot, c) in v.iter_mut().zip(coords) {
                    *slot = c
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| Error::schema(loc(), "present landmark needs six finite coordinates"))?;
                }
                subject.set(
                    id,
                    Some(LandmarkEntry { bone: Point3::new(v[0], v[1], v[2]), skin: Point3::new(v[3], v[4], v[5]) }),
                );
            }
            other => return Err(Error::schema(loc(), format!("present must be 0 or 1, got {other}"))),
        }
    }

    let sidecar = sidecar_path(path);
    let (frame, provenance) = if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let meta: PopulationMeta =
            toml::from_str(&text).map_err(|e| Error::schema(sidecar.display().to_string(), e.to_string()))?;
        (meta.frame, meta.provenance)
    } else {
        (Frame::Dataset, Provenance::file())
    };
    Population::new(registry, covered.into_iter().collect(), subjects, frame, provenance)
}

/// Writes a dataset CSV plus its metadata sidecar.
pub fn save_population(pop: &Population, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    for s in &pop.subjects {
        for &id in &pop.landmarks {
            let e = s.entry(id);
            let c = |f: fn(&LandmarkEntry) -> f64| e.map(f);
            writer
                .serialize(Row {
                    subject_id: s.subject_id.clone(),
                    sex: s.sex,
                    age: s.age,
                    landmark_name: pop.registry.name(id).to_string(),
                    bone_x: c(|e| e.bone.x),
                    bone_y: c(|e| e.bone.y),
                    bone_z: c(|e| e.bone.z),
                    skin_x: c(|e| e.skin.x),
                    skin_y: c(|e| e.skin.y),
                    skin_z: c(|e| e.skin.z),
                    present: e.is_some() as u8,
                })
                .map_err(|e| csv_io(path, e))?;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))?;

    let meta = PopulationMeta {
        schema_version: POPULATION_SCHEMA_VERSION,
        frame: pop.frame,
        subjects: pop.len(),
        landmarks: pop.landmarks.len(),
        provenance: pop.provenance.clone(),
    };
    let sidecar = sidecar_path(path);
    let text = toml::to_string_pretty(&meta).expect("metadata serializes");
    std::fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))
}

pub(crate) fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::schema(path.display().to_string(), format!("{other:?}")),
    }
}

// ---------------------------------------------------------------------------
// Filtering

#[derive(Debug, Clone, PartialEq)]
pub struct FilterCriteria {
    pub required: Vec<LandmarkId>,
    pub fstt_range_mm: (f64, f64),
    pub mad_k: f64,
    /// Lower bound on the scaled MAD, so tight small samples do not reject
    /// ordinary variation.
    pub mad_floor_mm: f64,
}

impl FilterCriteria {
    pub fn new(required: Vec<LandmarkId>) -> Self {
        FilterCriteria {
            required,
            fstt_range_mm: FSTT_VALID_RANGE_MM,
            mad_k: DEFAULT_MAD_K,
            mad_floor_mm: DEFAULT_MAD_FLOOR_MM,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RejectionReason {
    MissingLandmark { landmark: String },
    ThicknessOutOfRange { landmark: String, thickness: f64 },
    Outlier { landmark: String, thickness: f64, median: f64, mad: f64 },
}

impl fmt::Display for RejectionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectionReason::MissingLandmark { landmark } => write!(f, "missing {landmark}"),
            RejectionReason::ThicknessOutOfRange { landmark, thickness } => {
                write!(f, "{landmark} thickness {thickness:.3} mm outside the valid range")
            }
            RejectionReason::Outlier { landmark, thickness, median, mad } => {
                write!(f, "{landmark} thickness {thickness:.3} mm vs median {median:.3} (MAD {mad:.3})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub subject_id: String,
    pub reason: RejectionReason,
    /// 0 for the range and presence checks, `n >= 1` for the n-th outlier pass.
    pub pass: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterReport {
    pub rejections: Vec<Rejection>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Median and scaled MAD of a sample.
pub fn median_mad(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let med = median(&v);
    let mut dev: Vec<f64> = v.iter().map(|x| (x - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    (med, MAD_TO_SD * median(&dev))
}

/// Removes subjects with missing required landmarks, implausible thickness or
/// thickness outliers.
///
/// The outlier gate is repeated on the survivors until nothing changes, so
/// filtering a filtered population is a no-op.
pub fn filter_subjects(pop: &Population, criteria: &FilterCriteria) -> Result<(Population, FilterReport)> {
    if pop.is_empty() {
        return Err(Error::InvalidSpec("cannot filter an empty population".into()));
    }
    let reg = pop.registry;
    let mut report = FilterReport::default();
    let (lo, hi) = criteria.fstt_range_mm;

    let mut kept: Vec<&SubjectRecord> = Vec::new();
    'subjects: for s in &pop.subjects {
        for &id in &criteria.required {
            let reason = match s.entry(id) {
                None => RejectionReason::MissingLandmark { landmark: reg.name(id).into() },
                Some(e) => {
                    let t = e.thickness();
                    if t > lo && t < hi {
                        continue;
                    }
                    RejectionReason::ThicknessOutOfRange { landmark: reg.name(id).into(), thickness: t }
                }
            };
            report.rejections.push(Rejection { subject_id: s.subject_id.clone(), reason, pass: 0 });
            continue 'subjects;
        }
        kept.push(s);
    }

    let mut pass = 0;
    while !kept.is_empty() {
        pass += 1;
        let gates: Vec<(LandmarkId, f64, f64)> = criteria
            .required
            .iter()
            .map(|&id| {
                let t: Vec<f64> = kept.iter().map(|s| s.entry(id).unwrap().thickness()).collect();
                let (m, mad) = median_mad(&t);
                (id, m, mad.max(criteria.mad_floor_mm))
            })
            .collect();
        let before = kept.len();
        kept.retain(|s| {
            for &(id, med, mad) in &gates {
                let t = s.entry(id).unwrap().thickness();
                if (t - med).abs() > criteria.mad_k * mad {
                    report.rejections.push(Rejection {
                        subject_id: s.subject_id.clone(),
                        reason: RejectionReason::Outlier {
                            landmark: reg.name(id).into(),
                            thickness: t,
                            median: med,
                            mad,
                        },
                        pass,
                    });
                    return false;
                }
            }
            true
        });
        if kept.len() == before {
            break;
        }
    }

    if kept.is_empty() {
        return Err(Error::EmptyResult(pop.len()));
    }
    let subjects = kept.into_iter().cloned().collect();
    Ok((pop.with_subjects(subjects), report))
}

// ---------------------------------------------------------------------------
// Statistics

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkStats {
    pub mean_thickness: f64,
    pub mean_direction: [f64; 3],
    pub sample_count: usize,
}

impl LandmarkStats {
    pub fn direction(&self) -> Vector3<f64> {
        Vector3::from(self.mean_direction)
    }
}

/// Whole-sample soft-tissue statistics in the aligned frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationStats {
    /// Indexed by [`LandmarkId`].
    pub per_landmark: Vec<Option<LandmarkStats>>,
}

impl PopulationStats {
    pub fn get(&self, id: LandmarkId) -> Option<&LandmarkStats> {
        self.per_landmark.get(id.index()).and_then(Option::as_ref)
    }
}

/// Mean thickness and normalized mean unit direction per requested landmark.
pub fn compute_stats(pop: &Population, landmarks: &[LandmarkId]) -> Result<PopulationStats> {
    if pop.frame != Frame::Aligned {
        return Err(Error::WrongFrame { expected: "aligned" });
    }
    let mut per_landmark = vec![None; pop.registry.len()];
    for &id in landmarks {
        let mut count = 0usize;
        let mut thickness = 0.0;
        let mut direction = Vector3::zeros();
        for e in pop.subjects.iter().filter_map(|s| s.entry(id)) {
            count += 1;
            thickness += e.thickness();
            direction += e.direction();
        }
        if count < 2 {
            return Err(Error::InsufficientSamples { landmark: pop.registry.name(id).into(), count });
        }
        let norm = direction.norm();
        if !(norm > 1e-12) {
            return Err(Error::NumericalFailure(format!(
                "soft-tissue directions of {} cancel out",
                pop.registry.name(id)
            )));
        }
        let d = direction / norm;
        per_landmark[id.index()] = Some(LandmarkStats {
            mean_thickness: thickness / count as f64,
            mean_direction: [d.x, d.y, d.z],
            sample_count: count,
        });
    }
    Ok(PopulationStats { per_landmark })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::generate_population;
    use crate::landmarks::LandmarkSet;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn fixture(n: usize) -> Population {
        generate_population(&GeneratorSpec::new(LandmarkSet::SetA, n), 42).unwrap()
    }

    const FIXTURE_CSV: &str = "\
subject_id,sex,age,landmark_name,bone_x,bone_y,bone_z,skin_x,skin_y,skin_z,present
S1,M,40,Nasion,0,0,0,0,0,-6.5,1
S1,M,40,Glabella,0,-14,-4,0,-15,-9,1
S1,M,40,Rhinion,,,,,,,0
S2,F,33,Nasion,1,0,0,1,0,-6,1
S2,F,33,Rhinion,0,22,-14,0,23,-16,1
";

    #[test]
    fn loads_fixture_with_presence_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pop.csv");
        std::fs::write(&path, FIXTURE_CSV).unwrap();
        let reg = Registry::standard();
        let pop = load_population(&path, reg).unwrap();
        assert_eq!(pop.len(), 2);
        assert_eq!(pop.frame, Frame::Dataset);
        assert_eq!(pop.landmarks.len(), 3);
        let (s1, s2) = (&pop.subjects[0], &pop.subjects[1]);
        assert_eq!((s1.sex, s1.age, s2.sex), (Sex::M, 40, Sex::F));
        let nasion = reg.id("Nasion").unwrap();
        let rhinion = reg.id("Rhinion").unwrap();
        let glabella = reg.id("Glabella").unwrap();
        assert!(s1.is_present(nasion) && !s1.is_present(rhinion) && s1.is_present(glabella));
        assert!(s2.is_present(rhinion) && !s2.is_present(glabella));
        assert_eq!(s1.entry(nasion).unwrap().thickness(), 6.5);
    }

    #[test]
    fn unknown_landmark_and_schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pop.csv");
        let reg = Registry::standard();
        std::fs::write(&path, FIXTURE_CSV.replace("Glabella", "Bregma")).unwrap();
        assert!(matches!(load_population(&path, reg), Err(Error::UnknownLandmark(n)) if n == "Bregma"));
        std::fs::write(&path, FIXTURE_CSV.replace("0,-14,-4", "0,oops,-4")).unwrap();
        let err = load_population(&path, reg).unwrap_err();
        assert!(matches!(&err, Error::Schema { location, .. } if location.ends_with(":3")), "{err}");
        std::fs::write(
            &path,
            FIXTURE_CSV.replace("S2,F,33,Rhinion,0,22,-14,0,23,-16,1", "S2,F,33,Rhinion,0,22,-14,,23,-16,1"),
        )
        .unwrap();
        assert!(matches!(load_population(&path, reg), Err(Error::Schema { .. })));
        std::fs::write(&path, FIXTURE_CSV.replace("S2,F,33,Rhinion", "S2,M,33,Rhinion")).unwrap();
        assert!(matches!(load_population(&path, reg), Err(Error::Schema { .. })));
    }

    #[test]
    fn write_then_read_round_trips() {
        let pop = fixture(12).aligned().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pop.csv");
        save_population(&pop, &path).unwrap();
        let back = load_population(&path, pop.registry).unwrap();
        assert_eq!(back.frame, Frame::Aligned);
        assert_eq!(back.landmarks, pop.landmarks);
        assert_eq!(back.provenance, pop.provenance);
        for (a, b) in pop.subjects.iter().zip(&back.subjects) {
            assert_eq!(a.subject_id, b.subject_id);
            for (ea, eb) in a.landmarks.iter().zip(&b.landmarks) {
                match (ea, eb) {
                    (Some(x), Some(y)) => {
                        assert!((x.bone - y.bone).abs().max() <= 1e-12);
                        assert!((x.skin - y.skin).abs().max() <= 1e-12);
                    }
                    (None, None) => {}
                    _ => panic!("presence changed"),
                }
            }
        }
    }

    fn required(pop: &Population) -> FilterCriteria {
        FilterCriteria::new(pop.landmarks.clone())
    }

    #[test]
    fn clean_population_passes_filter() {
        let pop = fixture(40);
        let (out, report) = filter_subjects(&pop, &required(&pop)).unwrap();
        assert!(report.rejections.is_empty(), "{:?}", report.rejections);
        assert_eq!(out.len(), 40);
    }

    #[test]
    fn zero_thickness_is_rejected() {
        let mut pop = fixture(10);
        let id = pop.landmarks[3];
        let e = pop.subjects[4].entry(id).copied().unwrap();
        pop.subjects[4].set(id, Some(LandmarkEntry { bone: e.bone, skin: e.bone }));
        let (out, report) = filter_subjects(&pop, &required(&pop)).unwrap();
        assert_eq!(out.len(), 9);
        assert_eq!(report.rejections.len(), 1);
        assert_eq!(report.rejections[0].subject_id, pop.subjects[4].subject_id);
        assert!(
            matches!(report.rejections[0].reason, RejectionReason::ThicknessOutOfRange { thickness, .. } if thickness == 0.0)
        );
    }

    #[test]
    fn implanted_outlier_is_the_only_rejection() {
        let mut pop = fixture(30);
        let id = pop.landmarks[7];
        let e = pop.subjects[17].entry(id).copied().unwrap();
        let skin = e.bone + e.direction() * 100.0;
        pop.subjects[17].set(id, Some(LandmarkEntry { bone: e.bone, skin }));
        let (out, report) = filter_subjects(&pop, &required(&pop)).unwrap();
        let rejected: Vec<_> = report.rejections.iter().map(|r| r.subject_id.as_str()).collect();
        assert_eq!(rejected, vec![pop.subjects[17].subject_id.as_str()]);
        assert_eq!(out.len(), 29);
    }

    #[test]
    fn mad_gate_rejects_moderate_outlier() {
        let mut pop = fixture(30);
        let id = pop.landmarks[0];
        let e = pop.subjects[2].entry(id).copied().unwrap();
        // Inside the validity window, far outside the population spread.
        pop.subjects[2].set(id, Some(LandmarkEntry { bone: e.bone, skin: e.bone + e.direction() * 45.0 }));
        let (_, report) = filter_subjects(&pop, &required(&pop)).unwrap();
        let first = &report.rejections[0];
        assert_eq!(first.subject_id, pop.subjects[2].subject_id);
        assert_eq!(first.pass, 1);
        assert!(matches!(first.reason, RejectionReason::Outlier { thickness, .. } if thickness == 45.0));
    }

    #[test]
    fn missing_required_landmark_and_empty_result() {
        let mut pop = fixture(3);
        let id = pop.landmarks[0];
        pop.subjects[0].set(id, None);
        let (out, report) = filter_subjects(&pop, &required(&pop)).unwrap();
        assert_eq!(out.len(), 2);
        assert!(matches!(report.rejections[0].reason, RejectionReason::MissingLandmark { .. }));
        for s in &mut pop.subjects {
            s.set(id, None);
        }
        assert!(matches!(filter_subjects(&pop, &required(&pop)), Err(Error::EmptyResult(3))));
    }

    #[test]
    fn filter_is_idempotent() {
        for seed in 0..5 {
            let mut pop = generate_population(&GeneratorSpec::new(LandmarkSet::SetB, 40), seed).unwrap();
            // Perturb a handful of thicknesses so the outlier gate has work to do.
            for (k, s) in pop.subjects.iter_mut().enumerate().step_by(7) {
                let id = pop.landmarks[k % 29];
                let e = s.entry(id).copied().unwrap();
                s.set(id, Some(LandmarkEntry { bone: e.bone, skin: e.bone + e.direction() * (e.thickness() * 2.5) }));
            }
            let (once, _) = filter_subjects(&pop, &required(&pop)).unwrap();
            let (twice, report) = filter_subjects(&once, &required(&pop)).unwrap();
            assert!(report.rejections.is_empty());
            assert_eq!(once.len(), twice.len());
        }
    }

    fn single_subject_copies(n: usize) -> Population {
        let base = fixture(1).aligned().unwrap();
        let subjects =
            (0..n).map(|i| SubjectRecord { subject_id: format!("C{i}"), ..base.subjects[0].clone() }).collect();
        Population { subjects, ..base }
    }

    #[test]
    fn stats_of_identical_subjects() {
        let pop = single_subject_copies(4);
        let stats = compute_stats(&pop, &pop.landmarks).unwrap();
        for &id in &pop.landmarks {
            let e = pop.subjects[0].entry(id).unwrap();
            let s = stats.get(id).unwrap();
            assert!((s.mean_thickness - e.thickness()).abs() < 1e-12);
            assert!((s.direction() - e.direction()).norm() < 1e-12);
            assert_eq!(s.sample_count, 4);
        }
    }

    #[test]
    fn stats_direction_is_normalized_mean_of_units() {
        let reg = Registry::standard();
        let id = reg.id("Nasion").unwrap();
        let mk = |name: &str, skin: Point3| {
            let mut s = SubjectRecord::new(name, Sex::F, 30, reg.len());
            s.set(id, Some(LandmarkEntry { bone: Point3::origin(), skin }));
            s
        };
        let pop = Population::new(
            reg,
            vec![id],
            vec![mk("a", Point3::new(3.0, 0.0, 0.0)), mk("b", Point3::new(0.0, 7.0, 0.0))],
            Frame::Aligned,
            Provenance::file(),
        )
        .unwrap();
        let s = compute_stats(&pop, &[id]).unwrap();
        let st = s.get(id).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((st.direction() - Vector3::new(r, r, 0.0)).norm() < 1e-15);
        assert_eq!(st.mean_thickness, 5.0);
    }

    #[test]
    fn stats_errors() {
        let pop = fixture(5);
        assert!(matches!(compute_stats(&pop, &pop.landmarks), Err(Error::WrongFrame { .. })));
        let mut al = pop.aligned().unwrap();
        let id = al.landmarks[0];
        for s in al.subjects.iter_mut().skip(1) {
            s.set(id, None);
        }
        assert!(matches!(compute_stats(&al, &[id]), Err(Error::InsufficientSamples { count: 1, .. })));
    }

    #[test]
    fn stats_match_two_pass_oracle() {
        let pop = fixture(50).aligned().unwrap();
        let stats = compute_stats(&pop, &pop.landmarks).unwrap();
        for &id in &pop.landmarks {
            // Independent recomputation: first collect, then reduce.
            let entries: Vec<[f64; 6]> = pop
                .subjects
                .iter()
                .filter_map(|s| s.entry(id))
                .map(|e| [e.bone.x, e.bone.y, e.bone.z, e.skin.x, e.skin.y, e.skin.z])
                .collect();
            let n = entries.len() as f64;
            let mut t = 0.0;
            let mut d = [0.0; 3];
            for e in &entries {
                let v = [e[3] - e[0], e[4] - e[1], e[5] - e[2]];
                let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                t += len;
                for k in 0..3 {
                    d[k] += v[k] / len;
                }
            }
            let dn = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            let s = stats.get(id).unwrap();
            assert!((s.mean_thickness - t / n).abs() < 1e-12);
            for k in 0..3 {
                assert!((s.mean_direction[k] - d[k] / dn).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn stats_are_permutation_invariant(seed in 0u64..1000) {
            let pop = fixture(25).aligned().unwrap();
            let mut shuffled = pop.clone();
            shuffled.subjects.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = compute_stats(&pop, &pop.landmarks).unwrap();
            let b = compute_stats(&shuffled, &pop.landmarks).unwrap();
            for &id in &pop.landmarks {
                let (x, y) = (a.get(id).unwrap(), b.get(id).unwrap());
                prop_assert!((x.mean_thickness - y.mean_thickness).abs() < 1e-12);
                prop_assert!((x.direction() - y.direction()).norm() < 1e-12);
            }
        }
    }
}
