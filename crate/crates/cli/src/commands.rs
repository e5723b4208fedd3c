use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use cfsim::config::{load_config, PopulationSource, RunConfig};
use cfsim::generator::{generate_population, GeneratorSpec};
use cfsim::harness::{
    build_gallery, load_report, prepare_population, run_experiment, save_matrix, save_report, ExperimentConfig,
    ExperimentReport, MatrixFormat,
};
use cfsim::photo::save_photo_set;
use cfsim::population::{load_population, save_population, Population};
use cfsim::report::{condition_label, render_cmc_csv, render_svg, render_table};
use cfsim::Registry;

use crate::manifest::{sha256_file, FileDigest, PopulationRecord, RunManifest, RunSnapshot, Snapshot, Staging};
use crate::{Cli, Command, ConfigArgs, GenerateArgs, ReportArgs};

pub fn dispatch(cli: &Cli) -> Result<()> {
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        bail!("--workers must be at least 1");
    }
    match &cli.command {
        Command::Generate(a) => generate(cli, a),
        Command::Simulate(a) => with_run_snapshot(cli, a, "simulate", |s, out| simulate(s, out)),
        Command::Run(a) => with_run_snapshot(cli, a, "run", |s, out| run(s, out, workers)),
        Command::Report(a) => report(cli, a),
    }
}

/// When rerunning a manifest, checks that the new outputs reproduce the
/// recorded digests.
fn finish(fresh: RunManifest, previous: Option<&RunManifest>) -> Result<()> {
    if let Some(prev) = previous {
        let bad = fresh.output_mismatches(prev);
        if !bad.is_empty() {
            bail!(
                "rerun does not reproduce the manifest; differing outputs: {}",
                bad.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
            );
        }
        eprintln!("reproduced {} output files", prev.outputs.len());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// generate

fn generate(cli: &Cli, args: &GenerateArgs) -> Result<()> {
    let previous = args.from_manifest.as_deref().map(RunManifest::load).transpose()?;
    let snapshot = match &previous {
        Some(m) => match &m.snapshot {
            s @ Snapshot::Generate { .. } => s.clone(),
            other => bail!("manifest records a `{}` command, not `generate`", other.command()),
        },
        None => Snapshot::Generate {
            landmark_set: args.set,
            subjects: args.subjects.expect("clap requires subjects"),
            seed: cli.seed.unwrap_or(1),
            file_name: args.name.clone(),
        },
    };
    let Snapshot::Generate { landmark_set, subjects, seed, ref file_name } = snapshot else { unreachable!() };
    check_file_name(file_name)?;

    let start = Instant::now();
    let staging = Staging::new(&cli.out_dir, "generate")?;
    let pop = generate_population(&GeneratorSpec::new(landmark_set, subjects), seed)?;
    save_population(&pop, &staging.path(file_name))?;
    let mut manifest = RunManifest::new(snapshot.clone());
    manifest.timing.total_s = start.elapsed().as_secs_f64();
    let manifest = staging.commit(manifest)?;
    eprintln!(
        "wrote {} subjects x {} landmarks to {}",
        pop.len(),
        pop.landmarks.len(),
        cli.out_dir.join(file_name).display()
    );
    finish(manifest, previous.as_ref())
}

fn check_file_name(name: &str) -> Result<()> {
    if name.is_empty() || Path::new(name).components().count() != 1 {
        bail!("output name `{name}` must be a plain file name");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate / run

fn with_run_snapshot(
    cli: &Cli,
    args: &ConfigArgs,
    command: &str,
    body: impl FnOnce(&RunSnapshot, &Path) -> Result<RunManifest>,
) -> Result<()> {
    let previous = args.from_manifest.as_deref().map(RunManifest::load).transpose()?;
    let snapshot = match &previous {
        Some(m) => match &m.snapshot {
            Snapshot::Run(s) | Snapshot::Simulate(s) => s.clone(),
            other => bail!("manifest records a `{}` command, not `{command}`", other.command()),
        },
        None => {
            let path = args.config.as_deref().expect("clap requires config");
            snapshot_from_config(path, cli.seed)?
        }
    };
    let manifest = body(&snapshot, &cli.out_dir)?;
    finish(manifest, previous.as_ref())
}

fn snapshot_from_config(path: &Path, seed: Option<u64>) -> Result<RunSnapshot> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let RunConfig { name, landmark_set, population, matrix_format, mut conditions } = load_config(path)?;
    if let Some(seed) = seed {
        for c in &mut conditions {
            c.seed = seed;
        }
    }
    let population = match population {
        PopulationSource::Generate { subjects, seed: pop_seed } => {
            PopulationRecord::Generated { subjects, seed: seed.unwrap_or(pop_seed) }
        }
        PopulationSource::File(p) => {
            let sha256 = sha256_file(&p)?;
            PopulationRecord::File { path: p, sha256 }
        }
    };
    Ok(RunSnapshot { name, landmark_set, population, matrix_format, conditions, config_text: Some(text) })
}

/// The filtered, aligned population of a snapshot, plus digests of any input
/// files.
fn population_of(s: &RunSnapshot) -> Result<(Population, Vec<FileDigest>)> {
    let (raw, inputs) = match &s.population {
        PopulationRecord::Generated { subjects, seed } => {
            (generate_population(&GeneratorSpec::new(s.landmark_set, *subjects), *seed)?, Vec::new())
        }
        PopulationRecord::File { path, sha256 } => {
            let actual = sha256_file(path)?;
            if actual != *sha256 {
                bail!("{} has changed since the manifest was written (sha256 {actual})", path.display());
            }
            let digest = FileDigest { path: path.clone(), sha256: actual };
            (load_population(path, Registry::standard())?, vec![digest])
        }
    };
    let (pop, filter) = prepare_population(&raw, s.landmark_set)?;
    if !filter.rejections.is_empty() {
        eprintln!("filter rejected {} of {} subjects", raw.len() - pop.len(), raw.len());
    }
    Ok((pop, inputs))
}

/// File stem of condition `i`, e.g. `00-e4-16l-mean-real-0px`.
pub fn condition_stem(i: usize, report_like: &ExperimentConfig) -> String {
    let label = format!(
        "{} {} {} {} {}px",
        report_like.experiment,
        report_like.visibility_label(),
        report_like.fstt.thickness,
        report_like.fstt.direction,
        report_like.noise_px
    );
    format!("{i:02}-{}", label.to_lowercase().replace([' ', '/'], "-"))
}

fn simulate(s: &RunSnapshot, out_dir: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    let staging = Staging::new(out_dir, "simulate")?;
    let (pop, inputs) = population_of(s)?;
    for (i, config) in s.conditions.iter().enumerate() {
        config.validate()?;
        let gallery = build_gallery(config, &pop)?;
        save_photo_set(&gallery, &staging.path(&format!("{}.photos.csv", condition_stem(i, config))), pop.registry)?;
        eprintln!("condition {i}: {} photos", gallery.len());
    }
    let mut manifest = RunManifest::new(Snapshot::Simulate(s.clone()));
    manifest.inputs = inputs;
    manifest.timing.total_s = start.elapsed().as_secs_f64();
    staging.commit(manifest)
}

fn run(s: &RunSnapshot, out_dir: &Path, workers: usize) -> Result<RunManifest> {
    let start = Instant::now();
    let staging = Staging::new(out_dir, "run")?;
    let (pop, inputs) = population_of(s)?;
    let mut manifest = RunManifest::new(Snapshot::Run(s.clone()));
    manifest.inputs = inputs;
    let mut reports = Vec::new();
    for (i, config) in s.conditions.iter().enumerate() {
        let out = run_experiment(config, &pop, workers)?;
        let stem = condition_stem(i, config);
        let ext = match s.matrix_format {
            MatrixFormat::Csv => "csv",
            MatrixFormat::Binary => "bin",
        };
        save_matrix(&out.matrix, &staging.path(&format!("{stem}.matrix.{ext}")), s.matrix_format)?;
        save_report(&out.report, &staging.path(&format!("{stem}.report.json")))?;
        eprintln!(
            "{}: rank {:.2}, accuracy {:.1}% ({} SFOs in {:.1} s)",
            condition_label(&out.report),
            out.report.averaged_rank,
            out.report.accuracy,
            out.report.sfo_count,
            out.stats.elapsed_s
        );
        manifest.timing.conditions.push(out.stats);
        reports.push(out.report);
    }
    let table = render_table(&reports);
    fs::write(staging.path("table.txt"), &table)?;
    print!("{table}");
    manifest.timing.total_s = start.elapsed().as_secs_f64();
    staging.commit(manifest)
}

// ---------------------------------------------------------------------------
// report

/// Reports named by `inputs`, with digests of every file read. A run
/// manifest stands for all of its reports, and each report's `#SFO` is
/// checked against the manifest's config.
fn collect_reports(inputs: &[PathBuf]) -> Result<(Vec<ExperimentReport>, Vec<FileDigest>)> {
    let mut reports = Vec::new();
    let mut digests = Vec::new();
    for input in inputs {
        digests.push(FileDigest::of(input, input.clone())?);
        if input.to_string_lossy().ends_with(".manifest.json") {
            let m = RunManifest::load(input)?;
            let Snapshot::Run(snap) = &m.snapshot else {
                bail!("{} is not a run manifest", input.display());
            };
            let dir = input.parent().unwrap_or(Path::new(""));
            let files: Vec<&FileDigest> =
                m.outputs.iter().filter(|d| d.path.to_string_lossy().ends_with(".report.json")).collect();
            if files.len() != snap.conditions.len() {
                bail!("{} lists {} reports for {} conditions", input.display(), files.len(), snap.conditions.len());
            }
            for (d, config) in files.into_iter().zip(&snap.conditions) {
                let path = dir.join(&d.path);
                if sha256_file(&path)? != d.sha256 {
                    bail!("{} does not match its manifest digest", path.display());
                }
                let r = load_report(&path)?;
                let photos = r.subjects * config.photos_per_subject();
                if r.config != *config || r.photos != photos || r.sfo_count != r.subjects * photos {
                    bail!(
                        "{} is inconsistent with its manifest: #SFO {}, expected {} skulls x {photos} photos",
                        path.display(),
                        r.sfo_count,
                        r.subjects
                    );
                }
                reports.push(r);
            }
        } else {
            let r = load_report(input)?;
            if r.sfo_count != r.subjects * r.photos {
                bail!("{}: #SFO {} is not {} skulls x {} photos", input.display(), r.sfo_count, r.subjects, r.photos);
            }
            reports.push(r);
        }
    }
    if reports.is_empty() {
        return Err(anyhow!("no reports to render"));
    }
    Ok((reports, digests))
}

fn report(cli: &Cli, args: &ReportArgs) -> Result<()> {
    let previous = args.from_manifest.as_deref().map(RunManifest::load).transpose()?;
    let inputs = match &previous {
        Some(m) => match &m.snapshot {
            Snapshot::Report { inputs } => {
                for (path, d) in inputs.iter().zip(&m.inputs) {
                    if sha256_file(path)? != d.sha256 {
                        bail!("{} has changed since the manifest was written", path.display());
                    }
                }
                inputs.clone()
            }
            other => bail!("manifest records a `{}` command, not `report`", other.command()),
        },
        None => args.inputs.clone(),
    };
    let start = Instant::now();
    let (reports, digests) = collect_reports(&inputs)?;
    let staging = Staging::new(&cli.out_dir, "report")?;
    let table = render_table(&reports);
    fs::write(staging.path("table.txt"), &table)?;
    fs::write(staging.path("cmc.csv"), render_cmc_csv(&reports))?;
    fs::write(staging.path("accuracy.svg"), render_svg(&reports))?;
    print!("{table}");
    let mut manifest = RunManifest::new(Snapshot::Report { inputs });
    manifest.inputs = digests;
    manifest.timing.total_s = start.elapsed().as_secs_f64();
    let manifest = staging.commit(manifest)?;
    finish(manifest, previous.as_ref())
}
