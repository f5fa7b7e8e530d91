//! The experiment commands. Each writes into its own output directory and
//! leaves its inputs untouched.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use super::config::{ExperimentConfig, RESOLVED_CONFIG};
use crate::control::log::SUMMARY_JSON;
use crate::control::{run_trial, ScanCommand, Stage, TrialLog, TrialSpec};
use crate::error::{Error, Result};
use crate::eval::{build_report, percentile, simulate_manual_scan, write_plots, MetricsReport, ReportConfig, SampleLogs};
use crate::jacobian::{collect_dataset, fit_gmm_lls, InverseJacobian, SavedEstimator};
use crate::scene::Scene;

/// Suffix of the provenance record each command writes, as `<command>.provenance.json`.
pub const PROVENANCE_JSON: &str = "provenance.json";
pub const CALIBRATION_JSON: &str = "calibration.json";
pub const BATCH_SUMMARY_JSON: &str = "batch_summary.json";

/// Overrides given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub line: Option<ScanCommand>,
    pub out: Option<PathBuf>,
    pub estimator: Option<PathBuf>,
    pub jobs: Option<usize>,
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub message: String,
    /// Set when more trials failed than the config allows.
    pub too_many_failures: bool,
}

impl Outcome {
    fn ok(message: String) -> Self {
        Self {
            message,
            too_many_failures: false,
        }
    }
}

/// Git's object id for a file: SHA-1 over `blob <len>\0` and the bytes.
pub fn git_blob_sha1(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunProvenance {
    pub command: String,
    pub seed: u64,
    pub crate_version: String,
    pub estimator_file: Option<PathBuf>,
    pub estimator_sha1: Option<String>,
    pub scene_file: Option<PathBuf>,
    pub scene_sha1: Option<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn hash_file(path: &Option<PathBuf>) -> Result<Option<String>> {
    path.as_ref().map(|p| Ok(git_blob_sha1(&std::fs::read(p)?))).transpose()
}

/// Resolves the config, creates the output directory and records how the
/// outputs were produced.
struct Prepared {
    config: ExperimentConfig,
    scene: Arc<Scene>,
    out: PathBuf,
}

fn prepare(config: &ExperimentConfig, ov: &Overrides) -> Result<Prepared> {
    let mut c = config.clone();
    if let Some(seed) = ov.seed {
        c.seed = seed;
    }
    if let Some(line) = ov.line {
        c.line = Some(line);
    }
    if let Some(e) = &ov.estimator {
        c.estimator_file = Some(e.clone());
    }
    let out = super::config::output_dir(ov.out.as_deref(), c.out_dir.as_deref());
    let scene = c.scene()?;
    let config = c.resolve(&scene, &out)?;
    Ok(Prepared {
        config,
        scene: Arc::new(scene),
        out,
    })
}

fn record(p: &Prepared, command: &str, with_estimator: bool) -> Result<()> {
    std::fs::create_dir_all(&p.out)?;
    std::fs::write(p.out.join(format!("{command}.{RESOLVED_CONFIG}")), p.config.to_toml_string()?)?;
    let estimator_file = if with_estimator { p.config.estimator_file.clone() } else { None };
    write_json(
        &p.out.join(format!("{command}.{PROVENANCE_JSON}")),
        &RunProvenance {
            command: command.into(),
            seed: p.config.seed,
            crate_version: env!("CARGO_PKG_VERSION").into(),
            estimator_sha1: hash_file(&estimator_file)?,
            estimator_file,
            scene_sha1: hash_file(&p.config.scene_file)?,
            scene_file: p.config.scene_file.clone(),
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDiagnostics {
    pub points: usize,
    pub residual_rms_mm_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub k: usize,
    pub train_samples: usize,
    pub held_out_samples: usize,
    /// Root-mean-square of `|v - J s_dot|` over the held-out samples, mm/s.
    pub held_out_rms_mm_s: f64,
    /// That residual relative to the root-mean-square held-out speed.
    pub held_out_relative: f64,
    pub em_iterations: usize,
    pub em_converged: bool,
    pub final_mean_log_likelihood: f64,
    pub dataset_fingerprint: String,
    pub clusters: Vec<ClusterDiagnostics>,
}

pub fn cmd_calibrate_jacobian(config: &ExperimentConfig, ov: &Overrides) -> Result<Outcome> {
    let p = prepare(config, ov)?;
    let cal = &p.config.calibration;
    let excitation = cal.excitation.as_ref().expect("resolved");
    let dataset = collect_dataset(&p.scene, excitation, cal.dt)?;
    let (train, held) = dataset.split_holdout(cal.holdout_stride);
    let (est, fit) = fit_gmm_lls(&train, &cal.fit)?;
    let (mut sq, mut vv) = (0.0, 0.0);
    for s in &held {
        let j = est.inverse_jacobian(&s.features())?;
        sq += (s.v - j * s.s_dot).norm_squared();
        vv += s.v.norm_squared();
    }
    let n = held.len().max(1) as f64;
    let summary = CalibrationSummary {
        k: est.k(),
        train_samples: train.len(),
        held_out_samples: held.len(),
        held_out_rms_mm_s: (sq / n).sqrt(),
        held_out_relative: if vv > 0.0 { (sq / vv).sqrt() } else { 0.0 },
        em_iterations: fit.log_likelihood.len(),
        em_converged: fit.converged,
        final_mean_log_likelihood: fit.log_likelihood.last().copied().unwrap_or(f64::NAN),
        dataset_fingerprint: train.fingerprint(),
        clusters: est
            .maps
            .iter()
            .map(|m| ClusterDiagnostics {
                points: m.points,
                residual_rms_mm_s: m.residual_rms,
            })
            .collect(),
    };
    let path = p.config.estimator_file.clone().expect("resolved");
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    SavedEstimator::GmmLls(est).save(&path)?;
    record(&p, "calibrate-jacobian", true)?;
    write_json(&p.out.join(CALIBRATION_JSON), &summary)?;
    Ok(Outcome::ok(format!(
        "estimator written to {} (K={}, held-out residual {:.3e} mm/s rms, {:.3e} relative)",
        path.display(),
        summary.k,
        summary.held_out_rms_mm_s,
        summary.held_out_relative
    )))
}

fn load_estimator(c: &ExperimentConfig) -> Result<SavedEstimator> {
    let path = c.estimator_file.as_ref().expect("resolved");
    if !path.exists() {
        return Err(Error::Config(format!(
            "estimator file {} does not exist; run calibrate-jacobian first",
            path.display()
        )));
    }
    SavedEstimator::load(path)
}

fn trial_spec(p: &Prepared) -> TrialSpec {
    let c = &p.config;
    TrialSpec {
        scene: Arc::clone(&p.scene),
        control: c.control.expect("resolved"),
        sensors: c.sensors.clone().expect("resolved"),
        command: c.line.expect("resolved"),
        start: c.start,
    }
}

pub fn trial_dir(out: &Path, index: u64) -> PathBuf {
    out.join(format!("trial_{index:04}"))
}

pub fn cmd_run(config: &ExperimentConfig, ov: &Overrides) -> Result<Outcome> {
    let p = prepare(config, ov)?;
    let est = load_estimator(&p.config)?;
    let spec = trial_spec(&p);
    let log = run_trial(&spec, est.as_inverse_jacobian(), p.config.seed, 0)?;
    record(&p, "run", true)?;
    let dir = trial_dir(&p.out, 0);
    log.save(&dir)?;
    let failed = log.summary.outcome != Stage::Done;
    Ok(Outcome {
        message: format!("trial {} after {} ticks, log in {}", log.summary.outcome, log.summary.ticks, dir.display()),
        too_many_failures: failed && p.config.max_failure_rate < 1.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSummary {
    pub seed: u64,
    pub trials: usize,
    pub done: usize,
    pub success_rate: f64,
    /// Count per outcome tag.
    pub outcomes: BTreeMap<String, usize>,
    pub approach_median_s: Option<f64>,
    pub approach_p90_s: Option<f64>,
}

impl BatchSummary {
    pub fn from_logs(seed: u64, logs: &[TrialLog]) -> Self {
        let done = logs.iter().filter(|l| l.summary.outcome == Stage::Done).count();
        let mut outcomes = BTreeMap::new();
        for l in logs {
            *outcomes.entry(l.summary.outcome.to_string()).or_insert(0) += 1;
        }
        let approach: Vec<f64> = logs.iter().filter_map(|l| l.summary.approach_time_s).collect();
        Self {
            seed,
            trials: logs.len(),
            done,
            success_rate: if logs.is_empty() { 0.0 } else { done as f64 / logs.len() as f64 },
            outcomes,
            approach_median_s: percentile(&approach, 50.0).ok(),
            approach_p90_s: percentile(&approach, 90.0).ok(),
        }
    }
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs:?} worker threads: {e}")))
}

/// Runs `repeats` trials with indices `0..repeats`; the result does not
/// depend on the number of workers.
pub fn run_batch(spec: &TrialSpec, est: &dyn InverseJacobian, seed: u64, repeats: usize, jobs: Option<usize>) -> Result<Vec<TrialLog>> {
    pool(jobs)?.install(|| {
        (0..repeats as u64)
            .into_par_iter()
            .map(|i| run_trial(spec, est, seed, i))
            .collect()
    })
}

pub fn cmd_batch(config: &ExperimentConfig, ov: &Overrides) -> Result<Outcome> {
    let p = prepare(config, ov)?;
    let est = load_estimator(&p.config)?;
    let spec = trial_spec(&p);
    let repeats = p.config.repeats.expect("resolved");
    let logs = run_batch(&spec, est.as_inverse_jacobian(), p.config.seed, repeats, ov.jobs)?;
    record(&p, "batch", true)?;
    for l in &logs {
        l.save(&trial_dir(&p.out, l.summary.index))?;
    }
    let summary = BatchSummary::from_logs(p.config.seed, &logs);
    write_json(&p.out.join(BATCH_SUMMARY_JSON), &summary)?;
    let failure_rate = 1.0 - summary.success_rate;
    let fmt = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.2} s"));
    Ok(Outcome {
        message: format!(
            "{}/{} trials done ({:.0}%), approach median {} p90 {}; logs in {}",
            summary.done,
            summary.trials,
            100.0 * summary.success_rate,
            fmt(summary.approach_median_s),
            fmt(summary.approach_p90_s),
            p.out.display()
        ),
        too_many_failures: failure_rate > p.config.max_failure_rate,
    })
}

pub fn manual_dir(out: &Path, index: u64) -> PathBuf {
    out.join(format!("manual_{index:04}"))
}

pub fn cmd_manual(config: &ExperimentConfig, ov: &Overrides) -> Result<Outcome> {
    let p = prepare(config, ov)?;
    let m = &p.config.manual;
    let sensors = p.config.sensors.as_ref().expect("resolved");
    let logs = simulate_manual_scan(&p.scene, &m.operator, &m.region, &m.protocol, sensors, p.config.seed)?;
    record(&p, "manual", false)?;
    for l in &logs {
        l.save(&manual_dir(&p.out, l.summary.index))?;
    }
    Ok(Outcome::ok(format!("{} manual sweeps written to {}", logs.len(), p.out.display())))
}

/// Directories below `root` holding a trial summary, sorted.
pub fn find_trial_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if dir.join(SUMMARY_JSON).is_file() {
            found.push(dir);
            continue;
        }
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

/// Each directory is one sample, named after its last path component.
pub fn load_samples(dirs: &[PathBuf]) -> Result<Vec<SampleLogs>> {
    dirs.iter()
        .map(|d| {
            let logs = find_trial_dirs(d)?.iter().map(|t| TrialLog::load(t)).collect::<Result<Vec<_>>>()?;
            let name = d
                .canonicalize()
                .ok()
                .and_then(|c| c.file_name().map(|n| n.to_string_lossy().into_owned()))
                .unwrap_or_else(|| d.display().to_string());
            Ok(SampleLogs::from_logs(name, logs))
        })
        .collect()
}

pub fn cmd_report(dirs: &[PathBuf], config: &ReportConfig, out: &Path) -> Result<Outcome> {
    if dirs.is_empty() {
        return Err(Error::Config("report needs at least one log directory".into()));
    }
    let samples = load_samples(dirs)?;
    if let Some(empty) = samples.iter().zip(dirs).find(|(s, _)| s.automatic.is_empty() && s.manual.is_empty()) {
        return Err(Error::Config(format!("no trial logs found under {}", empty.1.display())));
    }
    let report = build_report(&samples, config)?;
    report.save(out)?;
    Ok(Outcome::ok(format!("report for {} samples written to {}", report.rows.len(), out.display())))
}

pub fn cmd_plot(report: &Path, out: &Path) -> Result<Outcome> {
    let report = MetricsReport::load(report)?;
    let files = write_plots(&report, out)?;
    Ok(Outcome::ok(format!("{} figures written to {}", files.len(), out.display())))
}
