//! The `drs-scan` command line.
//!
//! ```text
//! drs-scan calibrate-jacobian --config exp.toml
//! drs-scan run   --config exp.toml --seed 3 --line 100,300,220,300
//! drs-scan batch --config exp.toml --jobs 8
//! drs-scan manual --config exp.toml
//! drs-scan report runs/liver runs/lamb --out runs/report
//! drs-scan plot runs/report/report.json --out runs/figures
//! ```
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 when too many
//! trials fail, 4 for I/O errors.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_batch, cmd_calibrate_jacobian, cmd_manual, cmd_plot, cmd_report, cmd_run, find_trial_dirs, git_blob_sha1, load_samples,
    manual_dir, run_batch, trial_dir, BatchSummary, CalibrationSummary, Outcome, Overrides, RunProvenance, BATCH_SUMMARY_JSON,
    CALIBRATION_JSON, PROVENANCE_JSON,
};
pub use config::{
    output_dir, CalibrationConfig, ExperimentConfig, ManualConfig, CONFIG_FORMAT_VERSION, DEFAULT_OUT, ESTIMATOR_JSON, OUT_ENV,
    RESOLVED_CONFIG,
};

use crate::control::ScanCommand;
use crate::error::{Error, Result};
use crate::eval::ReportConfig;
use crate::SamplePreset;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TRIALS_FAILED: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "drs-scan", version, about = "Autonomous DRS scanning simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment TOML. Without it the liver phantom preset is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sample preset when no config is given.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Scan line in image pixels: u0,v0,u1,v1.
    #[arg(long)]
    pub line: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Estimator JSON, overriding the config.
    #[arg(long)]
    pub estimator: Option<PathBuf>,
    /// Worker threads for batches (all cores by default).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Collect exploration data, fit the GMM-LLS estimator and save it.
    CalibrateJacobian(Common),
    /// One closed-loop trial.
    Run(Common),
    /// `repeats` seeded trials plus a batch summary.
    Batch(Common),
    /// Simulated hand-held sweeps.
    Manual(Common),
    /// Metrics report over log directories, one directory per sample.
    Report {
        dirs: Vec<PathBuf>,
        /// Experiment TOML supplying the report section.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SVG figures from a report.json.
    Plot {
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn experiment(c: &Common) -> Result<(ExperimentConfig, Overrides)> {
    let config = match (&c.config, &c.preset) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(name)) => ExperimentConfig::for_preset(name.parse::<SamplePreset>().map_err(|_| {
            Error::Config(format!(
                "unknown preset `{name}` (expected one of {})",
                SamplePreset::ALL.map(|p| p.name()).join(", ")
            ))
        })?),
        (None, None) => ExperimentConfig::for_preset(SamplePreset::LiverPhantom),
    };
    let line = c.line.as_deref().map(ScanCommand::parse).transpose()?;
    Ok((
        config,
        Overrides {
            seed: c.seed,
            line,
            out: c.out.clone(),
            estimator: c.estimator.clone(),
            jobs: c.jobs,
        },
    ))
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::CalibrateJacobian(c) => experiment(c).and_then(|(e, o)| cmd_calibrate_jacobian(&e, &o)),
        Command::Run(c) => experiment(c).and_then(|(e, o)| cmd_run(&e, &o)),
        Command::Batch(c) => experiment(c).and_then(|(e, o)| cmd_batch(&e, &o)),
        Command::Manual(c) => experiment(c).and_then(|(e, o)| cmd_manual(&e, &o)),
        Command::Report { dirs, config, out } => {
            let report = match config {
                Some(p) => ExperimentConfig::load(p)?.report,
                None => ReportConfig::default(),
            };
            cmd_report(dirs, &report, &out.clone().unwrap_or_else(|| output_dir(None, None).join("report")))
        }
        Command::Plot { report, out } => cmd_plot(report, &out.clone().unwrap_or_else(|| output_dir(None, None).join("figures"))),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Csv(c) if matches!(c.kind(), csv::ErrorKind::Io(_)) => EXIT_IO,
        Error::Json(j) if j.is_io() => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            println!("{}", outcome.message);
            if outcome.too_many_failures {
                eprintln!("error: trial failures exceed the configured threshold");
                EXIT_TRIALS_FAILED
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
