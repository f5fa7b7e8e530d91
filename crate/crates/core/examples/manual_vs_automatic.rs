//! Automatic and simulated handheld scans of the liver phantom, compared in a
//! report and drawn as SVG figures.
//!
//! `cargo run --release --example manual_vs_automatic [out_dir]`

use std::path::PathBuf;
use std::sync::Arc;

use drs_scan::cli::run_batch;
use drs_scan::control::{ControlConfig, ScanCommand, SensorSuite, StartPolicy, TrialSpec};
use drs_scan::eval::{
    build_report, simulate_manual_scan, write_plots, ManualOperatorModel, ManualProtocol, ManualRegion, ReportConfig,
    SampleLogs,
};
use drs_scan::jacobian::{collect_dataset, fit_gmm_lls, ExcitationPolicy, JacobianFitConfig};
use drs_scan::scene::presets;
use drs_scan::SamplePreset;

fn main() -> drs_scan::Result<()> {
    let preset = SamplePreset::LiverPhantom;
    let scene = Arc::new(presets::scene(preset)?);
    let data = collect_dataset(&scene, &ExcitationPolicy::default_sweeps(), 1.0 / 30.0)?;
    let (est, _) = fit_gmm_lls(&data, &JacobianFitConfig::default())?;
    let spec = TrialSpec {
        scene: Arc::clone(&scene),
        control: ControlConfig::for_preset(preset),
        sensors: SensorSuite::default(),
        command: ScanCommand::default_for(&scene)?,
        start: StartPolicy::default(),
    };
    let mut logs = run_batch(&spec, &est, 3, 10, None)?;
    logs.extend(simulate_manual_scan(
        &scene,
        &ManualOperatorModel::default(),
        &ManualRegion::default(),
        &ManualProtocol::default(),
        &spec.sensors,
        3,
    )?);

    let report = build_report(&[SampleLogs::from_logs(preset.name(), logs)], &ReportConfig::default())?;
    let row = &report.rows[0];
    let q = |v: Option<drs_scan::eval::report::Quartiles>| v.map_or(f64::NAN, |q| q.p75 - q.p25);
    println!("sample {}: {}/{} automatic trials done", row.sample, row.done, row.trials);
    println!(
        "fingerprint spread x1e-2: manual {:.4}, automatic {:.4}; rmse x1e-3 {:.3}, angle {:.4} rad",
        row.sigma_m_e2.unwrap_or(f64::NAN),
        row.sigma_a_e2.unwrap_or(f64::NAN),
        row.rmse_e3.unwrap_or(f64::NAN),
        row.theta_rad.unwrap_or(f64::NAN)
    );
    println!("intensity IQR: manual {:.4}, automatic {:.4}", q(row.intensity_m), q(row.intensity_a));

    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("drs_scan_example"));
    report.save(&out)?;
    for p in write_plots(&report, &out)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
