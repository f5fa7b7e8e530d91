//! One closed-loop trial on the stomach phantom, printed as a stage timeline.
//!
//! `cargo run --release --example single_trial [log_dir]`

use std::sync::Arc;

use drs_scan::control::{run_trial, ControlConfig, ScanCommand, SensorSuite, StartPolicy, TrialSpec};
use drs_scan::jacobian::{collect_dataset, fit_gmm_lls, ExcitationPolicy, JacobianFitConfig};
use drs_scan::scene::presets;
use drs_scan::SamplePreset;

fn main() -> drs_scan::Result<()> {
    let preset = SamplePreset::StomachPhantom;
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
    let log = run_trial(&spec, &est, 11, 0)?;

    let mut last = None;
    for r in &log.ticks {
        if last != Some(r.stage) {
            println!(
                "t = {:6.2} s  {:<10} probe ({:6.1}, {:6.1}, {:6.1}) mm  h = {:5.2} mm  beta = {:.2}",
                r.t,
                r.stage.to_string(),
                r.position.x,
                r.position.y,
                r.position.z,
                r.h_true,
                r.beta
            );
            last = Some(r.stage);
        }
    }
    let s = &log.summary;
    println!(
        "outcome {}: approach {:.1} s, scan {:.1} s, {} spectra",
        s.outcome,
        s.approach_time_s.unwrap_or(f64::NAN),
        s.scan_time_s.unwrap_or(f64::NAN),
        log.spectra.len()
    );
    if let Some(dir) = std::env::args().nth(1) {
        log.save(dir.as_ref())?;
        println!("log written to {dir}");
    }
    Ok(())
}
