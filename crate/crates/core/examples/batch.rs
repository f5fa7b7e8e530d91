//! A parallel batch of rump-steak trials and its outcome tally.

use std::collections::BTreeMap;
use std::sync::Arc;

use drs_scan::cli::run_batch;
use drs_scan::control::{ControlConfig, ScanCommand, SensorSuite, Stage, StartPolicy, TrialSpec};
use drs_scan::eval::percentile;
use drs_scan::jacobian::{collect_dataset, fit_gmm_lls, ExcitationPolicy, JacobianFitConfig};
use drs_scan::scene::presets;
use drs_scan::SamplePreset;

fn main() -> drs_scan::Result<()> {
    let preset = SamplePreset::RumpSteak;
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

    let t0 = std::time::Instant::now();
    let logs = run_batch(&spec, &est, 5, preset.protocol_repeats(), None)?;
    let mut tally = BTreeMap::new();
    for l in &logs {
        *tally.entry(l.summary.outcome.to_string()).or_insert(0) += 1;
    }
    let approach: Vec<f64> = logs
        .iter()
        .filter(|l| l.summary.outcome == Stage::Done)
        .filter_map(|l| l.summary.approach_time_s)
        .collect();
    println!("{} trials in {:.1} s: {tally:?}", logs.len(), t0.elapsed().as_secs_f64());
    if !approach.is_empty() {
        println!(
            "approach time median {:.1} s, p90 {:.1} s",
            percentile(&approach, 50.0)?,
            percentile(&approach, 90.0)?
        );
    }
    Ok(())
}
