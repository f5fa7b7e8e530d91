//! Places the probe over the lamb liver at a few heights and prints what the
//! third-person camera and the height sensor report.

use std::sync::Arc;

use drs_scan::perception::{measure_features, measure_height, FeatureNoiseModel, HeightSensorModel};
use drs_scan::rng::SeedStreams;
use drs_scan::scene::{presets, SceneState};
use drs_scan::SamplePreset;

fn main() -> drs_scan::Result<()> {
    let scene = Arc::new(presets::scene(SamplePreset::LambLiver)?);
    let noise = FeatureNoiseModel::default();
    let heights = HeightSensorModel::presets();
    let mut rng = SeedStreams::new(1).stream("example", 0);

    println!("   h mm | tip px (true)      light px (true)    | tip px (seen)      light px (seen)    | h seen");
    for h in [20.0, 10.0, 5.0, 2.0, 0.5, 0.0] {
        let state = SceneState::at_height(Arc::clone(&scene), 10.0, 5.0, h)?;
        let (tip, light) = state.ground_truth_features()?;
        let seen = measure_features(&state, &noise, &mut rng)?;
        let h_seen = measure_height(&state, &heights, &mut rng)?;
        let seen = match seen {
            Some(f) => format!("({:6.1}, {:6.1})   ({:6.1}, {:6.1})", f.tip.x, f.tip.y, f.light.x, f.light.y),
            None => "dropped".to_string(),
        };
        println!(
            "{h:7.1} | ({:6.1}, {:6.1})   ({:6.1}, {:6.1})   | {seen} | {h_seen:6.2}",
            tip.x, tip.y, light.x, light.y
        );
    }
    Ok(())
}
