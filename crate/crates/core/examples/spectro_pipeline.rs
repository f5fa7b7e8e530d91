//! Raw spectra of one material at several probe heights, run through
//! calibration, smoothing and cropping.

use drs_scan::eval::spectral_angle;
use drs_scan::rng::SeedStreams;
use drs_scan::spectro::{synthesize_raw, Pipeline, PipelineConfig, TissueOpticalModel};

fn main() -> drs_scan::Result<()> {
    let optics = TissueOpticalModel::default();
    let pipeline = Pipeline::new(&PipelineConfig::default())?;
    let (white, dark) = (optics.white(), optics.dark());
    let mut rng = SeedStreams::new(2).stream("example", 0);

    let material = "liver_phantom";
    let reference = pipeline.run(&synthesize_raw(&optics, material, 0.0, &mut rng)?, &white, &dark)?;
    println!(
        "{} raw channels -> {} processed channels ({:.0}-{:.0} nm)",
        white.values.len(),
        reference.spectrum.values.len(),
        reference.spectrum.grid.start_nm,
        reference.spectrum.grid.end_nm()
    );
    println!("   h mm | intensity | angle to contact fingerprint, rad");
    for h in [-1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0] {
        let p = pipeline.run(&synthesize_raw(&optics, material, h, &mut rng)?, &white, &dark)?;
        let theta = spectral_angle(&p.fingerprint.values, &reference.fingerprint.values)?;
        println!("{h:7.1} | {:9.4} | {theta:.4}", p.intensity);
    }
    Ok(())
}
