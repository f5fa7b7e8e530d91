//! Collects an exploration dataset, fits the mixture-of-local-maps inverse
//! Jacobian and compares it with the analytic one on held-out samples.
//!
//! `cargo run --release --example calibrate_jacobian [out.json]`

use std::sync::Arc;

use drs_scan::jacobian::persist::SavedEstimator;
use drs_scan::jacobian::{
    analytic_inverse_jacobian, collect_dataset, fit_gmm_lls, ExcitationPolicy, InverseJacobian, JacobianFitConfig,
};
use drs_scan::scene::presets;
use drs_scan::SamplePreset;

fn main() -> drs_scan::Result<()> {
    let scene = Arc::new(presets::scene(SamplePreset::LiverPhantom)?);
    let data = collect_dataset(&scene, &ExcitationPolicy::default_sweeps(), 1.0 / 30.0)?;
    let (train, held) = data.split_holdout(20);
    let (est, fit) = fit_gmm_lls(&train, &JacobianFitConfig::default())?;
    println!(
        "{} training samples, K = {}, EM {} iterations (converged: {})",
        train.len(),
        est.k(),
        fit.log_likelihood.len(),
        fit.converged
    );

    let mut errs: Vec<f64> = held
        .iter()
        .filter_map(|s| {
            let f = s.features();
            let truth = analytic_inverse_jacobian(&scene, &f).ok()?;
            Some((est.inverse_jacobian(&f).ok()? - truth).norm() / truth.norm())
        })
        .collect();
    errs.sort_by(f64::total_cmp);
    println!(
        "held-out relative error against the analytic Jacobian: median {:.3}, p90 {:.3}",
        errs[errs.len() / 2],
        errs[errs.len() * 9 / 10]
    );

    if let Some(path) = std::env::args().nth(1) {
        SavedEstimator::GmmLls(est).save(path.as_ref())?;
        println!("saved {path}");
    }
    Ok(())
}
