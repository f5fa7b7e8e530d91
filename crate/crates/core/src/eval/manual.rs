//! Simulated hand-held acquisition: the operator sweeps the probe back and
//! forth over a surface segment while the hand tremor moves the contact
//! height (an Ornstein-Uhlenbeck process) and the path wanders sideways.

use std::sync::Arc;

use nalgebra::{Point3, Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::control::log::{TickRecord, TrialLog, TrialSummary, TRIAL_FORMAT_VERSION};
use crate::control::{ScanCommand, SensorSuite, Stage};
use crate::error::{Error, Result};
use crate::rng::{self, SeedStreams};
use crate::scene::{ProbePose, Scene, SceneState};
use crate::spectro::{synthesize_raw, Pipeline};

/// The tremor amplitude is meant to exceed the automatic height-sensing
/// noise; that gap is the premise of the manual/automatic comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualOperatorModel {
    /// Stationary standard deviation of the contact height, mm.
    pub sigma_hand_mm: f64,
    /// Correlation time of the height tremor, s.
    pub tremor_tau_s: f64,
    /// Mean contact height the hand holds, mm.
    pub mean_offset_mm: f64,
    /// Stationary standard deviation of the sideways wander, mm.
    pub sigma_xy_mm: f64,
    pub wander_tau_s: f64,
    /// Sweep speed along the segment, mm/s.
    pub speed_mm_s: f64,
    pub sample_rate_hz: f64,
}

impl Default for ManualOperatorModel {
    fn default() -> Self {
        Self {
            sigma_hand_mm: 1.0,
            tremor_tau_s: 0.6,
            mean_offset_mm: 0.0,
            sigma_xy_mm: 1.5,
            wander_tau_s: 1.5,
            speed_mm_s: 5.0,
            sample_rate_hz: 30.0,
        }
    }
}

impl ManualOperatorModel {
    /// No tremor and no wander: a scripted sweep at the mean offset.
    pub fn steady(&self) -> Self {
        Self {
            sigma_hand_mm: 0.0,
            sigma_xy_mm: 0.0,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [self.sigma_hand_mm, self.sigma_xy_mm];
        let pos = [self.tremor_tau_s, self.wander_tau_s, self.speed_mm_s, self.sample_rate_hz];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            || pos.iter().any(|v| !(v.is_finite() && *v > 0.0))
            || !self.mean_offset_mm.is_finite()
        {
            return Err(Error::Config(
                "manual operator needs finite non-negative spreads and positive time constants, speed and rate".into(),
            ));
        }
        Ok(())
    }
}

/// Straight surface segment, `(x, y)` in mm, swept back and forth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualRegion {
    pub from_mm: [f64; 2],
    pub to_mm: [f64; 2],
}

impl Default for ManualRegion {
    fn default() -> Self {
        Self {
            from_mm: [-40.0, 5.0],
            to_mm: [40.0, 5.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualProtocol {
    pub duration_s: f64,
    pub repeats: usize,
}

impl Default for ManualProtocol {
    fn default() -> Self {
        Self {
            duration_s: 30.0,
            repeats: 5,
        }
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// One exact Ornstein-Uhlenbeck step toward zero.
fn ou_step<R: Rng + ?Sized>(x: f64, sigma: f64, tau: f64, dt: f64, rng: &mut R) -> f64 {
    let decay = (-dt / tau).exp();
    x * decay + sigma * (1.0 - decay * decay).sqrt() * normal(rng)
}

/// Position along a back-and-forth sweep of length `len` after travelling `s`.
fn ping_pong(s: f64, len: f64) -> f64 {
    let r = s.rem_euclid(2.0 * len);
    if r <= len {
        r
    } else {
        2.0 * len - r
    }
}

/// Runs `protocol.repeats` hand-held sweeps. Each repeat draws its tremor from
/// the operator stream and its spectra from the manual-spectrum stream at the
/// repeat index. Positions that leave the tissue are clamped to its edge.
pub fn simulate_manual_scan(
    scene: &Arc<Scene>,
    operator: &ManualOperatorModel,
    region: &ManualRegion,
    protocol: &ManualProtocol,
    sensors: &SensorSuite,
    seed: u64,
) -> Result<Vec<TrialLog>> {
    operator.validate()?;
    if !(protocol.duration_s.is_finite() && protocol.duration_s > 0.0) {
        return Err(Error::Config("manual duration must be > 0".into()));
    }
    let tissue = &scene.tissue;
    let (a, b) = (Vector2::from(region.from_mm), Vector2::from(region.to_mm));
    if !(tissue.contains(a.x, a.y) && tissue.contains(b.x, b.y)) {
        return Err(Error::Config("manual region must lie on the tissue".into()));
    }
    let len = (b - a).norm();
    if len == 0.0 {
        return Err(Error::Config("manual region has zero length".into()));
    }
    let dir = (b - a) / len;
    let side = Vector2::new(-dir.y, dir.x);
    let line = ScanCommand::surface_line(scene, region.from_mm, region.to_mm)?;
    let pipeline = Pipeline::new(&sensors.pipeline)?;
    let (white, dark) = (sensors.optics.white(), sensors.optics.dark());
    let dt = 1.0 / operator.sample_rate_hz;
    let n = (protocol.duration_s / dt).round() as usize;
    let (x0, x1, y0, y1) = tissue.extent();
    let streams = SeedStreams::new(seed);

    (0..protocol.repeats as u64)
        .map(|r| {
            let mut hand = streams.stream(rng::OPERATOR, r);
            let mut noise = streams.stream(rng::MANUAL_SPECTRUM, r);
            // Start both processes in their stationary distributions.
            let mut tremor = operator.sigma_hand_mm * normal(&mut hand);
            let mut wander = operator.sigma_xy_mm * normal(&mut hand);
            let mut positions: Vec<Point3<f64>> = Vec::with_capacity(n + 1);
            for k in 0..=n {
                let along = ping_pong(operator.speed_mm_s * k as f64 * dt, len);
                let xy = a + dir * along + side * wander;
                let (x, y) = (xy.x.clamp(x0, x1), xy.y.clamp(y0, y1));
                let h = (operator.mean_offset_mm + tremor).max(-tissue.max_compression());
                positions.push(Point3::new(x, y, tissue.height_at(x, y)? + h));
                tremor = ou_step(tremor, operator.sigma_hand_mm, operator.tremor_tau_s, dt, &mut hand);
                wander = ou_step(wander, operator.sigma_xy_mm, operator.wander_tau_s, dt, &mut hand);
            }
            let mut ticks = Vec::with_capacity(n);
            let mut spectra = Vec::with_capacity(n);
            for k in 0..n {
                let p = positions[k];
                let mut state = SceneState::new(Arc::clone(scene), ProbePose::new(p.x, p.y, p.z));
                state.time = k as f64 * dt;
                let contact = state.contact_height()?;
                let material = tissue
                    .material(contact.material)
                    .ok_or_else(|| Error::UnknownMaterial(format!("id {}", contact.material)))?;
                let raw = synthesize_raw(&sensors.optics, &material.fingerprint, contact.h, &mut noise)?;
                spectra.push(pipeline.run(&raw, &white, &dark)?.spectrum);
                let features = state.ground_truth_features().ok();
                let nominal = a + dir * ping_pong(operator.speed_mm_s * k as f64 * dt, len);
                let target = scene
                    .third_person
                    .project(&scene.surface_point(nominal.x, nominal.y)?)?;
                let v: Vector3<f64> = (positions[k + 1] - positions[k]) / dt;
                ticks.push(TickRecord {
                    tick: k,
                    t: state.time,
                    stage: Stage::Scanning,
                    tip_raw: features.map(|f| f.0),
                    light_raw: features.map(|f| f.1),
                    tip: features.map(|f| f.0),
                    light: features.map(|f| f.1),
                    target,
                    h_true: contact.h,
                    h_meas: contact.h,
                    beta: 1.0,
                    a_vs: v,
                    a_hc: Vector3::zeros(),
                    a: v,
                    position: positions[k],
                    spectrum_id: Some(k),
                });
            }
            let start = positions[0];
            Ok(TrialLog {
                summary: TrialSummary {
                    format_version: TRIAL_FORMAT_VERSION,
                    seed,
                    index: r,
                    estimator: "manual".into(),
                    outcome: Stage::Done,
                    ticks: n,
                    dt,
                    approach_time_s: Some(0.0),
                    scan_time_s: Some(n as f64 * dt),
                    start_position_mm: [start.x, start.y, start.z],
                    h_target_mm: operator.mean_offset_mm,
                    line,
                },
                ticks,
                spectra,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::presets;
    use crate::SamplePreset;

    fn scene() -> Arc<Scene> {
        Arc::new(presets::scene(SamplePreset::LiverPhantom).unwrap())
    }

    fn short() -> ManualProtocol {
        ManualProtocol {
            duration_s: 4.0,
            repeats: 2,
        }
    }

    #[test]
    fn steady_hand_is_a_scripted_sweep() {
        let sc = scene();
        let op = ManualOperatorModel::default().steady();
        let logs = simulate_manual_scan(&sc, &op, &ManualRegion::default(), &short(), &SensorSuite::default(), 3).unwrap();
        assert_eq!(logs.len(), 2);
        for log in &logs {
            assert_eq!(log.ticks.len(), 120);
            for r in &log.ticks {
                let along = ping_pong(5.0 * r.t, 80.0);
                assert!((r.position.x - (-40.0 + along)).abs() < 1e-9);
                assert!((r.position.y - 5.0).abs() < 1e-12);
                assert!(r.h_true.abs() < 1e-9);
            }
        }
        // Same path, different detector noise.
        assert_eq!(logs[0].ticks[7].position, logs[1].ticks[7].position);
        assert_ne!(logs[0].spectra[7], logs[1].spectra[7]);
    }

    #[test]
    fn tremor_has_the_set_spread() {
        let sc = scene();
        let op = ManualOperatorModel::default();
        let protocol = ManualProtocol {
            duration_s: 60.0,
            repeats: 10,
        };
        let logs = simulate_manual_scan(&sc, &op, &ManualRegion::default(), &protocol, &SensorSuite::default(), 9).unwrap();
        let h: Vec<f64> = logs.iter().flat_map(|l| l.ticks.iter().map(|r| r.h_true)).collect();
        let m = h.iter().sum::<f64>() / h.len() as f64;
        let sd = (h.iter().map(|v| (v - m).powi(2)).sum::<f64>() / h.len() as f64).sqrt();
        assert!(m.abs() < 0.15, "{m}");
        assert!((sd - 1.0).abs() < 0.12, "{sd}");
    }

    #[test]
    fn ping_pong_turns_at_the_ends() {
        assert_eq!(ping_pong(30.0, 80.0), 30.0);
        assert_eq!(ping_pong(100.0, 80.0), 60.0);
        assert_eq!(ping_pong(170.0, 80.0), 10.0);
    }

    #[test]
    fn region_off_tissue_is_rejected() {
        let sc = scene();
        let region = ManualRegion {
            from_mm: [0.0, 0.0],
            to_mm: [200.0, 0.0],
        };
        assert!(simulate_manual_scan(&sc, &ManualOperatorModel::default(), &region, &short(), &SensorSuite::default(), 1)
            .is_err());
    }
}
