use std::sync::Arc;

use nalgebra::Vector2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::blend::ActionPair;
use super::config::{ControlConfig, ScanCommand};
use super::controller::{ControllerState, FailureReason, Observation, Stage};
use super::log::{TickRecord, TrialLog, TrialSummary, TRIAL_FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::jacobian::InverseJacobian;
use crate::perception::{
    measure_features, measure_height, FeatureNoiseModel, FeatureVector, HeightSensorModel, KalmanConfig, KalmanTrack,
};
use crate::rng::{self, SeedStreams};
use crate::scene::{Scene, SceneState};
use crate::spectro::{synthesize_raw, Pipeline, PipelineConfig, Spectrum, TissueOpticalModel};

/// Every simulated sensor on the rig.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSuite {
    pub features: FeatureNoiseModel,
    pub height: HeightSensorModel,
    pub optics: TissueOpticalModel,
    pub pipeline: PipelineConfig,
}

impl Default for SensorSuite {
    fn default() -> Self {
        Self {
            features: FeatureNoiseModel::default(),
            height: HeightSensorModel::presets(),
            optics: TissueOpticalModel::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

impl SensorSuite {
    /// Noise-free features and heights. Spectra keep their detector noise.
    pub fn ideal(scene: &Scene) -> Self {
        let profiles: Vec<&str> = scene.tissue.materials().iter().map(|m| m.noise_profile.as_str()).collect();
        Self {
            features: FeatureNoiseModel::noiseless(),
            height: HeightSensorModel::uniform(profiles, crate::perception::HeightNoise::exact()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.optics.validate()?;
        Pipeline::new(&self.pipeline)?;
        Ok(())
    }
}

/// Where the probe starts a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StartPolicy {
    /// Uniform lateral offset from the surface point under the line start, in
    /// `[-lateral_mm, lateral_mm]` on each axis, at a uniform height in
    /// `[h_min_mm, h_max_mm]` above the surface.
    Random {
        lateral_mm: f64,
        h_min_mm: f64,
        h_max_mm: f64,
    },
    /// `h_mm` above the surface at `(x_mm, y_mm)`.
    Fixed { x_mm: f64, y_mm: f64, h_mm: f64 },
}

impl Default for StartPolicy {
    fn default() -> Self {
        StartPolicy::Random {
            lateral_mm: 15.0,
            h_min_mm: 15.0,
            h_max_mm: 25.0,
        }
    }
}

impl StartPolicy {
    /// Draws three uniforms from `rng` for the random policy.
    pub fn sample<R: Rng + ?Sized>(&self, scene: &Arc<Scene>, command: &ScanCommand, rng: &mut R) -> Result<SceneState> {
        match *self {
            StartPolicy::Fixed { x_mm, y_mm, h_mm } => SceneState::at_height(Arc::clone(scene), x_mm, y_mm, h_mm),
            StartPolicy::Random {
                lateral_mm,
                h_min_mm,
                h_max_mm,
            } => {
                if !(lateral_mm >= 0.0 && h_max_mm >= h_min_mm) {
                    return Err(Error::Config("random start needs lateral_mm >= 0 and h_max_mm >= h_min_mm".into()));
                }
                let anchor = scene.backproject_to_surface(&command.start_px())?;
                let dx = (rng.gen::<f64>() * 2.0 - 1.0) * lateral_mm;
                let dy = (rng.gen::<f64>() * 2.0 - 1.0) * lateral_mm;
                let h = h_min_mm + rng.gen::<f64>() * (h_max_mm - h_min_mm);
                SceneState::at_height(Arc::clone(scene), anchor.x + dx, anchor.y + dy, h)
            }
        }
    }
}

/// Everything that defines a trial apart from the estimator and the seed.
#[derive(Debug, Clone)]
pub struct TrialSpec {
    pub scene: Arc<Scene>,
    pub control: ControlConfig,
    pub sensors: SensorSuite,
    pub command: ScanCommand,
    pub start: StartPolicy,
}

impl TrialSpec {
    pub fn validate(&self) -> Result<()> {
        self.control.validate()?;
        self.sensors.validate()?;
        self.command.validate(&self.scene.third_person)
    }
}

/// Kalman tracks for the two features, started at the first detection.
#[derive(Debug, Clone)]
struct FeatureTracker {
    config: KalmanConfig,
    tracks: Option<(KalmanTrack, KalmanTrack)>,
}

impl FeatureTracker {
    fn step(&mut self, z: Option<FeatureVector>, t: f64, dt: f64) -> Result<Option<(FeatureVector, Vector2<f64>)>> {
        match (&mut self.tracks, z) {
            (None, None) => return Ok(None),
            (None, Some(z)) => {
                self.tracks = Some((KalmanTrack::new(z.tip, self.config), KalmanTrack::new(z.light, self.config)));
            }
            (Some((tip, light)), z) => {
                tip.step(z.map(|z| z.tip), dt)?;
                light.step(z.map(|z| z.light), dt)?;
            }
        }
        let (tip, light) = self.tracks.as_ref().expect("tracks started");
        Ok(Some((FeatureVector::new(tip.position(), light.position(), t), tip.velocity())))
    }
}

/// Per-trial failures that end the trial rather than the program.
fn trial_failure(e: &Error) -> Option<FailureReason> {
    match e {
        Error::OffTissue { .. } => Some(FailureReason::OffTissue),
        Error::OutOfImage { .. } | Error::BehindCamera { .. } => Some(FailureReason::OutOfImage),
        _ => None,
    }
}

/// Runs one approach-and-scan trial at the control rate until it finishes,
/// fails or times out. Randomness comes from named streams of `seed` at
/// `index`, so trials in a batch are independent of scheduling.
pub fn run_trial(spec: &TrialSpec, est: &dyn InverseJacobian, seed: u64, index: u64) -> Result<TrialLog> {
    spec.validate()?;
    let cfg = &spec.control;
    let dt = cfg.dt();
    let stride = cfg.detection_stride();
    let streams = SeedStreams::new(seed);
    let mut start_rng = streams.stream(rng::TRIAL_START, index);
    let mut feature_rng = streams.stream(rng::PERCEPTION, index);
    let mut height_rng = streams.stream(rng::HEIGHT, index);
    let mut spectrum_rng = streams.stream(rng::SPECTRUM, index);
    let pipeline = Pipeline::new(&spec.sensors.pipeline)?;
    let (white, dark) = (spec.sensors.optics.white(), spec.sensors.optics.dark());

    let mut state = spec.start.sample(&spec.scene, &spec.command, &mut start_rng)?;
    let start_position = state.tip();
    let mut ctrl = ControllerState::new(&spec.command);
    let mut tracker = FeatureTracker {
        config: cfg.kalman,
        tracks: None,
    };
    let mut ticks = Vec::new();
    let mut spectra: Vec<Spectrum> = Vec::new();
    let mut approach_time = None;
    let max_ticks = (cfg.timeout_s / dt).ceil() as usize;

    for tick in 0.. {
        let t = tick as f64 * dt;
        if tick >= max_ticks {
            ctrl.fail(FailureReason::Timeout);
            break;
        }
        let contact = match state.contact_height() {
            Ok(c) => c,
            Err(e) => match trial_failure(&e) {
                Some(r) => {
                    ctrl.fail(r);
                    break;
                }
                None => return Err(e),
            },
        };
        let sensed = (|| -> Result<(Option<FeatureVector>, f64)> {
            let raw = if tick % stride == 0 {
                measure_features(&state, &spec.sensors.features, &mut feature_rng)?
            } else {
                None
            };
            Ok((raw, measure_height(&state, &spec.sensors.height, &mut height_rng)?))
        })();
        let (raw, h_meas) = match sensed {
            Ok(v) => v,
            Err(e) => match trial_failure(&e) {
                Some(r) => {
                    ctrl.fail(r);
                    break;
                }
                None => return Err(e),
            },
        };
        if tick % stride == 0 {
            ctrl.record_detection(raw.is_some(), cfg.dropout_limit);
        }
        let filtered = tracker.step(raw, t, dt)?;
        let stage = ctrl.stage;
        let action = match (stage.is_terminal(), filtered) {
            (false, Some((features, tip_velocity))) => {
                let obs = Observation {
                    features,
                    tip_velocity,
                    h_meas,
                };
                ctrl.step(&obs, est, cfg, &spec.command, dt)?
            }
            _ => ActionPair::hold(1.0),
        };
        debug_assert!(action.is_consistent());
        if stage == Stage::Approach && ctrl.stage == Stage::Scanning {
            approach_time = Some(t + dt);
        }

        let spectrum_id = if stage == Stage::Scanning {
            let material = spec
                .scene
                .tissue
                .material(contact.material)
                .ok_or_else(|| Error::UnknownMaterial(format!("id {}", contact.material)))?;
            let raw_spectrum = synthesize_raw(&spec.sensors.optics, &material.fingerprint, contact.h, &mut spectrum_rng)?;
            spectra.push(pipeline.run(&raw_spectrum, &white, &dark)?.spectrum);
            Some(spectra.len() - 1)
        } else {
            None
        };

        ticks.push(TickRecord {
            tick,
            t,
            stage,
            tip_raw: raw.map(|r| r.tip),
            light_raw: raw.map(|r| r.light),
            tip: filtered.map(|f| f.0.tip),
            light: filtered.map(|f| f.0.light),
            target: ctrl.target,
            h_true: contact.h,
            h_meas,
            beta: action.beta,
            a_vs: action.a_vs.0,
            a_hc: action.a_hc.0,
            a: action.a.0,
            position: state.tip(),
            spectrum_id,
        });
        if ctrl.stage.is_terminal() {
            break;
        }
        state = state.step(action.a, dt)?;
    }

    let end = ticks.last().map_or(0.0, |r| r.t + dt);
    Ok(TrialLog {
        summary: TrialSummary {
            format_version: TRIAL_FORMAT_VERSION,
            seed,
            index,
            estimator: est.name().to_string(),
            outcome: ctrl.stage,
            ticks: ticks.len(),
            dt,
            approach_time_s: approach_time,
            scan_time_s: approach_time.filter(|_| ctrl.stage == Stage::Done).map(|a| end - a),
            start_position_mm: [start_position.x, start_position.y, start_position.z],
            h_target_mm: cfg.h_target_mm,
            line: spec.command,
        },
        ticks,
        spectra,
    })
}

