//! Exploration data for offline Jacobian estimation.
//!
//! Each episode drives the probe along a scripted path, logging noiseless
//! features and the Cartesian motion. Feature and probe velocities are both
//! obtained by the same finite-difference scheme so they describe the same
//! instant.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Point3, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::error::{Error, Result};
use crate::perception::FeatureVector;
use crate::scene::{CartesianVelocity, Scene, SceneState};

/// How `s_dot` and `v` were derived from the sampled trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifferenceScheme {
    /// Central differences inside the episode, one-sided at its two ends.
    CentralOneSidedEnds,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub s: Vector4<f64>,
    pub s_dot: Vector4<f64>,
    pub x: Point3<f64>,
    pub v: Vector3<f64>,
}

impl Sample {
    pub fn features(&self) -> FeatureVector {
        FeatureVector::from_vector(&self.s, self.t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub samples: Vec<Sample>,
    /// Set when the episode was cut short because a feature left the image or
    /// the probe left the tissue.
    pub truncated: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub episodes: Vec<Episode>,
    pub scheme: DifferenceScheme,
    pub dt: f64,
}

impl TrajectoryDataset {
    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.episodes.iter().flat_map(|e| e.samples.iter())
    }

    pub fn len(&self) -> usize {
        self.episodes.iter().map(|e| e.samples.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> Vec<Vector4<f64>> {
        self.samples().map(|s| s.s).collect()
    }

    /// SHA-1 over every sample's numbers in order, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha1::new();
        hasher.update(self.dt.to_le_bytes());
        for e in &self.episodes {
            hasher.update((e.samples.len() as u64).to_le_bytes());
            for s in &e.samples {
                let values = std::iter::once(s.t)
                    .chain(s.s.iter().copied())
                    .chain(s.s_dot.iter().copied())
                    .chain(s.x.coords.iter().copied())
                    .chain(s.v.iter().copied());
                for v in values {
                    hasher.update(v.to_le_bytes());
                }
            }
        }
        hex::encode(hasher.finalize())
    }

    /// Splits off every `stride`-th sample (by global index) as a held-out set.
    pub fn split_holdout(&self, stride: usize) -> (TrajectoryDataset, Vec<Sample>) {
        let mut held = Vec::new();
        let mut idx = 0usize;
        let episodes = self
            .episodes
            .iter()
            .map(|e| {
                let mut kept = Vec::with_capacity(e.samples.len());
                for s in &e.samples {
                    if stride > 0 && idx % stride == stride - 1 {
                        held.push(*s);
                    } else {
                        kept.push(*s);
                    }
                    idx += 1;
                }
                Episode {
                    samples: kept,
                    truncated: e.truncated.clone(),
                }
            })
            .collect();
        (
            TrajectoryDataset {
                episodes,
                scheme: self.scheme,
                dt: self.dt,
            },
            held,
        )
    }
}

/// A scripted probe path. Heights `h` are measured from the rest surface at
/// the episode's starting `(x, y)`; lateral coordinates are world mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EpisodeSpec {
    /// Lissajous figure in x-y with a slow vertical oscillation.
    Lissajous {
        centre: [f64; 2],
        amplitude: [f64; 3],
        omega: [f64; 3],
        h_mean: f64,
        duration: f64,
    },
    /// Vertical linear chirp between two heights, circling the lateral point
    /// at radius `wobble` so every stretch of data excites all three axes.
    VerticalChirp {
        at: [f64; 2],
        wobble: f64,
        h_low: f64,
        h_high: f64,
        f_start: f64,
        f_end: f64,
        duration: f64,
    },
    /// Straight vertical move at constant speed.
    Vertical {
        at: [f64; 2],
        h_start: f64,
        h_end: f64,
        speed: f64,
    },
    /// Constant velocity from a start point.
    Constant {
        start: [f64; 3],
        velocity: [f64; 3],
        duration: f64,
    },
}

/// Angular rate of the chirp wobble, rad/s.
const WOBBLE_RATE: f64 = 0.6;

impl EpisodeSpec {
    pub fn duration(&self) -> f64 {
        match *self {
            EpisodeSpec::Lissajous { duration, .. }
            | EpisodeSpec::VerticalChirp { duration, .. }
            | EpisodeSpec::Constant { duration, .. } => duration,
            EpisodeSpec::Vertical {
                h_start, h_end, speed, ..
            } => (h_end - h_start).abs() / speed,
        }
    }

    fn anchor(&self) -> [f64; 2] {
        match *self {
            EpisodeSpec::Lissajous { centre, .. } => centre,
            EpisodeSpec::VerticalChirp { at, .. } | EpisodeSpec::Vertical { at, .. } => at,
            EpisodeSpec::Constant { start, .. } => [start[0], start[1]],
        }
    }

    /// Target position at time `t`, with `ground` the rest height at the anchor.
    fn position(&self, t: f64, ground: f64) -> Point3<f64> {
        match *self {
            EpisodeSpec::Lissajous {
                centre,
                amplitude,
                omega,
                h_mean,
                ..
            } => Point3::new(
                centre[0] + amplitude[0] * (omega[0] * t).sin(),
                centre[1] + amplitude[1] * (omega[1] * t + 0.5 * PI).sin(),
                ground + h_mean + amplitude[2] * (omega[2] * t).sin(),
            ),
            EpisodeSpec::VerticalChirp {
                at,
                wobble,
                h_low,
                h_high,
                f_start,
                f_end,
                duration,
            } => {
                let phase = 2.0 * PI * (f_start * t + 0.5 * (f_end - f_start) * t * t / duration);
                let mid = 0.5 * (h_low + h_high);
                let amp = 0.5 * (h_high - h_low);
                let turn = WOBBLE_RATE * t;
                Point3::new(
                    at[0] + wobble * (turn.cos() - 1.0),
                    at[1] + wobble * turn.sin(),
                    ground + mid - amp * phase.cos(),
                )
            }
            EpisodeSpec::Vertical {
                at,
                h_start,
                h_end,
                speed,
            } => {
                let dir = (h_end - h_start).signum();
                let h = if dir > 0.0 {
                    (h_start + speed * t).min(h_end)
                } else {
                    (h_start - speed * t).max(h_end)
                };
                Point3::new(at[0], at[1], ground + h)
            }
            EpisodeSpec::Constant { start, velocity, .. } => Point3::new(
                start[0] + velocity[0] * t,
                start[1] + velocity[1] * t,
                ground + start[2] + velocity[2] * t,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationPolicy {
    pub episodes: Vec<EpisodeSpec>,
}

impl ExcitationPolicy {
    /// Lissajous sweeps at three heights plus vertical chirps, covering the
    /// region trials operate in: x in [-55, 55] mm, y in [-17, 27] mm and
    /// heights from compression up to 26 mm.
    pub fn default_sweeps() -> Self {
        let mut episodes = Vec::new();
        for (i, h) in [1.5, 9.0, 18.0].into_iter().enumerate() {
            episodes.push(EpisodeSpec::Lissajous {
                centre: [0.0, 5.0],
                amplitude: [55.0, 22.0, 2.5],
                omega: [0.11, 0.23 + 0.02 * i as f64, 0.9],
                h_mean: h,
                duration: 90.0,
            });
        }
        for x in [-40.0, 0.0, 40.0] {
            for y in [-8.0, 18.0] {
                episodes.push(EpisodeSpec::VerticalChirp {
                    at: [x, y],
                    wobble: 4.0,
                    h_low: 0.0,
                    h_high: 26.0,
                    f_start: 0.02,
                    f_end: 0.1,
                    duration: 20.0,
                });
            }
        }
        Self { episodes }
    }

    /// `up` upward 40 mm moves and `down` downward 10 mm moves from the
    /// contact plane, spread over a line of lateral positions.
    pub fn height_sweeps(up: usize, down: usize) -> Self {
        let n = up + down;
        let episodes = (0..n)
            .map(|i| {
                let x = -40.0 + 80.0 * i as f64 / (n.max(2) - 1) as f64;
                let y = if i % 2 == 0 { -10.0 } else { 10.0 };
                if i < up {
                    EpisodeSpec::Vertical {
                        at: [x, y],
                        h_start: 0.0,
                        h_end: 40.0,
                        speed: 5.0,
                    }
                } else {
                    EpisodeSpec::Vertical {
                        at: [x, y],
                        h_start: 0.0,
                        h_end: -10.0,
                        speed: 2.0,
                    }
                }
            })
            .collect();
        Self { episodes }
    }

    /// Small-amplitude motion around one pose: the regime where the image
    /// Jacobian is effectively constant.
    pub fn local_linear(at: [f64; 2], h: f64, amplitude: f64) -> Self {
        Self {
            episodes: vec![
                EpisodeSpec::Lissajous {
                    centre: at,
                    amplitude: [amplitude, amplitude, amplitude],
                    omega: [1.1, 1.7, 2.3],
                    h_mean: h,
                    duration: 30.0,
                },
                EpisodeSpec::Lissajous {
                    centre: at,
                    amplitude: [amplitude, amplitude, amplitude],
                    omega: [1.3, 0.7, 1.9],
                    h_mean: h,
                    duration: 30.0,
                },
            ],
        }
    }
}

/// Runs every episode of `policy` in `scene` at control period `dt`.
pub fn collect_dataset(scene: &Arc<Scene>, policy: &ExcitationPolicy, dt: f64) -> Result<TrajectoryDataset> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    let episodes = policy
        .episodes
        .iter()
        .map(|spec| run_episode(scene, spec, dt))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryDataset {
        episodes,
        scheme: DifferenceScheme::CentralOneSidedEnds,
        dt,
    })
}

fn run_episode(scene: &Arc<Scene>, spec: &EpisodeSpec, dt: f64) -> Result<Episode> {
    let [ax, ay] = spec.anchor();
    let ground = scene.tissue.height_at(ax, ay)?;
    let steps = (spec.duration() / dt).round() as usize;
    let mut state = SceneState::new(Arc::clone(scene), crate::scene::ProbePose {
        position: spec.position(0.0, ground),
    });
    let mut times = Vec::with_capacity(steps + 1);
    let mut positions = Vec::with_capacity(steps + 1);
    let mut features = Vec::with_capacity(steps + 1);
    let mut truncated = None;
    for i in 0..=steps {
        match state.ground_truth_features().and_then(|f| state.contact_height().map(|_| f)) {
            Ok((tip, light)) => {
                times.push(i as f64 * dt);
                positions.push(state.probe.position);
                features.push(Vector4::new(tip.x, tip.y, light.x, light.y));
            }
            Err(e) => {
                truncated = Some(format!("stopped at t = {:.3} s: {e}", i as f64 * dt));
                break;
            }
        }
        if i == steps {
            break;
        }
        let next = spec.position((i + 1) as f64 * dt, ground);
        let cmd = (next - state.probe.position) / dt;
        state = state.step(CartesianVelocity(cmd), dt)?;
    }
    let n = positions.len();
    if n < 2 {
        return Ok(Episode {
            samples: Vec::new(),
            truncated,
        });
    }
    let diff = |i: usize| -> (usize, usize, f64) {
        if i == 0 {
            (1, 0, dt)
        } else if i == n - 1 {
            (n - 1, n - 2, dt)
        } else {
            (i + 1, i - 1, 2.0 * dt)
        }
    };
    let samples = (0..n)
        .map(|i| {
            let (a, b, span) = diff(i);
            Sample {
                t: times[i],
                s: features[i],
                s_dot: (features[a] - features[b]) / span,
                x: positions[i],
                v: (positions[a] - positions[b]) / span,
            }
        })
        .collect();
    Ok(Episode { samples, truncated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::presets;
    use crate::SamplePreset;

    fn flat() -> Arc<Scene> {
        Arc::new(presets::scene(SamplePreset::LiverPhantom).unwrap())
    }

    #[test]
    fn zero_velocity_episode_has_zero_rates() {
        let policy = ExcitationPolicy {
            episodes: vec![EpisodeSpec::Constant {
                start: [3.0, 4.0, 10.0],
                velocity: [0.0, 0.0, 0.0],
                duration: 2.0,
            }],
        };
        let data = collect_dataset(&flat(), &policy, 1.0 / 30.0).unwrap();
        assert_eq!(data.len(), 61);
        assert!(data.samples().all(|s| s.s_dot == Vector4::zeros() && s.v == Vector3::zeros()));
    }

    #[test]
    fn constant_lateral_velocity_matches_analytic_feature_rate() {
        let scene = flat();
        let dt = 1.0 / 30.0;
        let policy = ExcitationPolicy {
            episodes: vec![EpisodeSpec::Constant {
                start: [-10.0, 0.0, 5.0],
                velocity: [1.0, 0.0, 0.0],
                duration: 5.0,
            }],
        };
        let data = collect_dataset(&scene, &policy, dt).unwrap();
        let cam = &scene.third_person;
        let samples: Vec<_> = data.samples().copied().collect();
        for s in &samples[1..samples.len() - 1] {
            // Oracle: chain rule through the pinhole model at the logged pose.
            let tip_rate = cam.projection_jacobian(&s.x).unwrap() * Vector3::x();
            let ground = Point3::new(s.x.x, s.x.y, 0.0);
            let light_rate = cam.projection_jacobian(&ground).unwrap() * Vector3::x();
            let expected = Vector4::new(tip_rate.x, tip_rate.y, light_rate.x, light_rate.y);
            assert!((s.s_dot - expected).norm() < 1e-5, "{} vs {}", s.s_dot, expected);
            assert!((s.v - Vector3::x()).norm() < 1e-9);
        }
        // Nearly constant over the short run.
        let first = samples[1].s_dot;
        let last = samples[samples.len() - 2].s_dot;
        assert!((first - last).norm() < 0.05 * first.norm());
    }

    #[test]
    fn height_sweep_preset_shape() {
        let p = ExcitationPolicy::height_sweeps(23, 22);
        assert_eq!(p.episodes.len(), 45);
        let ups = p
            .episodes
            .iter()
            .filter(|e| matches!(e, EpisodeSpec::Vertical { h_end, .. } if *h_end == 40.0))
            .count();
        assert_eq!(ups, 23);
        let data = collect_dataset(&flat(), &p, 1.0 / 30.0).unwrap();
        // Downward moves stop at the compression limit.
        let lowest = data
            .samples()
            .map(|s| s.x.z)
            .fold(f64::INFINITY, f64::min);
        assert!((lowest + 3.0).abs() < 1e-9);
    }

    #[test]
    fn leaving_the_image_truncates() {
        let policy = ExcitationPolicy {
            episodes: vec![EpisodeSpec::Constant {
                start: [0.0, 0.0, 5.0],
                velocity: [9.0, 0.0, 0.0],
                duration: 30.0,
            }],
        };
        let data = collect_dataset(&flat(), &policy, 0.1).unwrap();
        let ep = &data.episodes[0];
        assert!(ep.truncated.is_some());
        assert!(ep.samples.len() < 300);
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let scene = flat();
        let p = ExcitationPolicy::local_linear([0.0, 0.0], 5.0, 1.0);
        let a = collect_dataset(&scene, &p, 0.05).unwrap();
        let b = collect_dataset(&scene, &p, 0.05).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let mut c = b.clone();
        c.episodes[0].samples[3].v.x += 1e-9;
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
