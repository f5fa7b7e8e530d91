//! Experiment configuration files.
//!
//! Every optional section falls back to the defaults of the chosen sample
//! preset. Commands write the fully resolved file next to their outputs, so
//! a run can be reproduced from its output directory alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{ControlConfig, ScanCommand, SensorSuite, StartPolicy};
use crate::error::{Error, Result};
use crate::eval::{ManualOperatorModel, ManualProtocol, ManualRegion, ReportConfig};
use crate::jacobian::{ExcitationPolicy, JacobianFitConfig};
use crate::scene::{file as scene_file, presets, Scene};
use crate::SamplePreset;

pub const CONFIG_FORMAT_VERSION: u32 = 1;
/// Suffix of the resolved config each command writes, as `<command>.config.toml`.
pub const RESOLVED_CONFIG: &str = "config.toml";
pub const ESTIMATOR_JSON: &str = "estimator.json";
/// Overrides the default output root.
pub const OUT_ENV: &str = "DRS_SCAN_OUT";
pub const DEFAULT_OUT: &str = "runs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub fit: JacobianFitConfig,
    /// Exploration episodes; the preset sweeps when absent.
    pub excitation: Option<ExcitationPolicy>,
    /// Every `holdout_stride`-th sample is held out for the residual check.
    pub holdout_stride: usize,
    pub dt: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            fit: JacobianFitConfig::default(),
            excitation: None,
            holdout_stride: 20,
            dt: 1.0 / 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualConfig {
    pub operator: ManualOperatorModel,
    pub region: ManualRegion,
    pub protocol: ManualProtocol,
}

impl Default for ManualConfig {
    fn default() -> Self {
        Self {
            operator: ManualOperatorModel::default(),
            region: ManualRegion::default(),
            protocol: ManualProtocol::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub preset: SamplePreset,
    /// Scene TOML; the preset scene when absent.
    pub scene_file: Option<PathBuf>,
    /// Estimator JSON; `<out_dir>/estimator.json` when absent.
    pub estimator_file: Option<PathBuf>,
    pub seed: u64,
    /// Batch size; the preset protocol count when absent.
    pub repeats: Option<usize>,
    pub out_dir: Option<PathBuf>,
    /// A batch exits with a failure status above this fraction of failed trials.
    pub max_failure_rate: f64,
    pub line: Option<ScanCommand>,
    pub start: StartPolicy,
    pub control: Option<ControlConfig>,
    pub sensors: Option<SensorSuite>,
    pub calibration: CalibrationConfig,
    pub manual: ManualConfig,
    pub report: ReportConfig,
}

impl ExperimentConfig {
    pub fn for_preset(preset: SamplePreset) -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            preset,
            scene_file: None,
            estimator_file: None,
            seed: 0,
            repeats: None,
            out_dir: None,
            max_failure_rate: 0.15,
            line: None,
            start: StartPolicy::default(),
            control: None,
            sensors: None,
            calibration: CalibrationConfig::default(),
            manual: ManualConfig::default(),
            report: ReportConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text)?;
        if c.format_version != CONFIG_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "config format version {} is not supported (expected {CONFIG_FORMAT_VERSION})",
                c.format_version
            )));
        }
        Ok(c)
    }

    /// Relative paths inside the file are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut c = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut c.scene_file, &mut c.estimator_file, &mut c.out_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn scene(&self) -> Result<Scene> {
        match &self.scene_file {
            Some(p) => scene_file::load(p),
            None => presets::scene(self.preset),
        }
    }

    /// Fills every defaulted section from the preset and `scene`, and checks
    /// the result.
    pub fn resolve(&self, scene: &Scene, out_dir: &Path) -> Result<Self> {
        let mut c = self.clone();
        c.out_dir = Some(out_dir.to_path_buf());
        c.repeats.get_or_insert(self.preset.protocol_repeats());
        c.control.get_or_insert(ControlConfig::for_preset(self.preset));
        c.sensors.get_or_insert_with(SensorSuite::default);
        if c.line.is_none() {
            c.line = Some(ScanCommand::default_for(scene)?);
        }
        c.calibration.excitation.get_or_insert_with(ExcitationPolicy::default_sweeps);
        c.estimator_file.get_or_insert(out_dir.join(ESTIMATOR_JSON));
        // The mixture initialisation follows the run seed.
        c.calibration.fit.gmm.seed = c.seed;
        c.validate(scene)?;
        Ok(c)
    }

    pub fn validate(&self, scene: &Scene) -> Result<()> {
        if self.calibration.fit.gmm.k == 0 {
            return Err(Error::Config("calibration.fit.gmm.k must be at least 1".into()));
        }
        if !(self.calibration.dt.is_finite() && self.calibration.dt > 0.0) {
            return Err(Error::Config("calibration.dt must be > 0".into()));
        }
        if self.repeats == Some(0) {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return Err(Error::Config("max_failure_rate must lie in [0, 1]".into()));
        }
        if let Some(c) = &self.control {
            c.validate()?;
        }
        if let Some(s) = &self.sensors {
            s.validate()?;
        }
        if let Some(l) = &self.line {
            l.validate(&scene.third_person)?;
            for (name, px) in [("start", l.start_px()), ("end", l.end_px())] {
                scene.backproject_to_surface(&px).map_err(|e| {
                    Error::Config(format!("scan line {name} ({:.1}, {:.1}) px does not land on the tissue: {e}", px.x, px.y))
                })?;
            }
        }
        self.manual.operator.validate()?;
        Ok(())
    }
}

/// `--out`, then the config, then `$DRS_SCAN_OUT`, then `runs`.
pub fn output_dir(flag: Option<&Path>, config: Option<&Path>) -> PathBuf {
    flag.or(config).map(Path::to_path_buf).unwrap_or_else(|| {
        std::env::var_os(OUT_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_config_round_trips_through_toml() {
        let c = ExperimentConfig::for_preset(SamplePreset::RumpSteak);
        let scene = c.scene().unwrap();
        let r = c.resolve(&scene, Path::new("out")).unwrap();
        assert_eq!(r.repeats, Some(15));
        assert_eq!(r.control, Some(ControlConfig::for_preset(SamplePreset::RumpSteak)));
        let text = r.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), r);
        // Resolving twice changes nothing.
        assert_eq!(r.resolve(&scene, Path::new("out")).unwrap(), r);
    }

    #[test]
    fn minimal_file_takes_preset_defaults() {
        let text = r#"
format_version = 1
preset = "lamb_liver"
seed = 4
max_failure_rate = 0.15
start = { kind = "random", lateral_mm = 15.0, h_min_mm = 15.0, h_max_mm = 25.0 }

[calibration]
holdout_stride = 20
dt = 0.03333333333333333
[calibration.fit]
temperature = 1.0
[calibration.fit.gmm]
k = 5
seed = 0
tol = 1e-6
max_iter = 300
covariance_floor = 1e-6
max_reseeds = 10

[manual.operator]
sigma_hand_mm = 1.0
tremor_tau_s = 0.6
mean_offset_mm = 0.0
sigma_xy_mm = 1.5
wander_tau_s = 1.5
speed_mm_s = 5.0
sample_rate_hz = 30.0
[manual.region]
from_mm = [-40.0, 5.0]
to_mm = [40.0, 5.0]
[manual.protocol]
duration_s = 30.0
repeats = 5

[report]
intensity_bin = 0.005
"#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(c.preset, SamplePreset::LambLiver);
        assert_eq!(c.seed, 4);
        assert!(c.control.is_none());
    }

    #[test]
    fn unknown_keys_and_versions_are_rejected() {
        let mut text = ExperimentConfig::for_preset(SamplePreset::LiverPhantom).to_toml_string().unwrap();
        assert!(ExperimentConfig::from_toml_str(&text.replace("format_version = 1", "format_version = 2")).is_err());
        text.insert_str(0, "colour = \"red\"\n");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn zero_clusters_is_a_config_error() {
        let mut c = ExperimentConfig::for_preset(SamplePreset::LiverPhantom);
        c.calibration.fit.gmm.k = 0;
        let scene = c.scene().unwrap();
        assert!(matches!(c.resolve(&scene, Path::new("o")), Err(Error::Config(_))));
    }

    #[test]
    fn line_off_the_tissue_is_a_config_error() {
        let mut c = ExperimentConfig::for_preset(SamplePreset::LambLiver);
        c.line = Some(ScanCommand::parse("5,300,200,300").unwrap());
        let scene = c.scene().unwrap();
        assert!(matches!(c.resolve(&scene, Path::new("o")), Err(Error::Config(_))));
    }

    #[test]
    fn flag_beats_config_for_the_output_root() {
        assert_eq!(output_dir(Some(Path::new("a")), Some(Path::new("b"))), PathBuf::from("a"));
        assert_eq!(output_dir(None, Some(Path::new("b"))), PathBuf::from("b"));
    }
}
