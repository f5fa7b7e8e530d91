//! Per-sample metrics tables: trajectory precision and speed for the
//! automatic scans, fingerprint consistency and intensity spread for manual
//! against automatic acquisition.
//!
//! Everything is computed from trial logs. Only trials that reached `Done`
//! contribute to trajectory, speed and spectral statistics; ticks and spectra
//! are pooled over those trials.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::spectral::{channel_std, fingerprint_rmse, intensity_histogram, mean_fingerprint, spectral_angle, IntensityHistogram};
use super::stats::{mean, percentile, speeds, std_dev, LineErrorStats, SpeedStats};
use crate::control::{Stage, TrialLog};
use crate::error::{Error, Result};
use crate::scene::Pixel;
use crate::spectro::{fingerprint, intensity, Fingerprint, Spectrum};

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

/// Logs of one sample. Manual logs are the ones whose estimator is `manual`.
#[derive(Debug, Clone)]
pub struct SampleLogs {
    pub name: String,
    pub automatic: Vec<TrialLog>,
    pub manual: Vec<TrialLog>,
}

impl SampleLogs {
    pub fn from_logs(name: impl Into<String>, logs: Vec<TrialLog>) -> Self {
        let (manual, automatic) = logs.into_iter().partition(|l| l.summary.estimator == "manual");
        Self {
            name: name.into(),
            automatic,
            manual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Intensity histogram bin width.
    pub intensity_bin: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { intensity_bin: 0.005 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

impl From<&IntensityHistogram> for Quartiles {
    fn from(h: &IntensityHistogram) -> Self {
        Self {
            p25: h.p25,
            p50: h.p50,
            p75: h.p75,
        }
    }
}

/// One table row. Fields are `None` when the logs cannot support them (no
/// finished trial, no manual set, fewer than two spectra).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub sample: String,
    pub trials: usize,
    pub done: usize,
    pub success_rate: f64,
    pub approach_median_s: Option<f64>,
    pub approach_p90_s: Option<f64>,
    /// Probe tip.
    pub p_err_px: Option<LineErrorStats>,
    /// Light centre.
    pub l_err_px: Option<LineErrorStats>,
    pub speed_mm_s: Option<SpeedStats>,
    /// ×1e-3.
    pub rmse_e3: Option<f64>,
    pub theta_rad: Option<f64>,
    /// ×1e-2.
    pub sigma_m_e2: Option<f64>,
    /// ×1e-2.
    pub sigma_a_e2: Option<f64>,
    pub intensity_m: Option<Quartiles>,
    pub intensity_a: Option<Quartiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub fingerprint_comparison: String,
    pub percentile_method: String,
    pub sigma_definition: String,
    pub units: String,
    pub trials_used: String,
}

impl Default for ReportMetadata {
    fn default() -> Self {
        Self {
            fingerprint_comparison: "RMSE and spectral angle compare the mean manual fingerprint with the mean automatic fingerprint".into(),
            percentile_method: "nearest rank".into(),
            sigma_definition: "channel mean of the per-channel sample standard deviation of the fingerprints".into(),
            units: "line errors px, speed mm/s, rmse x1e-3, theta rad, sigma x1e-2, intensity calibrated units".into(),
            trials_used: "statistics pool the ticks and spectra of trials that reached Done; success and approach time use all trials".into(),
        }
    }
}

/// A mean fingerprint with its channel-wise spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintBand {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Inputs of the figures for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlotData {
    pub sample: String,
    /// Commanded line of the first finished trial.
    pub line: Option<[[f64; 2]; 2]>,
    /// Filtered tip positions of that trial while scanning.
    pub tip_path: Vec<[f64; 2]>,
    pub light_path: Vec<[f64; 2]>,
    pub wavelengths_nm: Vec<f64>,
    pub fingerprint_a: Option<FingerprintBand>,
    pub fingerprint_m: Option<FingerprintBand>,
    pub histogram_a: Option<IntensityHistogram>,
    pub histogram_m: Option<IntensityHistogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub format_version: u32,
    pub config: ReportConfig,
    pub metadata: ReportMetadata,
    pub rows: Vec<SampleRow>,
    pub plots: Vec<SamplePlotData>,
}

fn done(logs: &[TrialLog]) -> impl Iterator<Item = &TrialLog> {
    logs.iter().filter(|l| l.summary.outcome == Stage::Done)
}

fn scanning_points(log: &TrialLog, pick: impl Fn(&crate::control::TickRecord) -> Option<Pixel>) -> Vec<Pixel> {
    log.ticks_in(Stage::Scanning).filter_map(pick).collect()
}

fn pooled_line_errors(logs: &[TrialLog], pick: impl Fn(&crate::control::TickRecord) -> Option<Pixel> + Copy) -> Option<LineErrorStats> {
    let d: Vec<f64> = done(logs)
        .flat_map(|l| {
            let line = l.summary.line;
            scanning_points(l, pick).into_iter().map(move |p| line.perpendicular_distance(&p))
        })
        .collect();
    if d.len() < 2 {
        return None;
    }
    Some(LineErrorStats {
        avg: mean(&d).ok()?,
        p90: percentile(&d, 90.0).ok()?,
    })
}

fn pooled_speeds(logs: &[TrialLog]) -> Result<Option<SpeedStats>> {
    let mut v = Vec::new();
    for l in done(logs) {
        let p: Vec<_> = l.ticks_in(Stage::Scanning).map(|r| r.position).collect();
        v.extend(speeds(&p, l.summary.dt)?);
    }
    if v.is_empty() {
        return Ok(None);
    }
    Ok(Some(SpeedStats {
        avg: mean(&v)?,
        std: std_dev(&v)?,
    }))
}

fn spectra(logs: &[TrialLog]) -> impl Iterator<Item = &Spectrum> {
    done(logs).flat_map(|l| l.spectra.iter())
}

fn fingerprints(logs: &[TrialLog]) -> Result<Vec<Fingerprint>> {
    spectra(logs).map(fingerprint).collect()
}

fn band(set: &[Fingerprint]) -> Result<Option<FingerprintBand>> {
    if set.len() < 2 {
        return Ok(None);
    }
    Ok(Some(FingerprintBand {
        mean: mean_fingerprint(set)?,
        std: channel_std(set)?,
    }))
}

fn histogram(logs: &[TrialLog], bin: f64) -> Result<Option<IntensityHistogram>> {
    let values: Vec<f64> = spectra(logs).map(intensity).collect::<Result<_>>()?;
    if values.is_empty() {
        return Ok(None);
    }
    intensity_histogram(&values, bin).map(Some)
}

fn to_pairs(points: &[Pixel]) -> Vec<[f64; 2]> {
    points.iter().map(|p| [p.x, p.y]).collect()
}

fn sample_report(sample: &SampleLogs, config: &ReportConfig) -> Result<(SampleRow, SamplePlotData)> {
    let auto = &sample.automatic;
    let trials = auto.len();
    let n_done = done(auto).count();
    let approach: Vec<f64> = auto.iter().filter_map(|l| l.summary.approach_time_s).collect();
    let fa = fingerprints(auto)?;
    let fm = fingerprints(&sample.manual)?;
    let band_a = band(&fa)?;
    let band_m = band(&fm)?;
    let hist_a = histogram(auto, config.intensity_bin)?;
    let hist_m = histogram(&sample.manual, config.intensity_bin)?;
    let (rmse, theta) = match (&band_a, &band_m) {
        (Some(a), Some(m)) => (Some(fingerprint_rmse(&m.mean, &a.mean)?), Some(spectral_angle(&m.mean, &a.mean)?)),
        _ => (None, None),
    };
    let sigma = |b: &Option<FingerprintBand>| b.as_ref().map(|b| b.std.iter().sum::<f64>() / b.std.len() as f64 * 1e2);

    let row = SampleRow {
        sample: sample.name.clone(),
        trials,
        done: n_done,
        success_rate: if trials == 0 { 0.0 } else { n_done as f64 / trials as f64 },
        approach_median_s: percentile(&approach, 50.0).ok(),
        approach_p90_s: percentile(&approach, 90.0).ok(),
        p_err_px: pooled_line_errors(auto, |r| r.tip),
        l_err_px: pooled_line_errors(auto, |r| r.light),
        speed_mm_s: pooled_speeds(auto)?,
        rmse_e3: rmse.map(|v| v * 1e3),
        theta_rad: theta,
        sigma_m_e2: sigma(&band_m),
        sigma_a_e2: sigma(&band_a),
        intensity_m: hist_m.as_ref().map(Quartiles::from),
        intensity_a: hist_a.as_ref().map(Quartiles::from),
    };

    let first = done(auto).next();
    let wavelengths_nm = spectra(auto)
        .chain(spectra(&sample.manual))
        .next()
        .map(|s| s.grid.wavelengths())
        .unwrap_or_default();
    let plot = SamplePlotData {
        sample: sample.name.clone(),
        line: first.map(|l| [l.summary.line.start, l.summary.line.end]),
        tip_path: first.map(|l| to_pairs(&scanning_points(l, |r| r.tip))).unwrap_or_default(),
        light_path: first.map(|l| to_pairs(&scanning_points(l, |r| r.light))).unwrap_or_default(),
        wavelengths_nm,
        fingerprint_a: band_a,
        fingerprint_m: band_m,
        histogram_a: hist_a,
        histogram_m: hist_m,
    };
    Ok((row, plot))
}

/// Builds the report. Rows keep the order of `samples`.
pub fn build_report(samples: &[SampleLogs], config: &ReportConfig) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to report"));
    }
    if !(config.intensity_bin.is_finite() && config.intensity_bin > 0.0) {
        return Err(Error::Config("intensity_bin must be > 0".into()));
    }
    let (rows, plots) = samples.iter().map(|s| sample_report(s, config)).collect::<Result<Vec<_>>>()?.into_iter().unzip();
    Ok(MetricsReport {
        format_version: REPORT_FORMAT_VERSION,
        config: *config,
        metadata: ReportMetadata::default(),
        rows,
        plots,
    })
}

const CSV_COLUMNS: [&str; 24] = [
    "sample", "trials", "done", "success_rate", "approach_median_s", "approach_p90_s", "p_avg_px", "p_p90_px", "l_avg_px",
    "l_p90_px", "speed_avg_mm_s", "speed_std_mm_s", "rmse_e3", "theta_rad", "sigma_m_e2", "sigma_a_e2", "intensity_m_p25",
    "intensity_m_p50", "intensity_m_p75", "intensity_a_p25", "intensity_a_p50", "intensity_a_p75", "iqr_m", "iqr_a",
];

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl MetricsReport {
    pub fn row(&self, sample: &str) -> Option<&SampleRow> {
        self.rows.iter().find(|r| r.sample == sample)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if r.format_version != REPORT_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "report format version {} (expected {REPORT_FORMAT_VERSION})",
                r.format_version
            )));
        }
        Ok(r)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for r in &self.rows {
            let q = |q: Option<Quartiles>| [opt(q.map(|q| q.p25)), opt(q.map(|q| q.p50)), opt(q.map(|q| q.p75))];
            let iqr = |q: Option<Quartiles>| opt(q.map(|q| q.p75 - q.p25));
            let mut rec = vec![
                r.sample.clone(),
                r.trials.to_string(),
                r.done.to_string(),
                r.success_rate.to_string(),
                opt(r.approach_median_s),
                opt(r.approach_p90_s),
                opt(r.p_err_px.map(|s| s.avg)),
                opt(r.p_err_px.map(|s| s.p90)),
                opt(r.l_err_px.map(|s| s.avg)),
                opt(r.l_err_px.map(|s| s.p90)),
                opt(r.speed_mm_s.map(|s| s.avg)),
                opt(r.speed_mm_s.map(|s| s.std)),
                opt(r.rmse_e3),
                opt(r.theta_rad),
                opt(r.sigma_m_e2),
                opt(r.sigma_a_e2),
            ];
            rec.extend(q(r.intensity_m));
            rec.extend(q(r.intensity_a));
            rec.push(iqr(r.intensity_m));
            rec.push(iqr(r.intensity_a));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(REPORT_JSON), self.to_json()?)?;
        self.write_csv(std::fs::File::create(dir.join(REPORT_CSV))?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::SensorSuite;
    use crate::eval::manual::{simulate_manual_scan, ManualOperatorModel, ManualProtocol, ManualRegion};
    use crate::scene::presets;
    use crate::SamplePreset;
    use std::sync::Arc;

    fn sweeps(op: ManualOperatorModel, seed: u64) -> Vec<TrialLog> {
        let scene = Arc::new(presets::scene(SamplePreset::LiverPhantom).unwrap());
        let protocol = ManualProtocol {
            duration_s: 4.0,
            repeats: 2,
        };
        simulate_manual_scan(&scene, &op, &ManualRegion::default(), &protocol, &SensorSuite::default(), seed).unwrap()
    }

    /// A steady sweep relabelled as an automatic run: the tip sits on the line.
    fn scripted() -> Vec<TrialLog> {
        let mut logs = sweeps(ManualOperatorModel::default().steady(), 1);
        for l in &mut logs {
            l.summary.estimator = "scripted".into();
        }
        logs
    }

    #[test]
    fn scripted_sweep_sits_on_the_line() {
        let sample = SampleLogs::from_logs("s", scripted());
        assert_eq!(sample.automatic.len(), 2);
        let r = build_report(&[sample], &ReportConfig::default()).unwrap();
        let row = &r.rows[0];
        assert_eq!((row.trials, row.done, row.success_rate), (2, 2, 1.0));
        let p = row.p_err_px.unwrap();
        assert!(p.avg < 1e-6 && p.p90 < 1e-6, "{p:?}");
        let v = row.speed_mm_s.unwrap();
        // Relief adds a little vertical motion to the 5 mm/s sweep.
        assert!(v.avg >= 5.0 - 1e-9 && v.avg < 5.2, "{v:?}");
        assert!(row.rmse_e3.is_none() && row.sigma_m_e2.is_none());
        assert!(row.sigma_a_e2.unwrap() > 0.0);
    }

    #[test]
    fn manual_against_automatic_fills_the_spectral_columns() {
        let mut logs = scripted();
        logs.extend(sweeps(ManualOperatorModel::default(), 2));
        let r = build_report(&[SampleLogs::from_logs("s", logs)], &ReportConfig::default()).unwrap();
        let row = &r.rows[0];
        assert_eq!(row.trials, 2);
        assert!(row.rmse_e3.unwrap() > 0.0 && row.theta_rad.unwrap() > 0.0);
        let (m, a) = (row.intensity_m.unwrap(), row.intensity_a.unwrap());
        assert!(m.p75 - m.p25 > a.p75 - a.p25);
        assert!(row.sigma_m_e2.unwrap() > row.sigma_a_e2.unwrap());
        let plot = &r.plots[0];
        assert_eq!(plot.wavelengths_nm.len(), 253);
        assert!(plot.fingerprint_m.is_some() && plot.histogram_a.is_some());
    }

    #[test]
    fn failed_trials_only_count_towards_success() {
        let mut logs = scripted();
        logs[1].summary.outcome = Stage::Failed(crate::control::FailureReason::Timeout);
        let single = build_report(&[SampleLogs::from_logs("s", vec![logs[0].clone()])], &ReportConfig::default()).unwrap();
        let both = build_report(&[SampleLogs::from_logs("s", logs)], &ReportConfig::default()).unwrap();
        assert_eq!(both.rows[0].success_rate, 0.5);
        assert_eq!(both.rows[0].speed_mm_s, single.rows[0].speed_mm_s);
        assert_eq!(both.rows[0].sigma_a_e2, single.rows[0].sigma_a_e2);
    }

    #[test]
    fn regeneration_is_bit_identical_and_round_trips() {
        let mut logs = scripted();
        logs.extend(sweeps(ManualOperatorModel::default(), 2));
        let samples = [SampleLogs::from_logs("s", logs)];
        let a = build_report(&samples, &ReportConfig::default()).unwrap();
        let b = build_report(&samples, &ReportConfig::default()).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(MetricsReport::from_json(&a.to_json().unwrap()).unwrap(), a);
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("sample,trials,done,success_rate,"));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn nothing_to_report_is_an_error() {
        assert!(build_report(&[], &ReportConfig::default()).is_err());
        let bad = ReportConfig { intensity_bin: 0.0 };
        assert!(build_report(&[SampleLogs::from_logs("s", scripted())], &bad).is_err());
    }
}
