//! Trial logs on disk: `trial.csv` with one row per control tick,
//! `summary.json`, and `spectra.csv` holding the processed spectrum of every
//! scanning tick.
//!
//! `trial.csv` columns, in order:
//! `tick, t, stage, tip_raw_u, tip_raw_v, light_raw_u, light_raw_v, tip_u,
//! tip_v, light_u, light_v, target_u, target_v, h_true, h_meas, beta, avs_x,
//! avs_y, avs_z, ahc_x, ahc_y, ahc_z, a_x, a_y, a_z, x, y, z, spectrum_id`.
//! Raw features are empty on ticks without a detection, filtered features
//! before the first one.

use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::config::ScanCommand;
use super::controller::Stage;
use crate::error::{Error, Result};
use crate::scene::Pixel;
use crate::spectro::io::SpectrumTable;
use crate::spectro::{Spectrum, SpectrumRole};

pub const TRIAL_FORMAT_VERSION: u32 = 1;

pub const TRIAL_CSV: &str = "trial.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SPECTRA_CSV: &str = "spectra.csv";

const COLUMNS: [&str; 29] = [
    "tick", "t", "stage", "tip_raw_u", "tip_raw_v", "light_raw_u", "light_raw_v", "tip_u", "tip_v", "light_u", "light_v",
    "target_u", "target_v", "h_true", "h_meas", "beta", "avs_x", "avs_y", "avs_z", "ahc_x", "ahc_y", "ahc_z", "a_x",
    "a_y", "a_z", "x", "y", "z", "spectrum_id",
];

/// One control tick. Pose and heights are read before the command is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub tick: usize,
    pub t: f64,
    /// Stage that produced the command.
    pub stage: Stage,
    pub tip_raw: Option<Pixel>,
    pub light_raw: Option<Pixel>,
    pub tip: Option<Pixel>,
    pub light: Option<Pixel>,
    pub target: Pixel,
    pub h_true: f64,
    pub h_meas: f64,
    pub beta: f64,
    pub a_vs: Vector3<f64>,
    pub a_hc: Vector3<f64>,
    pub a: Vector3<f64>,
    pub position: Point3<f64>,
    /// Index into [`TrialLog::spectra`].
    pub spectrum_id: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialSummary {
    pub format_version: u32,
    pub seed: u64,
    pub index: u64,
    pub estimator: String,
    pub outcome: Stage,
    pub ticks: usize,
    pub dt: f64,
    /// Time at which scanning began.
    pub approach_time_s: Option<f64>,
    /// Scanning duration of a finished trial.
    pub scan_time_s: Option<f64>,
    pub start_position_mm: [f64; 3],
    pub h_target_mm: f64,
    pub line: ScanCommand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub summary: TrialSummary,
    pub ticks: Vec<TickRecord>,
    /// Calibrated, smoothed and cropped.
    pub spectra: Vec<Spectrum>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::Format(format!("`{s}`: {e}")))
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(s).map(Some)
    }
}

fn pixel(u: Option<f64>, v: Option<f64>) -> Result<Option<Pixel>> {
    match (u, v) {
        (Some(u), Some(v)) => Ok(Some(Pixel::new(u, v))),
        (None, None) => Ok(None),
        _ => Err(Error::Format("pixel with only one coordinate".into())),
    }
}

impl TrialLog {
    /// Ticks in `stage`.
    pub fn ticks_in(&self, stage: Stage) -> impl Iterator<Item = &TickRecord> {
        self.ticks.iter().filter(move |r| r.stage == stage)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(COLUMNS)?;
        for r in &self.ticks {
            let px = |p: Option<Pixel>| [opt(p.map(|p| p.x)), opt(p.map(|p| p.y))];
            let mut row = vec![r.tick.to_string(), r.t.to_string(), r.stage.to_string()];
            for p in [r.tip_raw, r.light_raw, r.tip, r.light, Some(r.target)] {
                row.extend(px(p));
            }
            row.extend([r.h_true, r.h_meas, r.beta].iter().map(f64::to_string));
            for v in [r.a_vs, r.a_hc, r.a, r.position.coords] {
                row.extend(v.iter().map(f64::to_string));
            }
            row.push(r.spectrum_id.map_or_else(String::new, |i| i.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<TickRecord>> {
        let mut r = csv::Reader::from_reader(input);
        if r.headers()?.iter().ne(COLUMNS) {
            return Err(Error::Format("trial CSV header does not match the expected columns".into()));
        }
        r.records()
            .map(|rec| {
                let rec = rec?;
                if rec.len() != COLUMNS.len() {
                    return Err(Error::Format(format!("trial CSV row has {} fields", rec.len())));
                }
                let f = |i: usize| parse_opt(&rec[i]);
                let req = |i: usize| f(i)?.ok_or_else(|| Error::Format(format!("empty `{}`", COLUMNS[i])));
                let v3 = |i: usize| -> Result<Vector3<f64>> { Ok(Vector3::new(req(i)?, req(i + 1)?, req(i + 2)?)) };
                Ok(TickRecord {
                    tick: rec[0].parse().map_err(|e| Error::Format(format!("tick: {e}")))?,
                    t: req(1)?,
                    stage: rec[2].parse()?,
                    tip_raw: pixel(f(3)?, f(4)?)?,
                    light_raw: pixel(f(5)?, f(6)?)?,
                    tip: pixel(f(7)?, f(8)?)?,
                    light: pixel(f(9)?, f(10)?)?,
                    target: Pixel::new(req(11)?, req(12)?),
                    h_true: req(13)?,
                    h_meas: req(14)?,
                    beta: req(15)?,
                    a_vs: v3(16)?,
                    a_hc: v3(19)?,
                    a: v3(22)?,
                    position: Point3::from(v3(25)?),
                    spectrum_id: if rec[28].is_empty() {
                        None
                    } else {
                        Some(rec[28].parse().map_err(|e| Error::Format(format!("spectrum_id: {e}")))?)
                    },
                })
            })
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join(TRIAL_CSV))?)?;
        let mut json = serde_json::to_string_pretty(&self.summary)?;
        json.push('\n');
        std::fs::write(dir.join(SUMMARY_JSON), json)?;
        if let Some(first) = self.spectra.first() {
            let mut table = SpectrumTable::new(first.grid);
            for (i, s) in self.spectra.iter().enumerate() {
                table.push(i.to_string(), s)?;
            }
            table.save(&dir.join(SPECTRA_CSV))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let summary: TrialSummary = serde_json::from_str(&std::fs::read_to_string(dir.join(SUMMARY_JSON))?)?;
        if summary.format_version != TRIAL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "trial format version {} is not supported (expected {TRIAL_FORMAT_VERSION})",
                summary.format_version
            )));
        }
        let ticks = Self::read_csv(std::fs::File::open(dir.join(TRIAL_CSV))?)?;
        let spectra_path = dir.join(SPECTRA_CSV);
        let spectra = if spectra_path.exists() {
            let table = SpectrumTable::load(&spectra_path)?;
            table
                .columns
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if c.role != SpectrumRole::Calibrated || c.id != i.to_string() {
                        return Err(Error::Format(format!("spectra.csv column {i} is `{}:{}`", c.role.tag(), c.id)));
                    }
                    Ok(table.spectrum(c))
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let referenced = ticks.iter().filter_map(|t| t.spectrum_id).max().map_or(0, |m| m + 1);
        if referenced > spectra.len() {
            return Err(Error::Format(format!(
                "trial references spectrum {} but only {} are stored",
                referenced - 1,
                spectra.len()
            )));
        }
        Ok(Self { summary, ticks, spectra })
    }
}
