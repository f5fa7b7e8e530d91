//! Trajectory statistics.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::control::ScanCommand;
use crate::error::{Error, Result};
use crate::scene::Pixel;

/// Nearest-rank percentile of `values` for `p` in `(0, 100]`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("percentile of an empty set"));
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::InvalidArgument(format!("percentile must lie in (0, 100], got {p}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("mean of an empty set"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> Result<f64> {
    let m = mean(values)?;
    Ok((values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt())
}

/// Perpendicular pixel distance to the commanded line, px.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineErrorStats {
    pub avg: f64,
    pub p90: f64,
}

/// Per-point perpendicular distances of `points` to `line`.
pub fn line_errors(points: &[Pixel], line: &ScanCommand) -> Vec<f64> {
    points.iter().map(|p| line.perpendicular_distance(p)).collect()
}

pub fn line_error_stats(points: &[Pixel], line: &ScanCommand) -> Result<LineErrorStats> {
    if points.len() < 2 {
        return Err(Error::Empty("line error needs at least two scanning points"));
    }
    let d = line_errors(points, line);
    Ok(LineErrorStats {
        avg: mean(&d)?,
        p90: percentile(&d, 90.0)?,
    })
}

/// Cartesian speed, mm/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedStats {
    pub avg: f64,
    pub std: f64,
}

/// Per-tick speeds `|p[i+1] - p[i]| / dt`.
pub fn speeds(positions: &[Point3<f64>], dt: f64) -> Result<Vec<f64>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    Ok(positions.windows(2).map(|w| (w[1] - w[0]).norm() / dt).collect())
}

pub fn speed_stats(positions: &[Point3<f64>], dt: f64) -> Result<SpeedStats> {
    let v = speeds(positions, dt)?;
    if v.is_empty() {
        return Err(Error::Empty("speed needs at least two positions"));
    }
    Ok(SpeedStats {
        avg: mean(&v)?,
        std: std_dev(&v)?,
    })
}
