//! SVG figures drawn from a [`MetricsReport`]: the scan trajectory over the
//! commanded line, the fingerprint mean with a one-sigma band, and the
//! intensity histograms with quartile markers.
//!
//! Output depends only on the report; coordinates are printed at fixed
//! precision so regenerated files are byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::report::{FingerprintBand, MetricsReport, SamplePlotData};
use super::spectral::IntensityHistogram;
use crate::error::Result;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;
const AUTO: &str = "#1f77b4";
const MANUAL: &str = "#d62728";

/// Maps data ranges onto the plot area; image-style axes flip `y`.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    flip_y: bool,
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64), flip_y: bool) -> Self {
        let widen = |(lo, hi): (f64, f64)| if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
        Self {
            x: widen(x),
            y: widen(y),
            flip_y,
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        let f = (y - self.y.0) / (self.y.1 - self.y.0);
        let f = if self.flip_y { f } else { 1.0 - f };
        MARGIN + f * (H - 2.0 * MARGIN)
    }

    fn point(&self, x: f64, y: f64) -> String {
        format!("{:.2},{:.2}", self.px(x), self.py(y))
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn pad((lo, hi): (f64, f64), frac: f64) -> (f64, f64) {
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let d = (hi - lo).max(1e-12) * frac;
    (lo - d, hi + d)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(title: &str, frame: &Frame, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let (l, r, t, b) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
    let _ = writeln!(s, r#"<rect x="{l}" y="{t}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#, r - l, b - t);
    for x in ticks(frame.x) {
        let px = frame.px(x);
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{b}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, b + 4.0);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, b + 16.0, label(x));
    }
    for y in ticks(frame.y) {
        let py = frame.py(y);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{py:.2}" x2="{l}" y2="{py:.2}" stroke="black"/>"#, l - 4.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, l - 6.0, py + 4.0, label(y));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, W / 2.0, H - 10.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    s
}

/// Five evenly spaced tick values.
fn ticks((lo, hi): (f64, f64)) -> Vec<f64> {
    (0..5).map(|i| lo + (hi - lo) * i as f64 / 4.0).collect()
}

fn label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn polyline(frame: &Frame, pts: impl Iterator<Item = (f64, f64)>, colour: &str, extra: &str) -> String {
    let p: Vec<String> = pts.map(|(x, y)| frame.point(x, y)).collect();
    format!(r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"{extra}/>"#, p.join(" ")) + "\n"
}

fn legend(entries: &[(&str, &str)]) -> String {
    let mut s = String::new();
    for (i, (name, colour)) in entries.iter().enumerate() {
        let y = MARGIN + 14.0 + 16.0 * i as f64;
        let x = W - MARGIN - 130.0;
        let _ = writeln!(s, r#"<rect x="{x:.2}" y="{:.2}" width="12" height="4" fill="{colour}"/>"#, y - 4.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{y:.2}">{}</text>"#, x + 18.0, escape(name));
    }
    s
}

pub fn trajectory_svg(data: &SamplePlotData) -> String {
    let line = data.line.unwrap_or([[0.0, 0.0], [0.0, 0.0]]);
    let all = data.tip_path.iter().chain(&data.light_path).chain(line.iter());
    let (u, v): (Vec<f64>, Vec<f64>) = all.map(|p| (p[0], p[1])).unzip();
    let (ux, vy) = (pad(range(u.into_iter()), 0.05), pad(range(v.into_iter()), 0.5));
    let frame = Frame::new(ux, vy, true);
    let mut s = open(&format!("{}: scan trajectory", data.sample), &frame, "u (px)", "v (px)");
    if data.line.is_some() {
        s += &polyline(&frame, line.iter().map(|p| (p[0], p[1])), "black", r#" stroke-dasharray="6 4""#);
    }
    s += &polyline(&frame, data.light_path.iter().map(|p| (p[0], p[1])), MANUAL, "");
    s += &polyline(&frame, data.tip_path.iter().map(|p| (p[0], p[1])), AUTO, "");
    s += &legend(&[("commanded line", "black"), ("probe tip", AUTO), ("light centre", MANUAL)]);
    s + "</svg>\n"
}

fn band_path(frame: &Frame, wl: &[f64], b: &FingerprintBand, colour: &str) -> String {
    let upper = wl.iter().zip(b.mean.iter().zip(&b.std)).map(|(x, (m, s))| frame.point(*x, m + s));
    let lower = wl.iter().zip(b.mean.iter().zip(&b.std)).rev().map(|(x, (m, s))| frame.point(*x, m - s));
    let pts: Vec<String> = upper.chain(lower).collect();
    let mut s = format!(r#"<polygon points="{}" fill="{colour}" fill-opacity="0.25" stroke="none"/>"#, pts.join(" ")) + "\n";
    s += &polyline(frame, wl.iter().copied().zip(b.mean.iter().copied()), colour, "");
    s
}

pub fn fingerprint_svg(data: &SamplePlotData) -> String {
    let wl = &data.wavelengths_nm;
    let bands: Vec<(&FingerprintBand, &str, &str)> = [(&data.fingerprint_a, AUTO, "automatic"), (&data.fingerprint_m, MANUAL, "manual")]
        .into_iter()
        .filter_map(|(b, c, n)| b.as_ref().map(|b| (b, c, n)))
        .collect();
    let y = pad(
        range(bands.iter().flat_map(|(b, _, _)| b.mean.iter().zip(&b.std).flat_map(|(m, s)| [m - s, m + s]))),
        0.05,
    );
    let frame = Frame::new(pad(range(wl.iter().copied()), 0.0), y, false);
    let mut s = open(&format!("{}: fingerprint mean and std", data.sample), &frame, "wavelength (nm)", "normalised reflectance");
    for (b, colour, _) in &bands {
        s += &band_path(&frame, wl, b, colour);
    }
    let names: Vec<(&str, &str)> = bands.iter().map(|(_, c, n)| (*n, *c)).collect();
    s += &legend(&names);
    s + "</svg>\n"
}

fn bars(frame: &Frame, h: &IntensityHistogram, total: f64, colour: &str) -> String {
    let mut s = String::new();
    for (i, &c) in h.counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let x0 = h.bin_start + h.bin_width * i as f64;
        let (l, r) = (frame.px(x0), frame.px(x0 + h.bin_width));
        let (top, bottom) = (frame.py(c as f64 / total), frame.py(0.0));
        let _ = writeln!(
            s,
            r#"<rect x="{l:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{colour}" fill-opacity="0.5"/>"#,
            r - l,
            bottom - top
        );
    }
    for p in [h.p25, h.p50, h.p75] {
        let x = frame.px(p);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{colour}" stroke-dasharray="3 3"/>"#,
            MARGIN,
            H - MARGIN
        );
    }
    s
}

pub fn histogram_svg(data: &SamplePlotData) -> String {
    let hists: Vec<(&IntensityHistogram, &str, &str)> = [(&data.histogram_a, AUTO, "automatic"), (&data.histogram_m, MANUAL, "manual")]
        .into_iter()
        .filter_map(|(h, c, n)| h.as_ref().map(|h| (h, c, n)))
        .collect();
    let x = range(hists.iter().flat_map(|(h, _, _)| [h.bin_start, h.bin_start + h.bin_width * h.counts.len() as f64]));
    let peak = hists
        .iter()
        .map(|(h, _, _)| h.counts.iter().max().copied().unwrap_or(0) as f64 / h.counts.iter().sum::<usize>().max(1) as f64)
        .fold(0.0, f64::max);
    let frame = Frame::new(pad(x, 0.02), (0.0, if peak > 0.0 { peak * 1.1 } else { 1.0 }), false);
    let mut s = open(&format!("{}: intensity distribution", data.sample), &frame, "intensity", "fraction of spectra");
    for (h, colour, _) in &hists {
        s += &bars(&frame, h, h.counts.iter().sum::<usize>().max(1) as f64, colour);
    }
    let names: Vec<(&str, &str)> = hists.iter().map(|(_, c, n)| (*n, *c)).collect();
    s += &legend(&names);
    s + "</svg>\n"
}

/// File names are `<kind>_<sample>.svg`.
pub fn render_plots(report: &MetricsReport) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for d in &report.plots {
        let name = d.sample.replace(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '-'), "_");
        out.push((format!("trajectory_{name}.svg"), trajectory_svg(d)));
        out.push((format!("fingerprint_{name}.svg"), fingerprint_svg(d)));
        out.push((format!("intensity_{name}.svg"), histogram_svg(d)));
    }
    out
}

pub fn write_plots(report: &MetricsReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    render_plots(report)
        .into_iter()
        .map(|(name, svg)| {
            let path = dir.join(name);
            std::fs::write(&path, svg)?;
            Ok(path)
        })
        .collect()
}
