//! Atomic file output, CSV series and a static SVG of bound envelopes.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file. `-` goes to standard output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if path == Path::new("-") {
        let mut out = std::io::stdout().lock();
        out.write_all(bytes)?;
        return Ok(out.flush()?);
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = sibling(path, ".tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming onto {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// `path` with `suffix` appended to the file name.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

/// One bound interval of a sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SeriesPoint {
    pub x: f64,
    pub param: String,
    pub status: &'static str,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

pub fn series_csv(x_name: &str, points: &[SeriesPoint]) -> String {
    let mut s = format!("{x_name},param,status,lower,upper\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for p in points {
        let _ = writeln!(s, "{},{},{},{},{}", p.x, p.param, p.status, opt(p.lower), opt(p.upper));
    }
    s
}

const PALETTE: [&str; 6] = ["#1b6ca8", "#c0392b", "#27ae60", "#8e44ad", "#d35400", "#2c3e50"];

/// Upper and lower envelopes per parameter; dashed lines are lower bounds.
pub fn series_svg(title: &str, x_name: &str, points: &[SeriesPoint]) -> String {
    let (w, h, m) = (720.0, 440.0, 60.0);
    let mut params: Vec<&str> = Vec::new();
    for p in points {
        if !params.contains(&p.param.as_str()) {
            params.push(&p.param);
        }
    }
    let xs = points.iter().map(|p| p.x);
    let ys = points.iter().flat_map(|p| p.lower.into_iter().chain(p.upper));
    let (x0, x1) = min_max(xs);
    let (y0, y1) = min_max(ys.chain([0.0]));
    let sx = |x: f64| m + (x - x0) / (x1 - x0).max(1e-9) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0).max(1e-9) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{m}" y="24" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{m} {} H{} M{m} {} V{}" stroke="black" fill="none"/>"#,
        h - m,
        w - m,
        m,
        h - m
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 16.0, escape(x_name));
    for (v, anchor) in [(x0, "start"), (x1, "end")] {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="{anchor}">{v}</text>"#, sx(v), h - m + 16.0);
    }
    for v in [y0, y1] {
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.0}</text>"#, m - 6.0, sy(v) + 4.0);
    }
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(s, r##"<path d="M{m} {:.1} H{}" stroke="#999" stroke-dasharray="2 3"/>"##, sy(0.0), w - m);
    }
    for (k, param) in params.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mine: Vec<&SeriesPoint> = points.iter().filter(|p| p.param == *param).collect();
        for (pick, dash) in [(true, ""), (false, r#" stroke-dasharray="6 4""#)] {
            let d = polyline(&mine, pick, &sx, &sy);
            if !d.is_empty() {
                let _ = writeln!(s, r#"<path d="{d}" stroke="{color}" fill="none" stroke-width="1.5"{dash}/>"#);
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            w - m + 6.0,
            m + 16.0 * k as f64,
            escape(param)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Path segments over feasible points; gaps at infeasible points.
fn polyline(points: &[&SeriesPoint], upper: bool, sx: &dyn Fn(f64) -> f64, sy: &dyn Fn(f64) -> f64) -> String {
    let mut d = String::new();
    let mut pen_down = false;
    for p in points {
        match if upper { p.upper } else { p.lower } {
            Some(y) => {
                let _ = write!(d, "{}{:.1} {:.1} ", if pen_down { "L" } else { "M" }, sx(p.x), sy(y));
                pen_down = true;
            }
            None => pen_down = false,
        }
    }
    d.trim_end().to_string()
}

fn min_max(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
