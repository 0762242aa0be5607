//! Run artifacts: CSV table, JSON documents, SVG plot and the manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use armlab::lab::PointEstimate;
use armlab::ExponentFit;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const CSV_HEADER: &str = "grid_value,trials,hits,p_hat,stderr,horizon_failures";

pub fn results_csv(points: &[PointEstimate]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for p in points {
        let _ = writeln!(
            s,
            "{:.17e},{},{},{:.17e},{:.17e},{}",
            p.grid_value, p.trials, p.hits, p.p_hat, p.stderr, p.horizon_failures
        );
    }
    s
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// SHA-256 of the command name and the canonical config JSON.
    pub run_id: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value, files: &[&str]) -> Result<Self> {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update([0u8]);
        h.update(serde_json::to_string(&config)?.as_bytes());
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Ok(Manifest {
            run_id: hex::encode(h.finalize()),
            timestamp,
            tool: "sle-armlab".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            files: files.iter().map(|f| f.to_string()).collect(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Log-log scatter with error bars, the fitted line and a guide line of the
/// predicted slope through the centre of the fitted points.
pub fn plot_svg(
    title: &str,
    x_label: &str,
    points: &[PointEstimate],
    fit: Option<&ExponentFit>,
    predicted: Option<f64>,
) -> String {
    let (w, h) = (640.0, 480.0);
    let (left, right, top, bottom) = (80.0, 20.0, 40.0, 60.0);
    let pts: Vec<&PointEstimate> = points.iter().filter(|p| p.grid_value > 0.0 && p.p_hat > 0.0).collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">
<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>
<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        w / 2.0,
        esc(title)
    );
    if pts.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14" text-anchor="middle">no positive estimates</text>
</svg>"#,
            w / 2.0,
            h / 2.0
        );
        return svg;
    }
    let lx: Vec<f64> = pts.iter().map(|p| p.grid_value.log10()).collect();
    let lo_y =
        |p: &PointEstimate| if p.p_hat > p.stderr { (p.p_hat - p.stderr).log10() } else { p.p_hat.log10() - 0.5 };
    let hi_y = |p: &PointEstimate| (p.p_hat + p.stderr).log10();
    let pad = |a: f64, b: f64| {
        let d = (b - a).max(0.2) * 0.08;
        (a - d, b + d)
    };
    let (x0, x1) =
        pad(lx.iter().copied().fold(f64::INFINITY, f64::min), lx.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let (y0, y1) = pad(
        pts.iter().map(|p| lo_y(p)).fold(f64::INFINITY, f64::min),
        pts.iter().map(|p| hi_y(p)).fold(f64::NEG_INFINITY, f64::max),
    );
    let px = |v: f64| left + (v - x0) / (x1 - x0) * (w - left - right);
    let py = |v: f64| h - bottom - (v - y0) / (y1 - y0) * (h - top - bottom);
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - left - right,
        h - top - bottom
    );
    for d in (x0.ceil() as i32)..=(x1.floor() as i32) {
        let x = px(f64::from(d));
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">1e{d}</text>"#,
            h - bottom,
            h - bottom + 6.0,
            h - bottom + 20.0
        );
    }
    for d in (y0.ceil() as i32)..=(y1.floor() as i32) {
        let y = py(f64::from(d));
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="end">1e{d}</text>"#,
            left - 6.0,
            left - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>
<text x="18" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">estimate</text>"#,
        (left + w - right) / 2.0,
        h - 18.0,
        esc(x_label),
        (top + h - bottom) / 2.0,
        (top + h - bottom) / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<defs><clipPath id="plot"><rect x="{left}" y="{top}" width="{}" height="{}"/></clipPath></defs>
<g clip-path="url(#plot)">"#,
        w - left - right,
        h - top - bottom
    );
    if let Some(f) = fit {
        let line = |slope: f64, icpt: f64, style: &str, svg: &mut String| {
            let ln10 = std::f64::consts::LN_10;
            let ya = (icpt + slope * x0 * ln10) / ln10;
            let yb = (icpt + slope * x1 * ln10) / ln10;
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" {style}/>"#,
                px(x0),
                py(ya),
                px(x1),
                py(yb)
            );
        };
        line(f.slope, f.intercept, r#"stroke="steelblue" stroke-width="2""#, &mut svg);
        if let Some(p) = predicted {
            // Anchor the guide at the mean log grid value of the fitted points.
            let n = f.points.len().max(1) as f64;
            let mx = f.points.iter().map(|q| q.grid_value.ln()).sum::<f64>() / n;
            let icpt = f.intercept + (f.slope - p) * mx;
            line(p, icpt, r#"stroke="firebrick" stroke-width="1.5" stroke-dasharray="6,4""#, &mut svg);
        }
    }
    for p in &pts {
        let x = px(p.grid_value.log10());
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><circle cx="{x:.2}" cy="{:.2}" r="3.5" fill="black"/>"#,
            py(lo_y(p)),
            py(hi_y(p)),
            py(p.p_hat.log10())
        );
    }
    let _ = writeln!(svg, "</g>");
    let mut legend = Vec::new();
    if let Some(f) = fit {
        legend.push(("steelblue", format!("fit slope {:.4} ± {:.4}", f.slope, f.stderr_slope)));
    }
    if let Some(p) = predicted {
        legend.push(("firebrick", format!("predicted slope {p:.4}")));
    }
    for (i, (color, text)) in legend.iter().enumerate() {
        let y = top + 18.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            left + 10.0,
            left + 34.0,
            left + 40.0,
            y + 4.0,
            esc(text)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
