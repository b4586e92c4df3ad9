//! Deterministic plot data: margin profiles and pose snapshots as SVG or tidy CSV.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::margin::MarginCsvRow;
use crate::object::contact_geometry;
use crate::trajectory::Trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotFormat {
    Svg,
    Csv,
}

impl FromStr for PlotFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svg" => Ok(PlotFormat::Svg),
            "csv" => Ok(PlotFormat::Csv),
            other => Err(Error::Config(format!(
                "unknown plot format `{other}` (expected svg or csv)"
            ))),
        }
    }
}

/// World-frame outline of the object at a step.
pub type Outline = Vec<[f64; 2]>;

/// Outlines at `count` evenly spaced steps, first and last included.
pub fn snapshots(traj: &Trajectory, count: usize) -> Result<Vec<Outline>> {
    let n = traj.states.len();
    if n == 0 || count == 0 {
        return Ok(Vec::new());
    }
    let count = count.min(n);
    let body = traj.object.profile.outline();
    let mut ks: Vec<usize> = (0..count)
        .map(|i| {
            if count == 1 {
                0
            } else {
                i * (n - 1) / (count - 1)
            }
        })
        .collect();
    ks.dedup();
    ks.into_iter()
        .map(|k| {
            let g = contact_geometry(&traj.object, traj.states[k])?;
            Ok(body
                .iter()
                .map(|&[x, y]| {
                    [
                        g.rot[0][0] * x + g.rot[0][1] * y,
                        g.rot[1][0] * x + g.rot[1][1] * y,
                    ]
                })
                .collect())
        })
        .collect()
}

/// Long-format CSV with columns `k, series, value`.
pub fn tidy_csv(unit: &str, rows: &[MarginCsvRow]) -> String {
    let mut out = String::from("k,series,value\n");
    for r in rows {
        let series = [
            (format!("bound_A_{unit}"), r.bound_a),
            (format!("bound_B_{unit}"), r.bound_b),
            (format!("xi_plus_{unit}"), Some(r.xi_plus)),
            (format!("xi_minus_{unit}"), Some(r.xi_minus)),
        ];
        for (name, v) in series {
            if let Some(v) = v {
                let _ = writeln!(out, "{},{},{:e}", r.k, name, v);
            }
        }
    }
    out
}

const WIDTH: f64 = 640.0;
const PANEL_H: f64 = 240.0;
const PAD: f64 = 40.0;
const SERIES: [(&str, &str); 2] = [("xi_plus", "#1f77b4"), ("xi_minus", "#d62728")];

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    let mut d = String::new();
    for (i, (x, y)) in points.iter().enumerate() {
        let _ = write!(d, "{}{x:.2},{y:.2}", if i == 0 { "" } else { " " });
    }
    format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{d}\"/>\n")
}

/// SVG with a margin panel and, when outlines are given, a pose panel below it.
pub fn margin_svg(unit: &str, rows: &[MarginCsvRow], outlines: &[Outline]) -> String {
    let height = if outlines.is_empty() {
        PANEL_H
    } else {
        2.0 * PANEL_H
    };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" viewBox=\"0 0 {WIDTH} {height}\">"
    );
    let _ = writeln!(
        svg,
        "<rect width=\"{WIDTH}\" height=\"{height}\" fill=\"white\"/>"
    );
    let (x0, x1, y0, y1) = (PAD, WIDTH - PAD, PANEL_H - PAD, PAD);
    let _ = writeln!(
        svg,
        "<path d=\"M{x0} {y1} L{x0} {y0} L{x1} {y0}\" fill=\"none\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{x0}\" y=\"{}\" font-size=\"12\">margin [{unit}] vs step</text>",
        PAD - 10.0
    );
    if !rows.is_empty() {
        let k_max = rows.iter().map(|r| r.k).max().unwrap_or(0).max(1) as f64;
        let v_max = rows
            .iter()
            .flat_map(|r| [r.xi_plus, r.xi_minus])
            .filter(|v| v.is_finite())
            .fold(0.0_f64, f64::max);
        let v_max = if v_max > 0.0 { v_max } else { 1.0 };
        let sx = |k: usize| x0 + (x1 - x0) * k as f64 / k_max;
        let sy = |v: f64| y0 - (y0 - y1) * (v / v_max).clamp(0.0, 1.0);
        for (name, color) in SERIES {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .map(|r| {
                    (
                        sx(r.k),
                        sy(if name == "xi_plus" {
                            r.xi_plus
                        } else {
                            r.xi_minus
                        }),
                    )
                })
                .collect();
            svg.push_str(&polyline(&pts, color));
        }
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"10\">{v_max:.4e}</text>",
            2.0,
            y1 + 4.0
        );
        for (i, (name, color)) in SERIES.iter().enumerate() {
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{name}</text>",
                x1 - 80.0,
                y1 + 14.0 * (i as f64 + 1.0)
            );
        }
    }
    if !outlines.is_empty() {
        let pts = outlines.iter().flatten();
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in pts {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        let scale = (PANEL_H - 2.0 * PAD) / span;
        let ox = WIDTH / 2.0 - scale * (lo[0] + hi[0]) / 2.0;
        let oy = 2.0 * PANEL_H - PAD + scale * lo[1];
        let _ = writeln!(
            svg,
            "<path d=\"M{:.2} {oy:.2} L{:.2} {oy:.2} M{:.2} {oy:.2} L{:.2} {:.2}\" stroke=\"gray\"/>",
            ox + scale * lo[0].min(0.0),
            ox + scale * hi[0],
            ox,
            ox,
            oy - scale * (hi[1] - lo[1].min(0.0)),
        );
        let n = outlines.len();
        for (i, o) in outlines.iter().enumerate() {
            let shade = if n > 1 { 200 - (160 * i / (n - 1)) } else { 40 };
            let mut d = String::new();
            for (j, p) in o.iter().enumerate() {
                let _ = write!(
                    d,
                    "{}{:.2},{:.2}",
                    if j == 0 { "" } else { " " },
                    ox + scale * p[0],
                    oy - scale * p[1]
                );
            }
            let _ = writeln!(
                svg,
                "<polygon fill=\"none\" stroke=\"rgb({shade},{shade},{shade})\" points=\"{d}\"/>"
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}
