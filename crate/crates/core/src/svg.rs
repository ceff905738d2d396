//! Static SVG plots of loops projected to the symplectic planes `(x_j, y_j)`,
//! drawn over the projection of the body.

use std::f64::consts::PI;
use std::fmt::Write;

use crate::error::{Error, Result};
use crate::geometry::Body;
use crate::loops::TimeLoop;

const PANEL: f64 = 320.0;
const MARGIN: f64 = 24.0;
const SHADOW_DIRECTIONS: usize = 360;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

/// Projection of the body to plane `j`, traced by support points of
/// in-plane directions.
pub fn shadow(body: &Body, j: usize) -> Result<Vec<[f64; 2]>> {
    let n = body.n();
    if j >= n {
        return Err(Error::InvalidArgument(format!(
            "plane {j} out of range for n = {n}"
        )));
    }
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(SHADOW_DIRECTIONS);
    for i in 0..SHADOW_DIRECTIONS {
        let (s, c) = (2.0 * PI * i as f64 / SHADOW_DIRECTIONS as f64).sin_cos();
        let mut u = vec![0.0; 2 * n];
        u[j] = c;
        u[n + j] = s;
        let p = body.support_point(&u)?;
        let q = [p[j], p[n + j]];
        if out
            .last()
            .is_none_or(|l| (l[0] - q[0]).hypot(l[1] - q[1]) > 1e-12)
        {
            out.push(q);
        }
    }
    Ok(out)
}

/// One labelled loop in a plot.
pub struct Trace<'a> {
    pub label: &'a str,
    pub gamma: &'a TimeLoop,
}

/// One panel per symplectic plane, side by side.
pub fn render(body: Option<&Body>, traces: &[Trace]) -> Result<String> {
    let dim = traces
        .first()
        .map(|t| t.gamma.dim())
        .or(body.map(|b| b.dim()))
        .ok_or_else(|| Error::InvalidArgument("nothing to plot".into()))?;
    if traces.iter().any(|t| t.gamma.dim() != dim) || body.is_some_and(|b| b.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: traces
                .iter()
                .map(|t| t.gamma.dim())
                .find(|&d| d != dim)
                .unwrap_or(dim),
        });
    }
    let n = dim / 2;
    let shadows: Vec<Vec<[f64; 2]>> = match body {
        Some(b) => (0..n).map(|j| shadow(b, j)).collect::<Result<_>>()?,
        None => vec![Vec::new(); n],
    };
    let width = n as f64 * (PANEL + MARGIN) + MARGIN;
    let height = PANEL + 2.0 * MARGIN + 16.0 * traces.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for j in 0..n {
        let mut extent: f64 = 1e-9;
        for p in &shadows[j] {
            extent = extent.max(p[0].abs()).max(p[1].abs());
        }
        for t in traces {
            for p in t.gamma.samples() {
                extent = extent.max(p[j].abs()).max(p[n + j].abs());
            }
        }
        let scale = 0.45 * PANEL / extent;
        let ox = MARGIN + j as f64 * (PANEL + MARGIN) + 0.5 * PANEL;
        let oy = MARGIN + 0.5 * PANEL;
        let map = |x: f64, y: f64| (ox + scale * x, oy - scale * y);
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{PANEL:.0}" height="{PANEL:.0}" fill="none" stroke="#cccccc"/>"##,
            ox - 0.5 * PANEL,
            oy - 0.5 * PANEL
        );
        let (ax0, ay) = map(-extent, 0.0);
        let (ax1, _) = map(extent, 0.0);
        let (bx, by0) = map(0.0, -extent);
        let (_, by1) = map(0.0, extent);
        let _ = writeln!(
            s,
            r##"<path d="M{ax0:.2},{ay:.2}H{ax1:.2}M{bx:.2},{by0:.2}V{by1:.2}" stroke="#dddddd"/>"##
        );
        if !shadows[j].is_empty() {
            let pts: Vec<String> = shadows[j]
                .iter()
                .map(|p| {
                    let (x, y) = map(p[0], p[1]);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(
                s,
                r##"<polygon points="{}" fill="#eeeeee" stroke="#999999"/>"##,
                pts.join(" ")
            );
        }
        for (i, t) in traces.iter().enumerate() {
            let pts: Vec<String> = t
                .gamma
                .samples()
                .iter()
                .map(|p| {
                    let (x, y) = map(p[j], p[n + j]);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                pts.join(" "),
                COLORS[i % COLORS.len()]
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13">(x{}, y{})</text>"#,
            ox - 0.5 * PANEL + 6.0,
            oy - 0.5 * PANEL + 16.0,
            j + 1,
            j + 1
        );
    }
    for (i, t) in traces.iter().enumerate() {
        let y = 2.0 * MARGIN + PANEL + 16.0 * i as f64 - 8.0;
        let _ = writeln!(
            s,
            r#"<text x="{MARGIN:.0}" y="{y:.2}" font-family="sans-serif" font-size="12" fill="{}">{}</text>"#,
            COLORS[i % COLORS.len()],
            escape(t.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
