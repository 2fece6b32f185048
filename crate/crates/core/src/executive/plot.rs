use std::fmt::Write as _;
use std::path::Path;

use super::TrajectoryTable;
use crate::error::{Error, Result};
use crate::models::norm;

const W: f64 = 800.0;
const H: f64 = 560.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const PANEL_H: f64 = 220.0;
const TOPS: [f64; 2] = [30.0, 310.0];
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Panel {
    top: f64,
    t0: f64,
    t1: f64,
    y0: f64,
    y1: f64,
}

impl Panel {
    fn px(&self, t: f64) -> f64 {
        LEFT + (t - self.t0) / (self.t1 - self.t0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        self.top + PANEL_H - (y - self.y0) / (self.y1 - self.y0) * PANEL_H
    }

    fn frame(&self, svg: &mut String, title: &str, ylabel: impl Fn(f64) -> String) {
        let _ = writeln!(
            svg,
            r##"<rect x="{LEFT}" y="{}" width="{}" height="{PANEL_H}" fill="none" stroke="#444"/>"##,
            self.top,
            W - LEFT - RIGHT
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{title}</text>"#,
            W / 2.0,
            self.top - 8.0
        );
        for k in 0..=4 {
            let y = self.y0 + (self.y1 - self.y0) * k as f64 / 4.0;
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"#,
                LEFT - 5.0,
                self.py(y) + 3.0,
                ylabel(y)
            );
            let t = self.t0 + (self.t1 - self.t0) * k as f64 / 4.0;
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{}" font-size="10" text-anchor="middle">{:.3}</text>"#,
                self.px(t),
                self.top + PANEL_H + 14.0,
                t
            );
        }
    }

    fn polyline(&self, svg: &mut String, pts: &[(f64, f64)], color: &str) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts
            .iter()
            .map(|(t, y)| format!("{:.2},{:.2}", self.px(*t), self.py(*y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.3" points="{}"/>"#,
            coords.join(" ")
        );
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(hi > lo) {
        (lo - 1.0, hi + 1.0)
    } else {
        let p = 0.05 * (hi - lo);
        (lo - p, hi + p)
    }
}

/// `log₁₀|x(t)|` and the estimate components, with event times marked.
pub fn render_svg(table: &TrajectoryTable) -> Result<String> {
    if table.is_empty() {
        return Err(Error::invalid("empty trajectory; nothing to plot"));
    }
    let t0 = table.t[0];
    let t1 = *table.t.last().unwrap_or(&t0);
    let t1 = if t1 > t0 { t1 } else { t0 + 1.0 };

    let lx: Vec<(f64, f64)> = table
        .t
        .iter()
        .zip(&table.x)
        .filter_map(|(t, x)| {
            let r = norm(x);
            (r > 0.0 && r.is_finite()).then(|| (*t, r.log10()))
        })
        .collect();
    let (ylo, yhi) = lx
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let (ylo, yhi) = if lx.is_empty() { (-1.0, 1.0) } else { padded(ylo, yhi) };
    let top = Panel { top: TOPS[0], t0, t1, y0: ylo, y1: yhi };

    let l = table.thetahat.first().map_or(0, Vec::len);
    let (elo, ehi) = table
        .thetahat
        .iter()
        .flatten()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let (elo, ehi) = if elo.is_finite() { padded(elo, ehi) } else { (-1.0, 1.0) };
    let bottom = Panel { top: TOPS[1], t0, t1, y0: elo, y1: ehi };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    top.frame(&mut svg, "log10 |x(t)|", |y| format!("{y:.1}"));
    bottom.frame(&mut svg, "parameter estimate", |y| format!("{y:.2}"));

    for (k, _) in table.event_flag.iter().enumerate().filter(|(_, f)| **f) {
        for p in [&top, &bottom] {
            let x = p.px(table.t[k]);
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#bbb" stroke-dasharray="3,3"/>"##,
                p.top,
                p.top + PANEL_H
            );
        }
    }
    top.polyline(&mut svg, &lx, COLORS[0]);
    for i in 0..l {
        // steps: hold each value until the next sample
        let mut pts = Vec::with_capacity(2 * table.len());
        for k in 0..table.len() {
            let v = table.thetahat[k][i];
            if k > 0 {
                pts.push((table.t[k], table.thetahat[k - 1][i]));
            }
            pts.push((table.t[k], v));
        }
        let color = COLORS[i % COLORS.len()];
        bottom.polyline(&mut svg, &pts, color);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">thetahat_{}</text>"#,
            W - RIGHT - 80.0,
            bottom.top + 14.0 + 13.0 * i as f64,
            i + 1
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_svg(table: &TrajectoryTable, path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(table)?)?;
    Ok(())
}
