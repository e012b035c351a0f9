//! Static SVG: map with plan, corridor and executed path on top, barrier and
//! gain time series below.

use std::fmt::Write as _;
use std::path::Path;

use super::TraceRow;
use crate::corridor::Corridor;
use crate::error::Result;
use crate::geometry::PlanarCurve;
use crate::world::Costmap;
use crate::Vec2;

const WIDTH: f64 = 800.0;
const MAP_HEIGHT: f64 = 500.0;
const SERIES_HEIGHT: f64 = 180.0;
const PAD: f64 = 40.0;

#[derive(Debug, Clone, Copy, Default)]
pub struct PlotData<'a> {
    pub rows: &'a [TraceRow],
    pub map: Option<&'a Costmap>,
    pub plan: Option<(&'a PlanarCurve, &'a Corridor)>,
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    lo: Vec2,
    hi: Vec2,
}

impl Frame {
    fn map(&self, p: Vec2) -> (f64, f64) {
        let sx = (p.x - self.lo.x) / (self.hi.x - self.lo.x).max(1e-9);
        let sy = (p.y - self.lo.y) / (self.hi.y - self.lo.y).max(1e-9);
        (self.x0 + sx * self.w, self.y0 + (1.0 - sy) * self.h)
    }
}

fn polyline(out: &mut String, f: &Frame, pts: &[Vec2], style: &str) {
    if pts.len() < 2 {
        return;
    }
    let mut d = String::new();
    for p in pts {
        let (x, y) = f.map(*p);
        let _ = write!(d, "{x:.2},{y:.2} ");
    }
    let _ = writeln!(out, r#"<polyline fill="none" {style} points="{}"/>"#, d.trim_end());
}

pub fn render_svg(data: &PlotData) -> String {
    let rows = data.rows;
    let total_h = MAP_HEIGHT + 2.0 * SERIES_HEIGHT + 4.0 * PAD;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{total_h}" viewBox="0 0 {WIDTH} {total_h}" font-family="sans-serif" font-size="11">"#
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // Spatial panel bounds: map extent, else the path.
    let (lo, hi) = match data.map {
        Some(m) => {
            let (w, h) = m.extent();
            (m.origin(), m.origin() + Vec2::new(w, h))
        }
        None => {
            let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
            let mut hi = -lo;
            for r in rows {
                lo = lo.inf(&Vec2::new(r.x, r.y));
                hi = hi.sup(&Vec2::new(r.x, r.y));
            }
            if rows.is_empty() {
                (Vec2::zeros(), Vec2::new(1.0, 1.0))
            } else {
                (lo - Vec2::new(0.5, 0.5), hi + Vec2::new(0.5, 0.5))
            }
        }
    };
    // Keep aspect ratio.
    let span = hi - lo;
    let scale = ((WIDTH - 2.0 * PAD) / span.x).min(MAP_HEIGHT / span.y);
    let frame = Frame {
        x0: PAD,
        y0: PAD,
        w: span.x * scale,
        h: span.y * scale,
        lo,
        hi,
    };
    let _ = writeln!(
        out,
        r#"<rect x="{}" y="{}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        frame.x0, frame.y0, frame.w, frame.h
    );
    if let Some(m) = data.map {
        let res = m.resolution();
        for j in 0..m.height() {
            let mut i = 0;
            while i < m.width() {
                if !m.is_occupied(i as i64, j as i64) {
                    i += 1;
                    continue;
                }
                let start = i;
                while i < m.width() && m.is_occupied(i as i64, j as i64) {
                    i += 1;
                }
                let p0 = m.origin() + Vec2::new(start as f64 * res, (j + 1) as f64 * res);
                let (x, y) = frame.map(p0);
                let _ = writeln!(
                    out,
                    r##"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#444"/>"##,
                    (i - start) as f64 * res * scale,
                    res * scale
                );
            }
        }
    }
    if let Some((curve, corridor)) = data.plan {
        let (a, b) = corridor.interval();
        let n = 200;
        let xs: Vec<f64> = (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect();
        let full: Vec<Vec2> = (0..=n)
            .map(|k| curve.evaluate(curve.total_length() * k as f64 / n as f64))
            .collect();
        polyline(&mut out, &frame, &full, r##"stroke="#1f77b4" stroke-width="1.5" stroke-dasharray="4 3""##);
        let up: Vec<Vec2> = xs.iter().map(|&x| corridor.upper_point(curve, x)).collect();
        let low: Vec<Vec2> = xs.iter().map(|&x| corridor.lower_point(curve, x)).collect();
        polyline(&mut out, &frame, &up, r##"stroke="#2ca02c" stroke-width="1""##);
        polyline(&mut out, &frame, &low, r##"stroke="#d62728" stroke-width="1""##);
    }
    let path: Vec<Vec2> = rows.iter().map(|r| Vec2::new(r.x, r.y)).collect();
    polyline(&mut out, &frame, &path, r#"stroke="black" stroke-width="1.5""#);

    // Time series panels.
    let t_max = rows.last().map(|r| r.t).unwrap_or(1.0).max(1e-9);
    let panels: [(&str, [(&str, fn(&TraceRow) -> f64, &str); 2]); 2] = [
        (
            "barrier",
            [("h_up", |r| r.h_up, "#2ca02c"), ("h_lo", |r| r.h_lo, "#d62728")],
        ),
        (
            "gain",
            [("alpha_up", |r| r.alpha_up, "#2ca02c"), ("alpha_lo", |r| r.alpha_lo, "#d62728")],
        ),
    ];
    for (pi, (title, series)) in panels.iter().enumerate() {
        let y0 = MAP_HEIGHT + 2.0 * PAD + pi as f64 * (SERIES_HEIGHT + PAD);
        let vals: Vec<f64> = rows
            .iter()
            .flat_map(|r| series.iter().map(move |s| (s.1)(r)))
            .filter(|v| v.is_finite())
            .collect();
        let mut vmin = vals.iter().cloned().fold(f64::INFINITY, f64::min).min(0.0);
        let mut vmax = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !vmax.is_finite() || vmax <= vmin {
            vmin = 0.0;
            vmax = 1.0;
        }
        let f = Frame {
            x0: PAD,
            y0,
            w: WIDTH - 2.0 * PAD,
            h: SERIES_HEIGHT,
            lo: Vec2::new(0.0, vmin),
            hi: Vec2::new(t_max, vmax),
        };
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            f.x0, f.y0, f.w, f.h
        );
        let _ = writeln!(out, r#"<text x="{}" y="{}">{title} vs t [s]</text>"#, f.x0, f.y0 - 6.0);
        let (zx0, zy) = f.map(Vec2::new(0.0, 0.0));
        let _ = writeln!(
            out,
            r##"<line x1="{zx0:.2}" y1="{zy:.2}" x2="{:.2}" y2="{zy:.2}" stroke="#999" stroke-dasharray="2 2"/>"##,
            f.x0 + f.w
        );
        for (si, (name, get, color)) in series.iter().enumerate() {
            let pts: Vec<Vec2> = rows.iter().map(|r| Vec2::new(r.t, get(r))).collect();
            polyline(&mut out, &f, &pts, &format!(r#"stroke="{color}" stroke-width="1.2""#));
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" fill="{color}">{name}</text>"#,
                f.x0 + f.w - 120.0 + 60.0 * si as f64,
                f.y0 - 6.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}">{vmax:.3}</text><text x="{}" y="{}">{vmin:.3}</text>"#,
            2.0,
            f.y0 + 10.0,
            2.0,
            f.y0 + f.h
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn write_svg(data: &PlotData, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render_svg(data))?;
    Ok(())
}
