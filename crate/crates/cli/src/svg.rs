//! Plain-text SVG rendering for plans and aggregate statistics.

use std::fmt::Write;

use bitstar::bench::{AggregateRow, Regime};
use bitstar::{Path, StateVec, World};

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Frame {
    width: f64,
    height: f64,
    margin: f64,
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.margin + (x - self.x.0) / (self.x.1 - self.x.0) * (self.width - 2.0 * self.margin)
    }

    fn py(&self, y: f64) -> f64 {
        self.height - self.margin - (y - self.y.0) / (self.y.1 - self.y.0) * (self.height - 2.0 * self.margin)
    }

    fn header(&self, out: &mut String, title: &str) {
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
            w = self.width,
            h = self.height
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#, self.width / 2.0, escape(title));
    }

    fn axes(&self, out: &mut String, x_label: &str, y_label: &str) {
        let (x0, x1) = (self.px(self.x.0), self.px(self.x.1));
        let (y0, y1) = (self.py(self.y.0), self.py(self.y.1));
        let _ = writeln!(out, r#"<path d="M{x0:.1},{y1:.1} L{x0:.1},{y0:.1} L{x1:.1},{y0:.1}" fill="none" stroke="black"/>"#);
        for i in 0..=5 {
            let f = i as f64 / 5.0;
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let (tx, ty) = (self.px(xv), self.py(yv));
            let _ = writeln!(out, r#"<line x1="{tx:.1}" y1="{y0:.1}" x2="{tx:.1}" y2="{:.1}" stroke="black"/>"#, y0 + 4.0);
            let _ = writeln!(out, r#"<text x="{tx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, y0 + 18.0, tick(xv));
            let _ = writeln!(out, r#"<line x1="{:.1}" y1="{ty:.1}" x2="{x0:.1}" y2="{ty:.1}" stroke="black"/>"#, x0 - 4.0);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 7.0, ty + 4.0, tick(yv));
        }
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, self.height - 12.0, escape(x_label));
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(y_label)
        );
    }

    fn legend(&self, out: &mut String, names: &[&str]) {
        for (i, name) in names.iter().enumerate() {
            let y = self.margin + 14.0 * i as f64;
            let x = self.width - self.margin - 130.0;
            let _ = writeln!(out, r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="2"/>"#, x + 20.0, PALETTE[i % PALETTE.len()]);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, x + 26.0, y + 4.0, escape(name));
        }
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(points: &[(f64, f64)], colour: &str, extra: &str) -> String {
    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    format!(r#"<polyline points="{}" fill="none" stroke="{colour}" {extra}/>"#, pts.join(" "))
}

/// Obstacles, search tree and solution of a two-dimensional plan.
pub fn plan_svg(world: &World, segments: &[(StateVec, StateVec)], path: Option<&Path>) -> String {
    let b = world.bounds();
    let frame = Frame { width: 600.0, height: 600.0, margin: 30.0, x: (b.lo[0], b.hi[0]), y: (b.lo[1], b.hi[1]) };
    let mut out = String::new();
    frame.header(&mut out, "plan");
    let _ = writeln!(
        out,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        frame.px(b.lo[0]),
        frame.py(b.hi[1]),
        frame.px(b.hi[0]) - frame.px(b.lo[0]),
        frame.py(b.lo[1]) - frame.py(b.hi[1])
    );
    for o in world.obstacles() {
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#888888"/>"##,
            frame.px(o.lo[0]),
            frame.py(o.hi[1]),
            frame.px(o.hi[0]) - frame.px(o.lo[0]),
            frame.py(o.lo[1]) - frame.py(o.hi[1])
        );
    }
    for (a, c) in segments {
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#2ca02c" stroke-width="0.6"/>"##,
            frame.px(a[0]),
            frame.py(a[1]),
            frame.px(c[0]),
            frame.py(c[1])
        );
    }
    if let Some(p) = path {
        let pts: Vec<(f64, f64)> = p.waypoints.iter().map(|w| (frame.px(w[0]), frame.py(w[1]))).collect();
        out.push_str(&polyline(&pts, "#1f77b4", r#"stroke-width="2.5""#));
        out.push('\n');
    }
    for (s, colour) in [(world.start(), "#2ca02c"), (world.goal(), "#d62728")] {
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="{colour}"/>"#, frame.px(s[0]), frame.py(s[1]));
    }
    out.push_str("</svg>\n");
    out
}

fn planners(rows: &[AggregateRow]) -> Vec<&str> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.planner.as_str()) {
            names.push(&r.planner);
        }
    }
    names
}

fn time_range(rows: &[AggregateRow]) -> (f64, f64) {
    let hi = rows.iter().map(|r| r.time_ms).fold(0.0, f64::max);
    (0.0, if hi > 0.0 { hi } else { 1.0 })
}

/// Fraction of trials solved against time, one line per planner.
pub fn success_svg(rows: &[AggregateRow], title: &str) -> String {
    let names = planners(rows);
    let frame = Frame { width: 720.0, height: 440.0, margin: 50.0, x: time_range(rows), y: (0.0, 1.0) };
    let mut out = String::new();
    frame.header(&mut out, title);
    frame.axes(&mut out, "time [ms]", "fraction solved");
    for (i, name) in names.iter().enumerate() {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.planner == *name)
            .map(|r| (frame.px(r.time_ms), frame.py(r.success_fraction)))
            .collect();
        out.push_str(&polyline(&pts, PALETTE[i % PALETTE.len()], r#"stroke-width="1.5""#));
        out.push('\n');
    }
    frame.legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// Median cost against time with confidence bands; dashed where some trials are unsolved.
pub fn cost_svg(rows: &[AggregateRow], title: &str) -> String {
    let names = planners(rows);
    let values: Vec<f64> = rows.iter().flat_map(|r| [r.ci_lo, r.ci_hi, r.median_cost]).flatten().collect();
    let (mut lo, mut hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let frame = Frame { width: 720.0, height: 440.0, margin: 50.0, x: time_range(rows), y: (lo - pad, hi + pad) };
    let mut out = String::new();
    frame.header(&mut out, title);
    frame.axes(&mut out, "time [ms]", "median cost");
    for (i, name) in names.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let mine: Vec<&AggregateRow> = rows.iter().filter(|r| r.planner == *name).collect();
        for run in runs(&mine, |r| r.regime != Regime::None) {
            let mut band: Vec<(f64, f64)> =
                run.iter().filter_map(|r| r.ci_hi.map(|v| (frame.px(r.time_ms), frame.py(v)))).collect();
            band.extend(run.iter().rev().filter_map(|r| r.ci_lo.map(|v| (frame.px(r.time_ms), frame.py(v)))));
            let pts: Vec<String> = band.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(out, r#"<polygon points="{}" fill="{colour}" fill-opacity="0.2" stroke="none"/>"#, pts.join(" "));
        }
        for regime in [Regime::Dashed, Regime::Solid] {
            for run in runs(&mine, |r| r.regime == regime) {
                let pts: Vec<(f64, f64)> =
                    run.iter().filter_map(|r| r.median_cost.map(|m| (frame.px(r.time_ms), frame.py(m)))).collect();
                let dash = if regime == Regime::Dashed { r#"stroke-width="1.5" stroke-dasharray="6,4""# } else { r#"stroke-width="1.5""# };
                out.push_str(&polyline(&pts, colour, dash));
                out.push('\n');
            }
        }
    }
    frame.legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// Maximal contiguous runs of rows satisfying `keep`.
fn runs<'a>(rows: &[&'a AggregateRow], keep: impl Fn(&AggregateRow) -> bool) -> Vec<Vec<&'a AggregateRow>> {
    let mut out = Vec::new();
    let mut cur: Vec<&AggregateRow> = Vec::new();
    for r in rows {
        if keep(r) {
            cur.push(r);
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}
