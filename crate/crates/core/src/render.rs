//! SVG output: assignment maps and cost/spread curves over capacity.

use std::fmt::Write as _;

use crate::geogen::service_area;
use crate::io::SummaryRow;
use crate::model::{Assignment, Instance};

const TABLEAU: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
];

/// Colour of server slot `k`; the first ten are a fixed qualitative
/// palette, later ones step around the hue circle by the golden angle.
pub fn palette(k: usize) -> String {
    if k < TABLEAU.len() {
        return TABLEAU[k].to_string();
    }
    let h = (k as f64 * 137.507_764) % 360.0;
    let (s, l) = (0.65, 0.5);
    let c = (1.0 - (2.0 * l - 1.0f64).abs()) * s;
    let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let (r, g, b) = match (h / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let byte = |v: f64| ((v + m) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", byte(r), byte(g), byte(b))
}

const SIZE: f64 = 600.0;
const PAD: f64 = 20.0;

/// Cells filled with their server's colour (squares on grid layouts, dots
/// otherwise) and one ring per server site.
pub fn render_map(instance: &Instance, assignment: &Assignment) -> String {
    let area = service_area(instance);
    let mut lo = area.min;
    let mut hi = area.max;
    for p in instance.candidate_coords() {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    let span = (hi.x - lo.x).max(hi.y - lo.y).max(f64::MIN_POSITIVE);
    let scale = (SIZE - 2.0 * PAD) / span;
    let px = |x: f64| PAD + (x - lo.x) * scale;
    // y grows upward in the plane, downward in SVG
    let py = |y: f64| SIZE - PAD - (y - lo.y) * scale;

    let slot_of = |l: usize| assignment.server_locations().iter().position(|&s| s == l).unwrap_or(0);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(svg, r#"<g id="cells">"#);
    for (i, p) in instance.cell_coords().iter().enumerate() {
        let colour = palette(slot_of(assignment.location_of(i)));
        match instance.grid() {
            Some(g) => {
                let side = g.cell_size * scale;
                let _ = writeln!(
                    svg,
                    r#"<rect class="cell" x="{:.2}" y="{:.2}" width="{side:.2}" height="{side:.2}" fill="{colour}"/>"#,
                    px(p.x) - side / 2.0,
                    py(p.y) - side / 2.0,
                );
            }
            None => {
                let _ = writeln!(
                    svg,
                    r#"<circle class="cell" cx="{:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#,
                    px(p.x),
                    py(p.y)
                );
            }
        }
    }
    let _ = writeln!(svg, "</g>\n<g id=\"servers\">");
    for (k, &l) in assignment.server_locations().iter().enumerate() {
        let p = instance.candidate_coords()[l];
        let _ = writeln!(
            svg,
            r##"<circle class="server" cx="{:.2}" cy="{:.2}" r="8" fill="none" stroke="#000" stroke-width="3"/>"##,
            px(p.x),
            py(p.y)
        );
        let _ = writeln!(
            svg,
            r#"<circle class="server" cx="{:.2}" cy="{:.2}" r="8" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            px(p.x),
            py(p.y),
            palette(k)
        );
    }
    svg.push_str("</g>\n</svg>\n");
    svg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Cost,
    Spread,
}

impl Metric {
    fn label(self) -> &'static str {
        match self {
            Metric::Cost => "cost",
            Metric::Spread => "spread",
        }
    }

    fn band(self, r: &SummaryRow) -> (f64, f64, f64) {
        match self {
            Metric::Cost => (r.cost_mean, r.cost_min, r.cost_max),
            Metric::Spread => (r.spread_mean, r.spread_min, r.spread_max),
        }
    }
}

/// Algorithms in first-appearance order.
fn algorithms(rows: &[SummaryRow]) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    for r in rows {
        if !out.contains(&r.algo.as_str()) {
            out.push(&r.algo);
        }
    }
    out
}

/// Mean line and min-max band per algorithm against capacity.
pub fn render_curves(rows: &[SummaryRow], metric: Metric) -> String {
    let (w, h, left, bottom) = (640.0, 420.0, 60.0, 40.0);
    let finite: Vec<&SummaryRow> = rows.iter().filter(|r| r.runs > 0).collect();
    let xs = finite.iter().map(|r| r.capacity);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let ys = finite.iter().flat_map(|r| {
        let (_, lo, hi) = metric.band(r);
        [lo, hi]
    });
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let (x0, x1) = if x0 < x1 { (x0, x1) } else { (x0 - 0.5, x0 + 0.5) };
    let (y0, y1) = if y0 < y1 { (y0, y1) } else { (y0 - 0.5, y0 + 0.5) };
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - 20.0);
    let sy = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - bottom - 20.0);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{left}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/><line x1="{left}" y1="20" x2="{left}" y2="{0}" stroke="black"/>"#,
        h - bottom,
        w - 20.0
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">capacity</text>"#, w / 2.0, h - 8.0);
    let _ = writeln!(svg, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#, h / 2.0, h / 2.0, metric.label());
    let _ = writeln!(svg, r#"<text x="{left}" y="{}" font-size="10">{x0}</text>"#, h - bottom + 14.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{x1}</text>"#, w - 20.0, h - bottom + 14.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{y0:.3}</text>"#, left - 4.0, h - bottom);
    let _ = writeln!(svg, r#"<text x="{}" y="24" font-size="10" text-anchor="end">{y1:.3}</text>"#, left - 4.0);

    for (k, algo) in algorithms(rows).into_iter().enumerate() {
        let colour = palette(k);
        let mut pts: Vec<&SummaryRow> = finite.iter().copied().filter(|r| r.algo == algo).collect();
        pts.sort_by(|a, b| a.capacity.total_cmp(&b.capacity));
        let upper: Vec<String> = pts.iter().map(|r| format!("{:.2},{:.2}", sx(r.capacity), sy(metric.band(r).2))).collect();
        let lower: Vec<String> = pts.iter().rev().map(|r| format!("{:.2},{:.2}", sx(r.capacity), sy(metric.band(r).1))).collect();
        let mean: Vec<String> = pts.iter().map(|r| format!("{:.2},{:.2}", sx(r.capacity), sy(metric.band(r).0))).collect();
        let _ = writeln!(svg, r#"<polygon points="{} {}" fill="{colour}" fill-opacity="0.2" stroke="none"/>"#, upper.join(" "), lower.join(" "));
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#, mean.join(" "));
        let _ = writeln!(svg, r#"<text x="{}" y="{}" fill="{colour}" font-size="12">{algo}</text>"#, left + 10.0, 34.0 + 14.0 * k as f64);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Long-format curve table: one row per (algorithm, capacity).
pub fn curves_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("algo,capacity,cost_mean,cost_min,cost_max,spread_mean,spread_min,spread_max\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.algo, r.capacity, r.cost_mean, r.cost_min, r.cost_max, r.spread_mean, r.spread_min, r.spread_max
        );
    }
    out
}
