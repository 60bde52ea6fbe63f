//! Static SVG figures: a grid of panels holding line, scatter and histogram
//! series. Layout depends only on the data, so output is reproducible.

use std::fmt::Write;

const PANEL_W: f64 = 480.0;
const PANEL_H: f64 = 360.0;
const MARGIN_L: f64 = 78.0;
const MARGIN_R: f64 = 18.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 52.0;
/// Line series longer than this are thinned to every k-th point.
const MAX_LINE_POINTS: usize = 4000;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub enum Mark {
    Line(Vec<(f64, f64)>),
    Scatter(Vec<(f64, f64)>),
    /// `(left, right, height)` per bar.
    Bars(Vec<(f64, f64, f64)>),
    /// A vertical marker at the given abscissa.
    VLine(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub mark: Mark,
}

impl Series {
    pub fn line(label: &str, points: Vec<(f64, f64)>) -> Self {
        Series { label: label.to_string(), mark: Mark::Line(points) }
    }

    pub fn scatter(label: &str, points: Vec<(f64, f64)>) -> Self {
        Series { label: label.to_string(), mark: Mark::Scatter(points) }
    }

    pub fn bars(label: &str, bars: Vec<(f64, f64, f64)>) -> Self {
        Series { label: label.to_string(), mark: Mark::Bars(bars) }
    }

    pub fn vline(label: &str, x: f64) -> Self {
        Series { label: label.to_string(), mark: Mark::VLine(x) }
    }

    fn xs(&self) -> Vec<f64> {
        match &self.mark {
            Mark::Line(p) | Mark::Scatter(p) => p.iter().map(|v| v.0).collect(),
            Mark::Bars(b) => b.iter().flat_map(|v| [v.0, v.1]).collect(),
            Mark::VLine(x) => vec![*x],
        }
    }

    fn ys(&self) -> Vec<f64> {
        match &self.mark {
            Mark::Line(p) | Mark::Scatter(p) => p.iter().map(|v| v.1).collect(),
            Mark::Bars(b) => b.iter().flat_map(|v| [0.0, v.2]).collect(),
            Mark::VLine(_) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

impl Panel {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Panel { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), series: Vec::new() }
    }

    pub fn with(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub panels: Vec<Panel>,
    pub columns: usize,
}

impl Figure {
    pub fn single(panel: Panel) -> Self {
        Figure { panels: vec![panel], columns: 1 }
    }

    pub fn grid(panels: Vec<Panel>, columns: usize) -> Self {
        Figure { panels, columns: columns.max(1) }
    }

    pub fn render(&self) -> String {
        let cols = self.columns.min(self.panels.len().max(1));
        let rows = self.panels.len().div_ceil(cols).max(1);
        let (w, h) = (PANEL_W * cols as f64, PANEL_H * rows as f64);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        for (i, panel) in self.panels.iter().enumerate() {
            let ox = PANEL_W * (i % cols) as f64;
            let oy = PANEL_H * (i / cols) as f64;
            render_panel(&mut s, panel, ox, oy);
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Data range padded by 5%, widened when degenerate.
fn axis_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi == lo {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Tick positions at a 1-2-5 step giving about five ticks.
fn ticks(lo: f64, hi: f64) -> (Vec<f64>, f64) {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    ((first..=last).map(|k| k as f64 * step).collect(), step)
}

fn tick_label(v: f64, step: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !(1e-3..1e5).contains(&step) {
        format!("{v:.2e}")
    } else {
        let decimals = (-step.log10().floor()).max(0.0) as usize;
        format!("{v:.decimals$}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn thin(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if points.len() <= MAX_LINE_POINTS {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(MAX_LINE_POINTS);
    let mut out: Vec<(f64, f64)> = points.iter().step_by(stride).copied().collect();
    if !(points.len() - 1).is_multiple_of(stride) {
        out.push(points[points.len() - 1]);
    }
    out
}

fn render_panel(s: &mut String, panel: &Panel, ox: f64, oy: f64) {
    let (x0, x1) = axis_range(panel.series.iter().flat_map(|v| v.xs()));
    let (y0, y1) = axis_range(panel.series.iter().flat_map(|v| v.ys()));
    let (left, top) = (ox + MARGIN_L, oy + MARGIN_T);
    let (pw, ph) = (PANEL_W - MARGIN_L - MARGIN_R, PANEL_H - MARGIN_T - MARGIN_B);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let _ = writeln!(s, r#"<g>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{}</text>"#,
        left + pw / 2.0,
        oy + 20.0,
        escape(&panel.title)
    );
    let _ = writeln!(s, r#"<rect x="{left:.2}" y="{top:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#);
    let (xt, xstep) = ticks(x0, x1);
    for t in xt {
        let x = sx(t);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, top + ph, top + ph + 4.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, top + ph + 16.0, tick_label(t, xstep));
    }
    let (yt, ystep) = ticks(y0, y1);
    for t in yt {
        let y = sy(t);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{left:.2}" y2="{y:.2}" stroke="black"/>"#, left - 4.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, left - 6.0, y + 4.0, tick_label(t, ystep));
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        oy + PANEL_H - 12.0,
        escape(&panel.x_label)
    );
    let (lx, ly) = (ox + 14.0, top + ph / 2.0);
    let _ = writeln!(
        s,
        r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#,
        escape(&panel.y_label)
    );

    let _ = writeln!(s, r#"<svg x="{left:.2}" y="{top:.2}" width="{pw:.2}" height="{ph:.2}" overflow="hidden"><g transform="translate({:.2} {:.2})">"#, -left, -top);
    for (i, series) in panel.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        match &series.mark {
            Mark::Line(points) => {
                let mut d = String::new();
                let mut pen_down = false;
                for &(x, y) in &thin(points) {
                    if !(x.is_finite() && y.is_finite()) {
                        pen_down = false;
                        continue;
                    }
                    let _ = write!(d, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, sx(x), sy(y));
                    pen_down = true;
                }
                let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.2"/>"#, d.trim_end());
            }
            Mark::Scatter(points) => {
                for &(x, y) in points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
                    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
                }
            }
            Mark::Bars(bars) => {
                for &(a, b, height) in bars {
                    let (xa, xb, yh) = (sx(a), sx(b), sy(height));
                    let _ = writeln!(
                        s,
                        r#"<rect x="{xa:.2}" y="{yh:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.5" stroke="{color}" stroke-width="0.5"/>"#,
                        (xb - xa).max(0.0),
                        (sy(0.0) - yh).max(0.0)
                    );
                }
            }
            Mark::VLine(x) => {
                let _ = writeln!(
                    s,
                    r#"<line x1="{0:.2}" y1="{top:.2}" x2="{0:.2}" y2="{1:.2}" stroke="{color}" stroke-dasharray="5 3"/>"#,
                    sx(*x),
                    top + ph
                );
            }
        }
    }
    let _ = writeln!(s, "</g></svg>");

    let labelled: Vec<&Series> = panel.series.iter().filter(|v| !v.label.is_empty()).collect();
    if !labelled.is_empty() {
        let widest = labelled.iter().map(|v| v.label.chars().count()).max().unwrap_or(0) as f64;
        let w = 32.0 + 6.5 * widest;
        let h = 8.0 + 14.0 * labelled.len() as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{w:.2}" height="{h:.2}" fill="white" fill-opacity="0.85"/>"#,
            left + pw - 4.0 - w,
            top + 3.0
        );
    }
    for (i, series) in panel.series.iter().enumerate().filter(|(_, v)| !v.label.is_empty()) {
        let color = PALETTE[i % PALETTE.len()];
        let y = top + 14.0 + 14.0 * i as f64;
        let x = left + pw - 8.0;
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#, x - 16.0, y - 4.0, x, y - 4.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{y:.2}" text-anchor="end">{}</text>"#, x - 20.0, escape(&series.label));
    }
    let _ = writeln!(s, "</g>");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_follow_one_two_five() {
        let (t, step) = ticks(0.0, 10.0);
        assert_eq!(step, 2.0);
        assert_eq!(t, vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        let (_, step) = ticks(1237.0, 1263.0);
        assert_eq!(step, 10.0);
    }

    #[test]
    fn degenerate_ranges_are_widened() {
        assert_eq!(axis_range([3.0, 3.0].into_iter()), (2.7, 3.3));
        assert_eq!(axis_range(std::iter::empty()), (0.0, 1.0));
    }

    #[test]
    fn rendering_is_deterministic_and_well_formed() {
        let panel = Panel::new("phase <plane>", "q", "p")
            .with(Series::line("stochastic", (0..10_000).map(|i| (i as f64, (i as f64).sin())).collect()))
            .with(Series::scatter("", vec![(1.0, 2.0), (f64::NAN, 1.0)]))
            .with(Series::bars("hist", vec![(0.0, 1.0, 0.5)]))
            .with(Series::vline("mode", 0.5));
        let fig = Figure::grid(vec![panel.clone(), panel], 2);
        let a = fig.render();
        assert_eq!(a, fig.render());
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("phase &lt;plane&gt;"));
        assert!(!a.contains("NaN"));
        assert_eq!(a.matches("<circle").count(), 2);
    }

    #[test]
    fn long_lines_keep_their_last_point() {
        let pts: Vec<(f64, f64)> = (0..10_001).map(|i| (i as f64, 0.0)).collect();
        let t = thin(&pts);
        assert!(t.len() <= MAX_LINE_POINTS + 1);
        assert_eq!(t.last(), pts.last());
    }
}
