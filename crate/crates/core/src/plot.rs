//! Static SVG figures: forecast fan charts, generation envelopes and the
//! ablation forest plot.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::evaluation::AblationReport;
use crate::stats::quantile;

const W: f64 = 640.0;
const H: f64 = 360.0;
const MARGIN: f64 = 48.0;

/// Quantile bands of a set of series along a shared x axis.
#[derive(Debug, Clone, Default)]
pub struct Bands {
    pub x: Vec<f64>,
    pub q05: Vec<f64>,
    pub q25: Vec<f64>,
    pub q50: Vec<f64>,
    pub q75: Vec<f64>,
    pub q95: Vec<f64>,
}

impl Bands {
    /// Bands across `samples[i][k]` (sample `i`, position `k`).
    pub fn from_samples(x: Vec<f64>, samples: &[Vec<f64>]) -> Result<Self> {
        let mut b = Bands {
            x,
            ..Default::default()
        };
        for k in 0..b.x.len() {
            let col: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            b.q05.push(quantile(&col, 0.05)?);
            b.q25.push(quantile(&col, 0.25)?);
            b.q50.push(quantile(&col, 0.5)?);
            b.q75.push(quantile(&col, 0.75)?);
            b.q95.push(quantile(&col, 0.95)?);
        }
        Ok(b)
    }
}

/// Extra line drawn over the bands.
#[derive(Debug, Clone)]
pub struct Line {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: String,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0).max(1e-12) * (W - 2.0 * MARGIN)
    }
    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0).max(1e-12) * (H - 2.0 * MARGIN)
    }
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(svg: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        svg,
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\
         <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>",
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    );
    for i in 0..=4 {
        let xv = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let yv = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            f.px(xv),
            H - MARGIN + 14.0,
            tick(xv),
            MARGIN - 4.0,
            f.py(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\
         <text x=\"12\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 12 {:.1})\">{}</text>",
        W / 2.0,
        H - 10.0,
        escape(xlabel),
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn polyline(svg: &mut String, f: &Frame, pts: &[(f64, f64)], color: &str, width: f64) {
    let d: Vec<String> = pts
        .iter()
        .map(|(x, y)| format!("{:.1},{:.1}", f.px(*x), f.py(*y)))
        .collect();
    let _ = writeln!(
        svg,
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" points=\"{}\"/>",
        d.join(" ")
    );
}

fn band(svg: &mut String, f: &Frame, x: &[f64], lo: &[f64], hi: &[f64], opacity: f64) {
    let mut d: Vec<String> = x
        .iter()
        .zip(hi)
        .map(|(x, y)| format!("{:.1},{:.1}", f.px(*x), f.py(*y)))
        .collect();
    d.extend(
        x.iter()
            .zip(lo)
            .rev()
            .map(|(x, y)| format!("{:.1},{:.1}", f.px(*x), f.py(*y))),
    );
    let _ = writeln!(
        svg,
        "<polygon fill=\"steelblue\" fill-opacity=\"{opacity}\" stroke=\"none\" points=\"{}\"/>",
        d.join(" ")
    );
}

/// Shaded 90% and 50% bands, the median, and any extra lines.
pub fn fan_chart_svg(title: &str, bands: &Bands, lines: &[Line], xlabel: &str, ylabel: &str) -> Result<String> {
    if bands.x.is_empty() {
        return Err(Error::invalid("nothing to plot"));
    }
    let all_x = bands
        .x
        .iter()
        .copied()
        .chain(lines.iter().flat_map(|l| l.points.iter().map(|p| p.0)));
    let (x0, x1) = all_x.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let y1 = bands
        .q95
        .iter()
        .copied()
        .chain(lines.iter().flat_map(|l| l.points.iter().map(|p| p.1)))
        .fold(0.0f64, f64::max);
    let f = Frame {
        x0,
        x1,
        y0: 0.0,
        y1: if y1 > 0.0 { y1 * 1.05 } else { 1.0 },
    };
    let mut svg = header(title);
    band(&mut svg, &f, &bands.x, &bands.q05, &bands.q95, 0.25);
    band(&mut svg, &f, &bands.x, &bands.q25, &bands.q75, 0.45);
    let med: Vec<(f64, f64)> = bands.x.iter().copied().zip(bands.q50.iter().copied()).collect();
    polyline(&mut svg, &f, &med, "navy", 2.0);
    for (i, l) in lines.iter().enumerate() {
        polyline(&mut svg, &f, &l.points, &l.color, 1.5);
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{}\">{}</text>",
            W - MARGIN - 120.0,
            MARGIN + 14.0 * i as f64,
            l.color,
            escape(&l.label)
        );
    }
    axes(&mut svg, &f, xlabel, ylabel);
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// One dot per variant at its relative change in WIS, grouped by family,
/// with a dashed line at zero.
pub fn forest_plot_svg(title: &str, report: &AblationReport) -> Result<String> {
    let rows: Vec<_> = report.rows.iter().collect();
    if rows.is_empty() {
        return Err(Error::invalid("empty ablation report"));
    }
    let span = rows
        .iter()
        .map(|r| r.relative_percent.abs())
        .fold(1.0f64, f64::max)
        * 1.1;
    let f = Frame {
        x0: -span,
        x1: span,
        y0: 0.0,
        y1: rows.len() as f64 + 1.0,
    };
    let mut svg = header(title);
    let _ = writeln!(
        svg,
        "<line x1=\"{x:.1}\" y1=\"{}\" x2=\"{x:.1}\" y2=\"{}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>",
        MARGIN,
        H - MARGIN,
        x = f.px(0.0)
    );
    for (i, r) in rows.iter().enumerate() {
        let y = f.py(rows.len() as f64 - i as f64);
        let color = if r.relative_percent >= 0.0 { "seagreen" } else { "firebrick" };
        let label = match r.group {
            Some(g) => format!("{g}: {}", r.variant),
            None => format!("baseline: {}", r.variant),
        };
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.1}\" cy=\"{y:.1}\" r=\"4\" fill=\"{color}\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            f.px(r.relative_percent),
            MARGIN + 4.0,
            y - 6.0,
            escape(&label)
        );
    }
    axes(&mut svg, &f, "relative change in WIS (%), positive = better", "");
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fan_chart_is_svg() {
        let samples: Vec<Vec<f64>> = (0..20).map(|i| (0..10).map(|k| (i + k) as f64).collect()).collect();
        let b = Bands::from_samples((0..10).map(|k| k as f64).collect(), &samples).unwrap();
        let svg = fan_chart_svg("t <1>", &b, &[], "week", "value").unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("t &lt;1&gt;"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
