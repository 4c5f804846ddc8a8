//! Static SVG charts of simulation results.

use std::collections::BTreeMap;
use std::fmt::Write;

use agewatch::sim::{mean_finite, ComparisonTable, RunIndicators};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        LEFT + (v - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (v - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn header(svg: &mut String, title: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(svg: &mut String, x_label: &str, y_label: &str) {
    let (l, r, t, b) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        svg,
        r#"<path d="M{l},{t} L{l},{b} L{r},{b}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        (t + b) / 2.0,
        escape(y_label)
    );
}

fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

fn legend(svg: &mut String, entries: &[(String, &str)]) {
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = WIDTH - RIGHT + 16.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            x + 20.0,
            x + 26.0,
            y + 4.0,
            escape(label)
        );
    }
}

/// Mean launch time over all activities, binned in time, one line per run.
pub fn launch_time_chart(runs: &[RunIndicators], bin_s: f64) -> String {
    let lines: Vec<(String, Vec<(f64, f64)>)> = runs
        .iter()
        .map(|run| {
            let mut bins: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
            for series in run.indicators.of_kind("launch_time") {
                for &(t, v) in series.samples() {
                    let e = bins.entry((t / bin_s).floor() as i64).or_default();
                    e.0 += v;
                    e.1 += 1;
                }
            }
            let points = bins
                .into_iter()
                .map(|(k, (sum, n))| ((k as f64 + 0.5) * bin_s / 3600.0, sum / n as f64))
                .collect();
            (run.experiment_id.clone(), points)
        })
        .collect();
    let all = lines.iter().flat_map(|(_, p)| p.iter());
    let (mut x1, mut y0, mut y1) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    let pad = ((y1 - y0) * 0.05).max(1.0);
    let frame = Frame {
        x0: 0.0,
        x1: x1.max(1e-9),
        y0: y0 - pad,
        y1: y1 + pad,
    };

    let mut svg = String::new();
    header(&mut svg, "Mean launch time");
    axes(&mut svg, "time [h]", "launch time [ms]");
    for v in ticks(frame.x0, frame.x1, 6) {
        let x = frame.x(v);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{v:.1}</text>"#,
            HEIGHT - BOTTOM + 16.0
        );
    }
    for v in ticks(frame.y0, frame.y1, 5) {
        let y = frame.y(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.0}</text>"##,
            WIDTH - RIGHT,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let mut entries = Vec::new();
    for (i, (id, points)) in lines.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", frame.x(x), frame.y(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        entries.push((id.clone(), color));
    }
    legend(&mut svg, &entries);
    svg.push_str("</svg>\n");
    svg
}

/// Mean time to aging failure per experiment on a log scale. Infinite
/// estimates are left out of the means; a bar with none left reads `+inf`.
pub fn ttaf_chart(table: &ComparisonTable) -> String {
    let mut bars: Vec<(String, Option<f64>)> = Vec::new();
    if let Some(first) = table.experiments.first() {
        bars.push((
            table.baseline_id.clone(),
            mean_finite(first.rows.iter().map(|r| r.ttaf_s / 3600.0)),
        ));
    }
    for exp in &table.experiments {
        bars.push((
            exp.experiment_id.clone(),
            mean_finite(exp.rows.iter().map(|r| r.ttaf_r_s / 3600.0)),
        ));
    }
    let finite: Vec<f64> = bars.iter().filter_map(|b| b.1).filter(|v| *v > 0.0).collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (d0, d1) = if finite.is_empty() {
        (0.0, 1.0)
    } else {
        let d0 = lo.log10().floor();
        (d0, hi.log10().ceil().max(d0 + 1.0))
    };
    let frame = Frame {
        x0: 0.0,
        x1: bars.len().max(1) as f64,
        y0: d0,
        y1: d1,
    };

    let mut svg = String::new();
    header(&mut svg, "Mean time to aging failure");
    axes(&mut svg, "experiment", "TTAF [h, log scale]");
    let mut d = d0;
    while d <= d1 {
        let y = frame.y(d);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            WIDTH - RIGHT,
            LEFT - 6.0,
            y + 4.0,
            10f64.powf(d)
        );
        d += 1.0;
    }
    for (i, (id, value)) in bars.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let (top, label) = match value {
            Some(v) if *v > 0.0 => (frame.y(v.log10()), format!("{v:.1}")),
            Some(v) => (frame.y(d0), format!("{v:.1}")),
            None => (TOP, "+inf".to_string()),
        };
        let x = frame.x(i as f64 + 0.2);
        let w = frame.x(i as f64 + 0.8) - x;
        let base = frame.y(d0);
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.1}" y="{top:.1}" width="{w:.1}" height="{:.1}" fill="{color}"/>"#,
            base - top
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{label}</text><text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x + w / 2.0,
            top - 4.0,
            x + w / 2.0,
            HEIGHT - BOTTOM + 16.0,
            escape(id)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
