//! Small dependency-free SVG line charts for trajectories, the consensus
//! metric and switching signals.

use std::fmt::Write as _;

use crate::analysis::ConsensusReport;
use crate::dynamics::Trajectory;
use crate::topology::GraphSignal;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: (f64, f64, f64, f64) = (64.0, 24.0, 36.0, 48.0); // left, right, top, bottom
const MAX_POINTS: usize = 1500;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
            dashed: false,
        }
    }
}

fn thin(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if points.len() <= MAX_POINTS {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(MAX_POINTS);
    let mut out: Vec<_> = points.iter().step_by(stride).copied().collect();
    if out.last() != points.last() {
        out.push(*points.last().expect("non-empty"));
    }
    out
}

fn nice_ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / count as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span {
        out.push(t);
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        format!("{}", (v * 1e6).round() / 1e6)
    } else {
        format!("{v:.0e}")
    }
}

/// Line chart; with `log_y` the y values are plotted as `log10` and
/// nonpositive or non-finite points are dropped.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series], log_y: bool) -> String {
    let prepared: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            let pts: Vec<(f64, f64)> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log_y || *y > 0.0))
                .map(|&(x, y)| (x, if log_y { y.log10() } else { y }))
                .collect();
            thin(&pts)
        })
        .collect();
    let all = prepared.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.04 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let (ml, mr, mt, mb) = MARGIN;
    let (pw, ph) = (WIDTH - ml - mr, HEIGHT - mt - mb);
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| mt + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for t in nice_ticks(x0, x1, 8) {
        let x = sx(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            mt,
            mt + ph,
            mt + ph + 14.0,
            fmt_tick(t)
        );
    }
    for t in nice_ticks(y0, y1, 6) {
        let y = sy(t);
        let label = if log_y {
            format!("1e{}", fmt_tick(t))
        } else {
            fmt_tick(t)
        };
        let _ = writeln!(
            out,
            r##"<line x1="{ml}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            ml + pw,
            ml - 4.0,
            y + 4.0,
            label
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        ml + pw / 2.0,
        HEIGHT - 8.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate(14 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        mt + ph / 2.0,
        escape(&if log_y {
            format!("{y_label} (log scale)")
        } else {
            y_label.to_string()
        })
    );
    for (k, (s, pts)) in series.iter().zip(&prepared).enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.4"{dash} points="{}"/>"#,
            path.join(" ")
        );
        if series.len() <= 12 {
            let ly = mt + 14.0 + 14.0 * k as f64;
            let _ = writeln!(
                out,
                r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
                ml + pw - 110.0,
                ml + pw - 90.0,
                ml + pw - 85.0,
                ly + 4.0,
                escape(&s.label)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Every agent's state over time.
pub fn plot_states(traj: &Trajectory, title: &str) -> String {
    let series: Vec<Series> = (0..traj.n())
        .map(|i| {
            Series::new(
                format!("x_{}", i + 1),
                traj.times()
                    .iter()
                    .zip(traj.states())
                    .map(|(&t, x)| (t, x[i]))
                    .collect(),
            )
        })
        .collect();
    line_chart(title, "t", "state", &series, false)
}

/// `d(x(t), 𝟙)` and the spread on a log scale, with the certified envelope
/// `K e^{−λ(t − t_0)} d(t_0)` when a finite rate is given.
pub fn plot_metric(traj: &Trajectory, report: Option<&ConsensusReport>, title: &str) -> String {
    let times = traj.times();
    let diag = traj.diagnostics();
    let mut series = vec![
        Series::new(
            "d_hilbert",
            times.iter().zip(diag).map(|(&t, d)| (t, d.d_hilbert)).collect(),
        ),
        Series::new("spread", times.iter().zip(diag).map(|(&t, d)| (t, d.spread)).collect()),
    ];
    if let Some(r) = report.filter(|r| r.rate_lambda.is_finite() && r.prefactor_k.is_finite()) {
        let (t0, d0) = (times[0], diag[0].d_hilbert);
        let mut env = Series::new(
            "envelope",
            times
                .iter()
                .map(|&t| (t, r.prefactor_k * (-r.rate_lambda * (t - t0)).exp() * d0))
                .collect(),
        );
        env.dashed = true;
        series.push(env);
    }
    line_chart(title, "t", "distance to consensus", &series, true)
}

/// Step plot of the weights of the given links (0-based `(i, j)`).
pub fn plot_signal(signal: &GraphSignal, t0: f64, t1: f64, links: &[(usize, usize)], title: &str) -> String {
    let series: Vec<Series> = links
        .iter()
        .map(|&(i, j)| {
            let mut pts = Vec::new();
            for (a, b, g) in signal.pieces(t0, t1) {
                let w = if i < g.n() && j < g.n() { g.weight(i, j) } else { 0.0 };
                pts.push((a, w));
                pts.push((b, w));
            }
            Series::new(format!("a_{}{}", i + 1, j + 1), pts)
        })
        .collect();
    line_chart(title, "t", "weight", &series, false)
}
