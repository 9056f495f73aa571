//! Time-varying topologies: piecewise-constant signals, the generators used
//! by the bundled scenarios, and the accumulated-graph lower-bound check.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{SystemModel, Trajectory};
use crate::error::{Error, Result};
use crate::graph::{accumulate, digraph_of_metzler, is_qsc, ConnectivityCertificate, Quadrature, WeightedDigraph};
use crate::hilbert::StateVector;
use crate::rng;

/// Right-continuous piecewise-constant signal. `values[0]` holds before
/// `times[0]`, `values[k]` on `[times[k-1], times[k])`, and the last value
/// from the last switch on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingSignal<P> {
    times: Vec<f64>,
    values: Vec<P>,
}

impl<P> SwitchingSignal<P> {
    pub fn new(times: Vec<f64>, values: Vec<P>) -> Result<Self> {
        if values.len() != times.len() + 1 {
            return Err(Error::Config(format!(
                "switching signal with {} switch times needs {} values, got {}",
                times.len(),
                times.len() + 1,
                values.len()
            )));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "switch times must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self { times, values })
    }

    pub fn constant(value: P) -> Self {
        Self {
            times: Vec::new(),
            values: vec![value],
        }
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[P] {
        &self.values
    }

    fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t)
    }

    pub fn at(&self, t: f64) -> &P {
        &self.values[self.index_at(t)]
    }

    /// Left limit at `t`: the value holding just before `t`.
    pub fn at_left(&self, t: f64) -> &P {
        &self.values[self.times.partition_point(|&s| s < t)]
    }

    /// Switch times strictly inside `(t0, t1)`.
    pub fn switches_in(&self, t0: f64, t1: f64) -> impl Iterator<Item = f64> + '_ {
        let start = self.times.partition_point(|&s| s <= t0);
        self.times[start..].iter().copied().take_while(move |&s| s < t1)
    }

    /// The pieces of the signal restricted to `[t0, t1]`.
    pub fn pieces(&self, t0: f64, t1: f64) -> Vec<(f64, f64, &P)> {
        let mut out = Vec::new();
        let mut a = t0;
        for s in self.switches_in(t0, t1) {
            out.push((a, s, self.at(a)));
            a = s;
        }
        if a < t1 {
            out.push((a, t1, self.at(a)));
        }
        out
    }

    /// Shortest piece strictly between the first and last switch, or
    /// `+∞` when there are fewer than two switches.
    pub fn min_inner_dwell(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    pub fn map<Q>(&self, f: impl Fn(&P) -> Q) -> SwitchingSignal<Q> {
        SwitchingSignal {
            times: self.times.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }
}

pub type GraphSignal = SwitchingSignal<WeightedDigraph>;

/// Scalar coefficient signals (confidence radii, internal dynamics terms).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScalarSignal {
    Constant {
        value: f64,
    },
    Piecewise {
        signal: SwitchingSignal<f64>,
    },
    /// `floor + (initial − floor) e^{−rate t}`
    ExpDecay {
        initial: f64,
        floor: f64,
        rate: f64,
    },
}

impl ScalarSignal {
    pub fn constant(value: f64) -> Self {
        ScalarSignal::Constant { value }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            ScalarSignal::Constant { value } => *value,
            ScalarSignal::Piecewise { signal } => *signal.at(t),
            ScalarSignal::ExpDecay { initial, floor, rate } => floor + (initial - floor) * (-rate * t).exp(),
        }
    }

    pub fn value_left(&self, t: f64) -> f64 {
        match self {
            ScalarSignal::Piecewise { signal } => *signal.at_left(t),
            _ => self.value(t),
        }
    }

    /// Exact `∫_{t0}^{t1} s(t) dt`.
    pub fn integral(&self, t0: f64, t1: f64) -> f64 {
        match self {
            ScalarSignal::Constant { value } => value * (t1 - t0),
            ScalarSignal::Piecewise { signal } => signal.pieces(t0, t1).iter().map(|(a, b, v)| (b - a) * **v).sum(),
            ScalarSignal::ExpDecay { initial, floor, rate } => {
                let decay = if *rate == 0.0 {
                    t1 - t0
                } else {
                    ((-rate * t0).exp() - (-rate * t1).exp()) / rate
                };
                floor * (t1 - t0) + (initial - floor) * decay
            }
        }
    }

    pub fn switches_in(&self, t0: f64, t1: f64) -> Vec<f64> {
        match self {
            ScalarSignal::Piecewise { signal } => signal.switches_in(t0, t1).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSequence {
    times: Vec<f64>,
}

impl CheckpointSequence {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Config("need at least two checkpoints".into()));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "checkpoints must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self { times })
    }

    /// `t0, t0 + T, …`, ending at `t_end` (the last gap may be shorter).
    pub fn uniform(t0: f64, t_end: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::param("spacing", spacing, "must be > 0"));
        }
        if !(t_end > t0) {
            return Err(Error::param("t_end", t_end, "must exceed t0"));
        }
        let count = ((t_end - t0) / spacing * (1.0 - 1e-12)).ceil() as usize;
        let mut times: Vec<f64> = (0..count).map(|k| t0 + k as f64 * spacing).collect();
        times.push(t_end);
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn sup_gap(&self) -> f64 {
        self.intervals().map(|(a, b)| b - a).fold(0.0, f64::max)
    }
}

/// Random switching among `graphs` starting at `t = 0`: piece lengths
/// uniform in `[τ, 2τ]` (the remainder is spread so the last piece inside
/// the horizon also respects the bounds), indices uniform.
pub fn dwell_time_signal(graphs: &[WeightedDigraph], tau: f64, horizon: f64, seed: u64) -> Result<GraphSignal> {
    if graphs.is_empty() {
        return Err(Error::Config("dwell-time signal needs at least one graph".into()));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::param("tau", tau, "must be finite and > 0"));
    }
    if !(horizon >= tau) {
        return Err(Error::param("horizon", horizon, "must be at least the dwell time"));
    }
    let n = graphs[0].n();
    if let Some(g) = graphs.iter().find(|g| g.n() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: g.n(),
        });
    }
    let mut rng = rng::stream(seed, "dwell-time");
    let mut times = Vec::new();
    let mut values = vec![graphs[rng.random_range(0..graphs.len())].clone()];
    let mut t = 0.0;
    while horizon - t > 2.0 * tau {
        let upper = (2.0 * tau).min(horizon - t - tau);
        t += if upper > tau {
            rng.random_range(tau..=upper)
        } else {
            tau
        };
        times.push(t);
        values.push(graphs[rng.random_range(0..graphs.len())].clone());
    }
    SwitchingSignal::new(times, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainActivationConfig {
    pub edges_per_step: usize,
    pub outer_min: f64,
    pub outer_max: f64,
    pub pieces_min: usize,
    pub pieces_max: usize,
    /// Active weights are uniform in `[δ, weight_factor·δ]`.
    pub weight_factor: f64,
}

impl Default for ChainActivationConfig {
    fn default() -> Self {
        Self {
            edges_per_step: 3,
            outer_min: 0.5,
            outer_max: 1.5,
            pieces_min: 5,
            pieces_max: 15,
            weight_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainActivation {
    pub signal: GraphSignal,
    /// Outer interval endpoints `t_0 = 0 < t_1 < … < t_M`, with `t_M ≥ horizon`.
    pub outer: Vec<f64>,
}

/// Random sparse activation of the chain links `a_{i,i+1}`: random outer
/// intervals, each cut into a random number of random pieces; on every
/// piece `edges_per_step` links (drawn with replacement) carry weights in
/// `[δ, weight_factor·δ]` and all other links are zero.
pub fn chain_random_activation(
    n: usize,
    delta: f64,
    horizon: f64,
    seed: u64,
    config: &ChainActivationConfig,
) -> Result<ChainActivation> {
    if n < 2 {
        return Err(Error::TooFewAgents(n));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::param("delta", delta, "must be finite and > 0"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::param("horizon", horizon, "must be finite and > 0"));
    }
    if !(config.outer_min > 0.0 && config.outer_max >= config.outer_min) {
        return Err(Error::param(
            "outer_min",
            config.outer_min,
            "need 0 < outer_min <= outer_max",
        ));
    }
    if config.pieces_min == 0 || config.pieces_max < config.pieces_min {
        return Err(Error::Config("need 1 <= pieces_min <= pieces_max".into()));
    }
    if config.edges_per_step == 0 {
        return Err(Error::Config("edges_per_step must be >= 1".into()));
    }
    if !(config.weight_factor >= 1.0) {
        return Err(Error::param("weight_factor", config.weight_factor, "must be >= 1"));
    }
    let mut rng = rng::stream(seed, "chain-activation");
    let mut outer = vec![0.0];
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut t = 0.0;
    while t < horizon {
        let len = rng.random_range(config.outer_min..=config.outer_max);
        let pieces = rng.random_range(config.pieces_min..=config.pieces_max);
        let mut cuts: Vec<f64> = (1..pieces).map(|_| rng.random::<f64>() * len).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut starts = vec![0.0];
        starts.extend(cuts.into_iter().filter(|&c| c > 0.0));
        for s in starts {
            let mut g = WeightedDigraph::empty(n);
            for _ in 0..config.edges_per_step {
                let p = rng.random_range(0..n - 1);
                let w = rng.random_range(delta..=config.weight_factor * delta);
                g.set(p, p + 1, w)?;
            }
            if !values.is_empty() {
                times.push(t + s);
            }
            values.push(g);
        }
        t += len;
        outer.push(t);
    }
    Ok(ChainActivation {
        signal: SwitchingSignal::new(times, values)?,
        outer,
    })
}

/// Periodic signal with `∫_t^{t+T} a_ik ≥ δ` for every `i ≠ k` and every
/// `t ≥ 0`: each half period `T/2` is cut into `n − 1` slots, slot `s`
/// activating the single link into the centre with weight `1.05 δ / slot`,
/// so any window of length `T` holds a full half period. Optional distractor links with random weights are
/// added on each slot.
pub fn moreau_signal(
    n: usize,
    center: usize,
    delta: f64,
    period: f64,
    horizon: f64,
    distractors: usize,
    seed: u64,
) -> Result<GraphSignal> {
    if n < 2 {
        return Err(Error::TooFewAgents(n));
    }
    if center >= n {
        return Err(Error::Config(format!("center {center} out of range for n = {n}")));
    }
    if !(delta > 0.0 && period > 0.0 && horizon > 0.0) {
        return Err(Error::param("delta", delta, "delta, period and horizon must be > 0"));
    }
    let mut rng = rng::stream(seed, "moreau");
    let slots = n - 1;
    let slot = period / (2 * slots) as f64;
    let weight = 1.05 * delta / slot;
    let others: Vec<usize> = (0..n).filter(|&i| i != center).collect();
    let mut times = Vec::new();
    let mut values = Vec::new();
    let count = (horizon / slot).ceil() as usize + 1;
    for k in 0..count {
        let mut g = WeightedDigraph::empty(n);
        g.set(others[k % slots], center, weight)?;
        for _ in 0..distractors {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j && j != center {
                g.set(i, j, rng.random_range(0.0..delta))?;
            }
        }
        if k > 0 {
            times.push(k as f64 * slot);
        }
        values.push(g);
    }
    SwitchingSignal::new(times, values)
}

/// Sparse interval-edge trace: `t_start,t_end,i,j,weight` with 1-based
/// agent indices, one row per active link per piece inside `[t0, t1]`.
pub fn signal_to_trace(signal: &GraphSignal, t0: f64, t1: f64) -> String {
    let mut out = String::from("t_start,t_end,i,j,weight\n");
    for (a, b, g) in signal.pieces(t0, t1) {
        for (i, j, w) in g.links(0.0) {
            let _ = writeln!(out, "{a:.16e},{b:.16e},{},{},{w:.16e}", i + 1, j + 1);
        }
    }
    out
}

/// Inverse of [`signal_to_trace`]. Gaps between pieces become empty graphs.
pub fn signal_from_trace(n: usize, text: &str) -> Result<GraphSignal> {
    let mut rows: Vec<(f64, f64, usize, usize, f64)> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("t_start") {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: k + 1, message };
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 5 {
            return Err(parse_err(format!("expected 5 fields, found {}", cells.len())));
        }
        let f = |s: &str| s.parse::<f64>().map_err(|e| parse_err(e.to_string()));
        let u = |s: &str| {
            s.parse::<usize>()
                .ok()
                .filter(|&v| v >= 1 && v <= n)
                .ok_or_else(|| parse_err(format!("agent index `{s}` not in 1..={n}")))
        };
        rows.push((
            f(cells[0])?,
            f(cells[1])?,
            u(cells[2])? - 1,
            u(cells[3])? - 1,
            f(cells[4])?,
        ));
    }
    let mut bounds: Vec<f64> = rows.iter().flat_map(|r| [r.0, r.1]).collect();
    bounds.sort_by(f64::total_cmp);
    bounds.dedup();
    if bounds.len() < 2 {
        return Ok(SwitchingSignal::constant(WeightedDigraph::empty(n)));
    }
    let mut values = vec![WeightedDigraph::empty(n); bounds.len() + 1];
    for &(a, b, i, j, w) in &rows {
        let lo = bounds.partition_point(|&s| s < a);
        let hi = bounds.partition_point(|&s| s < b);
        for v in &mut values[lo + 1..=hi] {
            v.set(i, j, w)?;
        }
    }
    SwitchingSignal::new(bounds, values)
}

/// How the accumulated graph is formed for each checkpoint interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LowerBoundMode {
    /// Along the realised trajectory, on its own time grid.
    Trajectory,
    /// Frozen at each sample state on a uniform time grid with `steps`
    /// points per interval, refined at switching times. The verdict is
    /// labelled sampled: it covers only the states provided.
    Sampled { states: Vec<StateVector>, steps: usize },
}

/// The graph `B` in `∫ G^{A} ≥ G^{B}`.
#[derive(Clone)]
pub enum LowerBound {
    Constant(WeightedDigraph),
    PerState(Arc<dyn Fn(&StateVector) -> WeightedDigraph + Send + Sync>),
}

impl std::fmt::Debug for LowerBound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LowerBound::Constant(g) => f.debug_tuple("Constant").field(g).finish(),
            LowerBound::PerState(_) => f.write_str("PerState(..)"),
        }
    }
}

impl LowerBound {
    pub fn at(&self, x: &StateVector) -> WeightedDigraph {
        match self {
            LowerBound::Constant(g) => g.clone(),
            LowerBound::PerState(f) => f(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalMargin {
    pub t_start: f64,
    pub t_end: f64,
    /// `min (∫a_ij − b_ij)` over links of `B`; `+∞` if `B` has none.
    #[serde(serialize_with = "crate::output::lossless_float")]
    pub margin: f64,
    /// Link attaining the margin, 0-based `(i, j)`.
    pub binding: Option<(usize, usize)>,
    pub pass: bool,
    pub b_certificate: Option<ConnectivityCertificate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub mode: String,
    pub pass: bool,
    pub intervals: Vec<IntervalMargin>,
    #[serde(serialize_with = "crate::output::lossless_float")]
    pub worst_margin: f64,
    pub worst_interval: Option<usize>,
    /// Every interval's `B` admits a spanning-tree certificate.
    pub b_qsc: bool,
}

/// Relative slack allowed when comparing accumulated weights against `B`.
pub const LOWER_BOUND_TOL: f64 = 1e-12;

/// Checks `∫_{t_k}^{t_{k+1}} G^{A(t, x(t))} dt ≥ G^{B(x(t_k))}` for every
/// checkpoint interval.
pub fn verify_accumulated_lower_bound(
    model: &SystemModel,
    traj: &Trajectory,
    checkpoints: &CheckpointSequence,
    bound: &LowerBound,
    mode: &LowerBoundMode,
) -> Result<LowerBoundReport> {
    let times = traj.times();
    let (first, last) = (times[0], *times.last().unwrap_or(&times[0]));
    let tol_t = 1e-9 * (1.0 + last.abs());
    let ints: Vec<(f64, f64)> = checkpoints.intervals().collect();
    if let Some(&(a, b)) = ints.iter().find(|(a, b)| *a < first - tol_t || *b > last + tol_t) {
        return Err(Error::CoverageGap { t1: a, t2: b });
    }
    let intervals = ints
        .par_iter()
        .map(|&(a, b)| -> Result<IntervalMargin> {
            let anchor = traj.state_at_or_before(a);
            let bg = bound.at(&anchor);
            let accumulated: Vec<WeightedDigraph> = match mode {
                LowerBoundMode::Trajectory => vec![trajectory_accumulated(model, traj, a, b)?],
                LowerBoundMode::Sampled { states, steps } => {
                    let mut out = Vec::with_capacity(states.len() + 1);
                    for x in states.iter().chain(std::iter::once(&anchor)) {
                        out.push(model.accumulate_frozen(x, a, b, *steps)?);
                    }
                    out
                }
            };
            let mut margin = f64::INFINITY;
            let mut binding = None;
            for acc in &accumulated {
                for (i, j, bij) in bg.links(0.0) {
                    let m = acc.weight(i, j) - bij;
                    if m < margin {
                        margin = m;
                        binding = Some((i, j));
                    }
                }
            }
            let scale = bg.links(0.0).iter().map(|l| l.2).fold(1.0, f64::max);
            Ok(IntervalMargin {
                t_start: a,
                t_end: b,
                margin,
                binding,
                pass: margin >= -LOWER_BOUND_TOL * scale,
                b_certificate: is_qsc(&bg, 0.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let worst_interval = intervals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.margin.total_cmp(&b.1.margin))
        .map(|(k, _)| k);
    Ok(LowerBoundReport {
        mode: match mode {
            LowerBoundMode::Trajectory => "trajectory".into(),
            LowerBoundMode::Sampled { .. } => "sampled".into(),
        },
        pass: intervals.iter().all(|m| m.pass),
        worst_margin: worst_interval.map_or(f64::INFINITY, |k| intervals[k].margin),
        worst_interval,
        b_qsc: intervals.iter().all(|m| m.b_certificate.is_some()),
        intervals,
    })
}

/// Left-rectangle accumulation of `G^{A(t_i, x_i)}` over the trajectory's
/// own grid points in `[a, b]`.
fn trajectory_accumulated(model: &SystemModel, traj: &Trajectory, a: f64, b: f64) -> Result<WeightedDigraph> {
    let times = traj.times();
    let lo = times.partition_point(|&t| t < a).min(times.len() - 1);
    let hi = times.partition_point(|&t| t <= b);
    let mut lo = lo;
    if times[lo] > a && lo > 0 {
        lo -= 1;
    }
    let mut samples = Vec::with_capacity(hi - lo + 1);
    for (&t, x) in times[lo..hi].iter().zip(&traj.states()[lo..hi]) {
        samples.push((t, digraph_of_metzler(&model.evaluate(t, x)?)));
    }
    if let Some(&(t, _)) = samples.last() {
        if t < b {
            let g = samples
                .last()
                .map(|s| s.1.clone())
                .unwrap_or_else(|| WeightedDigraph::empty(model.n()));
            samples.push((b, g));
        }
    }
    accumulate(&samples, a, b, Quadrature::LeftRectangle)
}
