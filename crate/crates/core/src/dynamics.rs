//! Consensus models `ẋ = A(t, x) x`, their integration, and the Euler
//! transition factors `P = ∏ (I + h A(t_i, x_i))` over checkpoint intervals.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{digraph_of_metzler, MetzlerMatrix, WeightedDigraph};
use crate::hilbert::{distance_to_consensus, minimal_gamma_slice, StateVector};
use crate::linalg::Matrix;
use crate::topology::{GraphSignal, ScalarSignal, SwitchingSignal};

/// What to do when a model evaluation produces a negative off-diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractMode {
    #[default]
    Strict,
    /// Clamp negatives to zero and log. Exploratory use only.
    Permissive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Euler,
    Rk4,
}

/// Which one-sided value of a piecewise-constant signal to read at `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Right,
    Left,
}

/// `φ(d)/d` for the animal-group interaction kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Kernel {
    /// `φ(d) = gain·d`
    Proportional { gain: f64 },
    /// `φ(d) = gain·d / (1 + d/scale)`
    Saturating { gain: f64, scale: f64 },
}

impl Kernel {
    fn ratio(&self, d: f64) -> f64 {
        match *self {
            Kernel::Proportional { gain } => gain,
            Kernel::Saturating { gain, scale } => gain / (1.0 + d.abs() / scale),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelKind {
    Ltv {
        signal: SwitchingSignal<MetzlerMatrix>,
    },
    /// `a_ij = c_ij(t) sin(x_j − x_i)/(x_j − x_i)`
    Kuramoto {
        coupling: GraphSignal,
    },
    /// Velocity block: `a_ij = (λ/n) c_ij(t) K / (1 + (v_i − v_j)²)^β`
    CuckerSmaleVelocity {
        coupling: GraphSignal,
        lambda: f64,
        k: f64,
        beta: f64,
    },
    /// `a_ij = 1` when `|x_i − x_j| ≤ ε(t)`
    HegselmannKrause {
        radius: ScalarSignal,
    },
    /// Attraction `c^a_ij φ_a/|d|` minus repulsion `c^r_ij φ_r/|d|`.
    AnimalGroup {
        attraction: GraphSignal,
        repulsion: GraphSignal,
        phi_a: Kernel,
        phi_r: Kernel,
    },
    /// `A(t, x) = A_{σ(t)}(t, x)`
    CustomSwitching {
        family: Vec<SystemModel>,
        sigma: SwitchingSignal<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    n: usize,
    kind: ModelKind,
    #[serde(default)]
    mode: ContractMode,
}

fn check_graph_signal(n: usize, s: &GraphSignal) -> Result<()> {
    for g in s.values() {
        if g.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: g.n(),
            });
        }
    }
    Ok(())
}

fn graph_signal_n(s: &GraphSignal) -> usize {
    s.values()[0].n()
}

impl SystemModel {
    fn build(n: usize, kind: ModelKind) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewAgents(n));
        }
        Ok(Self {
            n,
            kind,
            mode: ContractMode::Strict,
        })
    }

    pub fn ltv(signal: SwitchingSignal<MetzlerMatrix>) -> Result<Self> {
        let n = signal.values()[0].n();
        if let Some(m) = signal.values().iter().find(|m| m.n() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: m.n(),
            });
        }
        Self::build(n, ModelKind::Ltv { signal })
    }

    pub fn ltv_constant(a: MetzlerMatrix) -> Result<Self> {
        Self::ltv(SwitchingSignal::constant(a))
    }

    /// LTV model `A(t) = G(t) − diag(G(t)𝟙)`.
    pub fn ltv_from_graphs(signal: &GraphSignal) -> Result<Self> {
        Self::ltv(signal.map(MetzlerMatrix::from_digraph))
    }

    pub fn kuramoto(coupling: GraphSignal) -> Result<Self> {
        let n = graph_signal_n(&coupling);
        check_graph_signal(n, &coupling)?;
        Self::build(n, ModelKind::Kuramoto { coupling })
    }

    pub fn cucker_smale_velocity(coupling: GraphSignal, lambda: f64, k: f64, beta: f64) -> Result<Self> {
        let n = graph_signal_n(&coupling);
        check_graph_signal(n, &coupling)?;
        if !(lambda > 0.0) {
            return Err(Error::param("lambda", lambda, "must be > 0"));
        }
        if !(k > 0.0) {
            return Err(Error::param("k", k, "must be > 0"));
        }
        if !(beta >= 0.0) {
            return Err(Error::param("beta", beta, "must be >= 0"));
        }
        Self::build(
            n,
            ModelKind::CuckerSmaleVelocity {
                coupling,
                lambda,
                k,
                beta,
            },
        )
    }

    pub fn hegselmann_krause(n: usize, radius: ScalarSignal) -> Result<Self> {
        Self::build(n, ModelKind::HegselmannKrause { radius })
    }

    pub fn animal_group(attraction: GraphSignal, repulsion: GraphSignal, phi_a: Kernel, phi_r: Kernel) -> Result<Self> {
        let n = graph_signal_n(&attraction);
        check_graph_signal(n, &attraction)?;
        check_graph_signal(n, &repulsion)?;
        Self::build(
            n,
            ModelKind::AnimalGroup {
                attraction,
                repulsion,
                phi_a,
                phi_r,
            },
        )
    }

    pub fn custom_switching(family: Vec<SystemModel>, sigma: SwitchingSignal<usize>) -> Result<Self> {
        let first = family
            .first()
            .ok_or_else(|| Error::Config("switching family is empty".into()))?;
        let n = first.n;
        if let Some(m) = family.iter().find(|m| m.n != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: m.n,
            });
        }
        if let Some(&p) = sigma.values().iter().find(|&&p| p >= family.len()) {
            return Err(Error::Config(format!(
                "switching index {p} out of range for a family of {}",
                family.len()
            )));
        }
        Self::build(n, ModelKind::CustomSwitching { family, sigma })
    }

    pub fn with_mode(mut self, mode: ContractMode) -> Self {
        self.mode = mode;
        if let ModelKind::CustomSwitching { family, .. } = &mut self.kind {
            for m in family {
                m.mode = mode;
            }
        }
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn mode(&self) -> ContractMode {
        self.mode
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ModelKind::Ltv { .. } => "ltv",
            ModelKind::Kuramoto { .. } => "kuramoto",
            ModelKind::CuckerSmaleVelocity { .. } => "cucker_smale_velocity",
            ModelKind::HegselmannKrause { .. } => "hegselmann_krause",
            ModelKind::AnimalGroup { .. } => "animal_group",
            ModelKind::CustomSwitching { .. } => "custom_switching",
        }
    }

    /// Whether evaluations are guaranteed Metzler (up to contract checks).
    pub fn is_certifiable(&self) -> bool {
        match &self.kind {
            ModelKind::AnimalGroup { repulsion, .. } => repulsion.values().iter().all(|g| g.is_empty()),
            ModelKind::CustomSwitching { family, .. } => family.iter().all(|m| m.is_certifiable()),
            _ => true,
        }
    }

    /// Switching times of every piecewise-constant ingredient in `(t0, t1)`.
    pub fn switch_times(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut out: Vec<f64> = match &self.kind {
            ModelKind::Ltv { signal } => signal.switches_in(t0, t1).collect(),
            ModelKind::Kuramoto { coupling } | ModelKind::CuckerSmaleVelocity { coupling, .. } => {
                coupling.switches_in(t0, t1).collect()
            }
            ModelKind::HegselmannKrause { radius } => radius.switches_in(t0, t1),
            ModelKind::AnimalGroup {
                attraction, repulsion, ..
            } => attraction
                .switches_in(t0, t1)
                .chain(repulsion.switches_in(t0, t1))
                .collect(),
            ModelKind::CustomSwitching { family, sigma } => {
                let mut v: Vec<f64> = sigma.switches_in(t0, t1).collect();
                for m in family {
                    v.extend(m.switch_times(t0, t1));
                }
                v
            }
        };
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Raw off-diagonal weights `a_ij(t, x)`; may be negative for models
    /// outside the Metzler class.
    fn raw_weights(&self, t: f64, side: Side, x: &[f64]) -> Result<Matrix> {
        let n = self.n;
        let graph_at = |s: &GraphSignal| -> WeightedDigraph {
            match side {
                Side::Right => s.at(t).clone(),
                Side::Left => s.at_left(t).clone(),
            }
        };
        let mut w = Matrix::zeros(n);
        match &self.kind {
            ModelKind::Ltv { signal } => {
                let a = match side {
                    Side::Right => signal.at(t),
                    Side::Left => signal.at_left(t),
                };
                for i in 0..n {
                    for j in (0..n).filter(|&j| j != i) {
                        w[(i, j)] = a.matrix()[(i, j)];
                    }
                }
            }
            ModelKind::Kuramoto { coupling } => {
                let g = graph_at(coupling);
                for (i, j, c) in g.links(0.0) {
                    let d = x[j] - x[i];
                    if d.abs() >= std::f64::consts::PI && self.mode == ContractMode::Strict {
                        return Err(Error::ContractViolation {
                            t,
                            i,
                            j,
                            value: c * sinc(d),
                        });
                    }
                    w[(i, j)] = c * sinc(d);
                }
            }
            ModelKind::CuckerSmaleVelocity {
                coupling,
                lambda,
                k,
                beta,
            } => {
                let g = graph_at(coupling);
                let gain = lambda / n as f64;
                for (i, j, c) in g.links(0.0) {
                    let dv = x[i] - x[j];
                    w[(i, j)] = gain * c * k / (1.0 + dv * dv).powf(*beta);
                }
            }
            ModelKind::HegselmannKrause { radius } => {
                let eps = match side {
                    Side::Right => radius.value(t),
                    Side::Left => radius.value_left(t),
                };
                for i in 0..n {
                    for j in (0..n).filter(|&j| j != i) {
                        if (x[i] - x[j]).abs() <= eps {
                            w[(i, j)] = 1.0;
                        }
                    }
                }
            }
            ModelKind::AnimalGroup {
                attraction,
                repulsion,
                phi_a,
                phi_r,
            } => {
                let (ga, gr) = (graph_at(attraction), graph_at(repulsion));
                for i in 0..n {
                    for j in (0..n).filter(|&j| j != i) {
                        let d = (x[i] - x[j]).abs();
                        w[(i, j)] = ga.weight(i, j) * phi_a.ratio(d) - gr.weight(i, j) * phi_r.ratio(d);
                    }
                }
            }
            ModelKind::CustomSwitching { family, sigma } => {
                let p = match side {
                    Side::Right => *sigma.at(t),
                    Side::Left => *sigma.at_left(t),
                };
                return family[p].raw_weights(t, side, x);
            }
        }
        Ok(w)
    }

    /// `A(t, x)` with the diagonal completing zero row sums. In strict mode
    /// a negative off-diagonal of a certifiable model is an error; in
    /// permissive mode it is clamped. Non-certifiable kinds pass through.
    pub fn interaction(&self, t: f64, side: Side, x: &[f64]) -> Result<Matrix> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: x.len(),
            });
        }
        let mut a = self.raw_weights(t, side, x)?;
        let certifiable = self.is_certifiable();
        let n = self.n;
        for i in 0..n {
            let mut sum = 0.0;
            for j in (0..n).filter(|&j| j != i) {
                let v = a[(i, j)];
                if !v.is_finite() {
                    return Err(Error::ContractViolation { t, i, j, value: v });
                }
                if v < 0.0 && certifiable {
                    match self.mode {
                        ContractMode::Strict => return Err(Error::ContractViolation { t, i, j, value: v }),
                        ContractMode::Permissive => {
                            warn!("clamping a[{i}][{j}] = {v} to 0 at t = {t}");
                            a[(i, j)] = 0.0;
                        }
                    }
                }
                sum += a[(i, j)];
            }
            a[(i, i)] = -sum;
        }
        Ok(a)
    }

    /// `A(t, x)` as a validated Metzler matrix.
    pub fn evaluate(&self, t: f64, x: &StateVector) -> Result<MetzlerMatrix> {
        if !self.is_certifiable() {
            return Err(Error::NotCertifiable(self.kind_name()));
        }
        MetzlerMatrix::new(self.interaction(t, Side::Right, x.as_slice())?)
    }

    /// `∫_a^b G^{A(t, x)} dt` with `x` frozen, left rectangles on a grid of
    /// about `steps` points refined at switching times.
    pub fn accumulate_frozen(&self, x: &StateVector, a: f64, b: f64, steps: usize) -> Result<WeightedDigraph> {
        let grid = time_grid(a, b, (b - a) / steps.max(1) as f64, &self.switch_times(a, b));
        let mut acc = WeightedDigraph::empty(self.n);
        for w in grid.windows(2) {
            let g = digraph_of_metzler(&self.evaluate(w[0], x)?);
            acc.add_scaled(&g, w[1] - w[0])?;
        }
        Ok(acc)
    }
}

/// `sin(d)/d` with its removable singularity; series below `1e-4`.
pub fn sinc(d: f64) -> f64 {
    if d.abs() < 1e-4 {
        let d2 = d * d;
        1.0 - d2 / 6.0 + d2 * d2 / 120.0
    } else {
        d.sin() / d
    }
}

pub fn evaluate_model(model: &SystemModel, t: f64, x: &StateVector) -> Result<MetzlerMatrix> {
    model.evaluate(t, x)
}

fn max_abs_diag(a: &Matrix) -> f64 {
    (0..a.n()).map(|i| a[(i, i)].abs()).fold(0.0, f64::max)
}

/// `F = I + hA`, formed entrywise so that every consumer multiplies by the
/// same matrix.
fn euler_matrix(a: &Matrix, h: f64) -> Matrix {
    let n = a.n();
    let mut f = a.scale(h);
    for i in 0..n {
        f[(i, i)] = 1.0 + h * a[(i, i)];
    }
    f
}

fn check_euler_step(model: &SystemModel, t: f64, a: &Matrix, h: f64) -> Result<()> {
    let lambda = max_abs_diag(a);
    if h * lambda > 1.0 {
        match model.mode {
            ContractMode::Strict => return Err(Error::StepTooLarge { h, lambda }),
            ContractMode::Permissive => warn!("euler step at t = {t}: h*lambda = {} > 1", h * lambda),
        }
    }
    Ok(())
}

fn euler_raw(model: &SystemModel, t: f64, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let a = model.interaction(t, Side::Right, x)?;
    check_euler_step(model, t, &a, h)?;
    Ok(euler_matrix(&a, h).mul_vec(x))
}

fn rk4_raw(model: &SystemModel, t: f64, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let dx = rk4_increment(model, t, x, h)?;
    Ok(x.iter().zip(&dx).map(|(a, d)| a + d).collect())
}

fn rk4_increment(model: &SystemModel, t: f64, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let f = |t: f64, side: Side, y: &[f64]| -> Result<Vec<f64>> { Ok(model.interaction(t, side, y)?.mul_vec(y)) };
    let axpy = |y: &[f64], s: f64, k: &[f64]| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    let k1 = f(t, Side::Right, x)?;
    let k2 = f(t + 0.5 * h, Side::Right, &axpy(x, 0.5 * h, &k1))?;
    let k3 = f(t + 0.5 * h, Side::Right, &axpy(x, 0.5 * h, &k2))?;
    let k4 = f(t + h, Side::Left, &axpy(x, h, &k3))?;
    Ok((0..x.len())
        .map(|i| h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn step_raw(model: &SystemModel, t: f64, x: &[f64], h: f64, scheme: Scheme) -> Result<Vec<f64>> {
    match scheme {
        Scheme::Euler => euler_raw(model, t, x, h),
        Scheme::Rk4 => rk4_raw(model, t, x, h),
    }
}

pub fn step(model: &SystemModel, t: f64, x: &StateVector, h: f64, scheme: Scheme) -> Result<StateVector> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::param("h", h, "step size must be finite and > 0"));
    }
    StateVector::new(step_raw(model, t, x.as_slice(), h, scheme)?)
}

/// Integration grid on `[t0, t_end]`: every anchor inside the interval is a
/// grid point and each segment between anchors is cut into equal steps no
/// longer than `h`.
pub fn time_grid(t0: f64, t_end: f64, h: f64, anchors: &[f64]) -> Vec<f64> {
    let mut cuts: Vec<f64> = anchors.iter().copied().filter(|&s| s > t0 && s < t_end).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.push(t_end);
    let mut grid = vec![t0];
    let mut a = t0;
    for b in cuts {
        let steps = (((b - a) / h) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let hs = (b - a) / steps as f64;
        for k in 1..steps {
            grid.push(a + k as f64 * hs);
        }
        grid.push(b);
        a = b;
    }
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `d(x + α𝟙, 𝟙)`
    pub d_hilbert: f64,
    pub spread: f64,
    /// `minimal_gamma(x + α𝟙)`, NaN outside the orthant.
    pub gamma: f64,
}

impl Diagnostics {
    fn of(x: &[f64], shift: f64) -> Self {
        let y: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let sv = StateVector::new(y.clone()).expect("trajectory states have n >= 2");
        Diagnostics {
            d_hilbert: distance_to_consensus(&sv).value(),
            spread: sv.spread(),
            gamma: minimal_gamma_slice(&y).map_or(f64::NAN, |g| g.value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<StateVector>,
    diagnostics: Vec<Diagnostics>,
    /// Diagnostics are taken on `x + shift·𝟙`.
    shift: f64,
}

impl Trajectory {
    pub fn from_parts(times: Vec<f64>, states: Vec<StateVector>, shift: f64) -> Result<Self> {
        if times.len() != states.len() || times.is_empty() {
            return Err(Error::GridMismatch(format!(
                "{} times for {} states",
                times.len(),
                states.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::GridMismatch("trajectory times must increase strictly".into()));
        }
        let n = states[0].n();
        if let Some(s) = states.iter().find(|s| s.n() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: s.n(),
            });
        }
        let diagnostics = states.iter().map(|s| Diagnostics::of(s.as_slice(), shift)).collect();
        Ok(Self {
            times,
            states,
            diagnostics,
            shift,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn diagnostics(&self) -> &[Diagnostics] {
        &self.diagnostics
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn n(&self) -> usize {
        self.states[0].n()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("trajectory is nonempty")
    }

    /// State at the last grid time `≤ t` (the first state if `t` precedes
    /// the trajectory).
    pub fn state_at_or_before(&self, t: f64) -> StateVector {
        let k = self.times.partition_point(|&s| s <= t);
        self.states[k.saturating_sub(1)].clone()
    }

    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = self.times.partition_point(|&s| s < t);
        (self.times.get(k) == Some(&t)).then_some(k)
    }

    /// Every state multiplied by `c` (the shift scales along).
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_parts(
            self.times.clone(),
            self.states.iter().map(|s| s.scaled(c)).collect(),
            self.shift * c,
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Extra grid anchors, typically checkpoint times.
    pub anchors: Vec<f64>,
    /// Positivity shift `α` used for the diagnostics.
    pub shift: f64,
}

pub fn simulate(
    model: &SystemModel,
    x0: &StateVector,
    t0: f64,
    t_end: f64,
    h: f64,
    scheme: Scheme,
) -> Result<Trajectory> {
    simulate_with(model, x0, t0, t_end, h, scheme, &SimOptions::default())
}

pub fn simulate_with(
    model: &SystemModel,
    x0: &StateVector,
    t0: f64,
    t_end: f64,
    h: f64,
    scheme: Scheme,
    options: &SimOptions,
) -> Result<Trajectory> {
    if x0.n() != model.n {
        return Err(Error::DimensionMismatch {
            expected: model.n,
            actual: x0.n(),
        });
    }
    if !(t_end > t0) {
        return Err(Error::param("t_end", t_end, "must exceed t0"));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::param("h", h, "step size must be finite and > 0"));
    }
    let mut anchors = model.switch_times(t0, t_end);
    anchors.extend_from_slice(&options.anchors);
    let grid = time_grid(t0, t_end, h, &anchors);
    let mut states = Vec::with_capacity(grid.len());
    let mut x = x0.as_slice().to_vec();
    states.push(x0.clone());
    // Euler stays a plain product so transition factors reproduce it bitwise.
    // RK4 carries a Kahan compensation term; otherwise rounding in `x + dx`
    // swamps its truncation error at small h.
    let mut carry = vec![0.0; x.len()];
    for w in grid.windows(2) {
        let h = w[1] - w[0];
        match scheme {
            Scheme::Euler => x = euler_raw(model, w[0], &x, h)?,
            Scheme::Rk4 => {
                let dx = rk4_increment(model, w[0], &x, h)?;
                for ((xi, ci), di) in x.iter_mut().zip(&mut carry).zip(dx) {
                    let y = di - *ci;
                    let sum = *xi + y;
                    *ci = (sum - *xi) - y;
                    *xi = sum;
                }
            }
        }
        states.push(StateVector::new(x.clone())?);
    }
    Trajectory::from_parts(grid, states, options.shift)
}

/// Ordered Euler factors over one checkpoint interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionFactor {
    pub interval: (f64, f64),
    pub anchor_state: StateVector,
    pub grid: Vec<f64>,
    factors: Vec<Matrix>,
    /// `F_{N−1} ⋯ F_0`
    pub product: Matrix,
    /// `1.01 × max |A_ii|` over the grid.
    pub lambda: f64,
    /// `Σ h_i A_i[j][j]`
    pub diag_integral: Vec<f64>,
    /// `Σ h_i G^{A_i}`
    pub accumulated: WeightedDigraph,
    /// States along the grid, starting at the anchor.
    pub states: Vec<StateVector>,
}

impl TransitionFactor {
    /// Applies the factors one by one, in the same order and arithmetic as
    /// the Euler integrator.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.factors.iter().fold(x.to_vec(), |y, f| f.mul_vec(&y))
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn row_sum_error(&self) -> f64 {
        self.product
            .row_sums()
            .iter()
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.product.min_entry()
    }

    pub fn end_state(&self) -> &StateVector {
        self.states.last().expect("factor has at least the anchor state")
    }
}

/// Euler transition factor on an explicit grid, starting from `x`.
pub fn factorize_on_grid(model: &SystemModel, grid: &[f64], x: &StateVector) -> Result<TransitionFactor> {
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::GridMismatch("grid needs two or more increasing times".into()));
    }
    let n = model.n;
    let mut factors = Vec::with_capacity(grid.len() - 1);
    let mut states = vec![x.clone()];
    let mut diag_integral = vec![0.0; n];
    let mut accumulated = WeightedDigraph::empty(n);
    let mut max_diag: f64 = 0.0;
    let mut y = x.as_slice().to_vec();
    for w in grid.windows(2) {
        let h = w[1] - w[0];
        let a = MetzlerMatrix::new(model.interaction(w[0], Side::Right, &y)?)?;
        let am = a.matrix();
        max_diag = max_diag.max(max_abs_diag(am));
        for (j, d) in diag_integral.iter_mut().enumerate() {
            *d += h * am[(j, j)];
        }
        accumulated.add_scaled(&digraph_of_metzler(&a), h)?;
        let f = euler_matrix(am, h);
        y = f.mul_vec(&y);
        states.push(StateVector::new(y.clone())?);
        factors.push(f);
    }
    let lambda = 1.01 * max_diag;
    if let Some(h) = grid.windows(2).map(|w| w[1] - w[0]).find(|h| h * lambda >= 1.0) {
        return Err(Error::StepTooLarge { h, lambda });
    }
    let product = factors.iter().fold(Matrix::identity(n), |p, f| f.matmul(&p));
    Ok(TransitionFactor {
        interval: (grid[0], grid[grid.len() - 1]),
        anchor_state: x.clone(),
        grid: grid.to_vec(),
        factors,
        product,
        lambda,
        diag_integral,
        accumulated,
        states,
    })
}

/// Euler transition factor over `[t_k, t_k1]` with about `N` uniform steps
/// (refined at switching times).
pub fn factorize_transition(
    model: &SystemModel,
    t_k: f64,
    t_k1: f64,
    x: &StateVector,
    steps: usize,
) -> Result<TransitionFactor> {
    if !(t_k1 > t_k) {
        return Err(Error::param("t_k1", t_k1, "must exceed t_k"));
    }
    if steps == 0 {
        return Err(Error::param("N", 0.0, "needs at least one step"));
    }
    let grid = time_grid(t_k, t_k1, (t_k1 - t_k) / steps as f64, &model.switch_times(t_k, t_k1));
    factorize_on_grid(model, &grid, x)
}

/// Outcome of comparing `P` against `ρ (I + ∫Ā)`, `Ā = A + λI`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCheck {
    pub holds: bool,
    /// `min_ij (P_ij − ρ M_ij)`
    #[serde(serialize_with = "crate::output::lossless_float")]
    pub worst_slack: f64,
    pub worst_entry: (usize, usize),
    /// `∏ (1 − h_i λ)`, the discrete counterpart of `e^{−λT}`.
    pub rho: f64,
    pub exp_factor: f64,
    /// Same comparison with `e^{−λT}` in place of `ρ`; reported only.
    #[serde(serialize_with = "crate::output::lossless_float")]
    pub exp_form_slack: f64,
}

/// Slack allowed in the lower-bound comparison.
pub const TRANSITION_SLACK: f64 = 1e-6;

/// Checks `P ≥ ρ (I + ∫Ā)` elementwise, with `∫Ā` assembled from the
/// accumulated graph, the diagonal integral and `λT`.
pub fn lower_bound_transition(
    factor: &TransitionFactor,
    accumulated: &WeightedDigraph,
    lambda: f64,
) -> Result<LowerBoundCheck> {
    let n = factor.product.n();
    if accumulated.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: accumulated.n(),
        });
    }
    let scale = factor
        .accumulated
        .matrix()
        .as_slice()
        .iter()
        .fold(1.0f64, |m, v| m.max(v.abs()));
    if accumulated.matrix().max_abs_diff(factor.accumulated.matrix()) > 1e-9 * scale {
        return Err(Error::GridMismatch(
            "accumulated graph was not formed on the factor's grid".into(),
        ));
    }
    let max_diag = factor.lambda / 1.01;
    if !(lambda >= max_diag) {
        return Err(Error::Hypothesis(format!(
            "lambda = {lambda} is below the largest diagonal magnitude {max_diag}"
        )));
    }
    let mut rho = 1.0;
    for w in factor.grid.windows(2) {
        let hl = (w[1] - w[0]) * lambda;
        if hl >= 1.0 {
            return Err(Error::StepTooLarge { h: w[1] - w[0], lambda });
        }
        rho *= 1.0 - hl;
    }
    let span = factor.interval.1 - factor.interval.0;
    let exp_factor = (-lambda * span).exp();
    let mut worst_slack = f64::INFINITY;
    let mut worst_entry = (0, 0);
    let mut exp_form_slack = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            let m = if i == j {
                1.0 + lambda * span + factor.diag_integral[i]
            } else {
                accumulated.weight(i, j)
            };
            let p = factor.product[(i, j)];
            let s = p - rho * m;
            if s < worst_slack {
                worst_slack = s;
                worst_entry = (i, j);
            }
            exp_form_slack = exp_form_slack.min(p - exp_factor * m);
        }
    }
    Ok(LowerBoundCheck {
        holds: worst_slack >= -TRANSITION_SLACK,
        worst_slack,
        worst_entry,
        rho,
        exp_factor,
        exp_form_slack,
    })
}

const GAUSS_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// Maps a trajectory of `ẋ_i = a(t) x_i + b(t) + Σ a_ij (x_j − x_i)` to
/// `y = e^{∫a} x − (∫ e^{∫a} b) 𝟙`, integrals taken from the first time of
/// the trajectory.
pub fn internal_dynamics_transform(a: &ScalarSignal, b: &ScalarSignal, traj: &Trajectory) -> Result<Trajectory> {
    let times = traj.times();
    let t0 = times[0];
    let weight = |tau: f64| a.integral(t0, tau).exp() * b.value(tau);
    let mut j_acc = 0.0;
    let mut states = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        if k > 0 {
            let lo = times[k - 1];
            let mut cuts = a.switches_in(lo, t);
            cuts.extend(b.switches_in(lo, t));
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let mut s = lo;
            for e in cuts.into_iter().chain(std::iter::once(t)) {
                let (mid, half) = (0.5 * (s + e), 0.5 * (e - s));
                j_acc += half
                    * GAUSS_NODES
                        .iter()
                        .zip(GAUSS_WEIGHTS)
                        .map(|(x, w)| w * weight(mid + half * x))
                        .sum::<f64>();
                s = e;
            }
        }
        let g = a.integral(t0, t).exp();
        states.push(StateVector::new(
            traj.states()[k].as_slice().iter().map(|x| g * x - j_acc).collect(),
        )?);
    }
    Trajectory::from_parts(times.to_vec(), states, 0.0)
}

/// `α = margin + max(0, −min_i x_i)` and `x + α𝟙`.
pub fn shift_to_positive(x0: &StateVector, margin: f64) -> Result<(f64, StateVector)> {
    let alpha = shift_box_to_positive(x0.min(), margin)?;
    Ok((alpha, x0.shifted(alpha)))
}

/// `α` for a box whose smallest coordinate is `lower`.
pub fn shift_box_to_positive(lower: f64, margin: f64) -> Result<f64> {
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::param("margin", margin, "must be finite and > 0"));
    }
    Ok(margin + (-lower).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightedDigraph;

    fn sv(v: &[f64]) -> StateVector {
        StateVector::new(v.to_vec()).unwrap()
    }

    fn fig1() -> SystemModel {
        SystemModel::ltv_constant(MetzlerMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, -1.0]]).unwrap()).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let k = SystemModel::kuramoto(SwitchingSignal::constant(WeightedDigraph::complete(2, 0.7).unwrap())).unwrap();
        let a = k.evaluate(0.0, &sv(&[0.3, 0.3])).unwrap();
        assert_eq!(a.matrix()[(0, 1)], 0.7);

        let hk = SystemModel::hegselmann_krause(3, ScalarSignal::constant(0.5)).unwrap();
        let a = hk.evaluate(0.0, &sv(&[0.0, 0.5, 1.5])).unwrap();
        assert_eq!(a.matrix()[(0, 1)], 1.0);
        assert_eq!(a.matrix()[(1, 0)], 1.0);
        assert_eq!(a.matrix()[(1, 2)], 0.0);

        let m = fig1();
        for t in [0.0, 3.0, 100.0] {
            assert_eq!(
                m.evaluate(t, &sv(&[5.0, -1.0])).unwrap().matrix().rows(),
                vec![vec![0.0, 0.0], vec![1.0, -1.0]]
            );
        }
    }

    #[test]
    fn kuramoto_strict_and_permissive() {
        let g = SwitchingSignal::constant(WeightedDigraph::complete(2, 1.0).unwrap());
        let k = SystemModel::kuramoto(g).unwrap();
        let x = sv(&[0.0, 3.5]);
        assert!(matches!(
            k.evaluate(1.5, &x),
            Err(Error::ContractViolation { i: 0, j: 1, .. })
        ));
        let a = k.with_mode(ContractMode::Permissive).evaluate(1.5, &x).unwrap();
        assert_eq!(a.matrix()[(0, 1)], 0.0);
        assert!(sinc(1e-6) > 0.999_999_999_9);
        assert!((sinc(0.5) - 0.5f64.sin() / 0.5).abs() < 1e-16);
        assert!((sinc(9.9e-5) - 9.9e-5f64.sin() / 9.9e-5).abs() < 1e-15);
    }

    #[test]
    fn animal_group_with_repulsion_is_not_certifiable() {
        let n = 3;
        let att = SwitchingSignal::constant(WeightedDigraph::complete(n, 1.0).unwrap());
        let rep = SwitchingSignal::constant(WeightedDigraph::chain(n, 0.5).unwrap());
        let m = SystemModel::animal_group(
            att.clone(),
            rep,
            Kernel::Proportional { gain: 1.0 },
            Kernel::Saturating { gain: 1.0, scale: 1.0 },
        )
        .unwrap();
        assert!(matches!(
            m.evaluate(0.0, &sv(&[0.0, 1.0, 2.0])),
            Err(Error::NotCertifiable(_))
        ));
        let tr = simulate(&m, &sv(&[0.0, 1.0, 2.0]), 0.0, 1.0, 0.01, Scheme::Rk4).unwrap();
        assert_eq!(tr.len(), 101);
        let calm = SystemModel::animal_group(
            att,
            SwitchingSignal::constant(WeightedDigraph::empty(n)),
            Kernel::Proportional { gain: 1.0 },
            Kernel::Proportional { gain: 1.0 },
        )
        .unwrap();
        assert!(calm.evaluate(0.0, &sv(&[0.0, 1.0, 2.0])).is_ok());
    }

    #[test]
    fn euler_step_examples() {
        let m = fig1();
        let y = step(&m, 0.0, &sv(&[1.0, 0.0]), 0.1, Scheme::Euler).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 0.1]);
        let zero = SystemModel::ltv_constant(MetzlerMatrix::new(Matrix::zeros(3)).unwrap()).unwrap();
        let x = sv(&[1.0, -2.0, 3.0]);
        assert_eq!(step(&zero, 0.0, &x, 0.5, Scheme::Euler).unwrap(), x);
        assert!(matches!(
            step(&m, 0.0, &sv(&[1.0, -2.0]), 1.5, Scheme::Euler),
            Err(Error::StepTooLarge { .. })
        ));
        let c = sv(&[2.5, 2.5]);
        assert_eq!(step(&m, 0.0, &c, 0.3, Scheme::Rk4).unwrap(), c);
    }

    #[test]
    fn grid_respects_anchors() {
        let g = time_grid(0.0, 1.0, 0.3, &[0.5, 2.0, -1.0, 0.5]);
        assert!(g.contains(&0.5));
        assert_eq!(*g.first().unwrap(), 0.0);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(g.windows(2).all(|w| w[1] - w[0] <= 0.3 + 1e-15 && w[1] > w[0]));
        let g = time_grid(0.0, 1.0, 0.1, &[]);
        assert_eq!(g.len(), 11);
    }

    #[test]
    fn rk4_accumulation_is_compensated() {
        // 4096 steps; plain summation drifts by ~1e-14 here.
        let tr = simulate(&fig1(), &sv(&[1.0, 2.0]), 0.0, 1.0, 0.5f64.powi(12), Scheme::Rk4).unwrap();
        let err = (tr.final_state()[1] - (1.0 + (-1.0f64).exp())).abs();
        assert!(err <= 4.0 * f64::EPSILON, "{err:e}");
    }

    #[test]
    fn fig1_closed_form() {
        let tr = simulate(&fig1(), &sv(&[1.0, 2.0]), 0.0, 3.0, 1e-3, Scheme::Rk4).unwrap();
        for (t, x) in tr.times().iter().zip(tr.states()) {
            assert!((x[1] - (1.0 + (-t).exp())).abs() < 1e-6);
            assert_eq!(x[0], 1.0);
        }
    }

    #[test]
    fn rk4_honours_switches() {
        // A switches off at t = 0.5; exact solution freezes afterwards.
        let on = MetzlerMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, -1.0]]).unwrap();
        let off = MetzlerMatrix::new(Matrix::zeros(2)).unwrap();
        let m = SystemModel::ltv(SwitchingSignal::new(vec![0.5], vec![on, off]).unwrap()).unwrap();
        let tr = simulate(&m, &sv(&[1.0, 2.0]), 0.0, 1.0, 0.1, Scheme::Rk4).unwrap();
        let expect = 1.0 + (-0.5f64).exp();
        assert!((tr.final_state()[1] - expect).abs() < 1e-6);
    }

    #[test]
    fn factor_matches_simulation_bitwise() {
        let g = SwitchingSignal::new(
            vec![0.3],
            vec![
                WeightedDigraph::chain(3, 1.0).unwrap(),
                WeightedDigraph::complete(3, 0.4).unwrap(),
            ],
        )
        .unwrap();
        let m = SystemModel::kuramoto(g).unwrap();
        let x0 = sv(&[0.1, 0.9, 0.4]);
        let tr = simulate(&m, &x0, 0.0, 1.0, 0.05, Scheme::Euler).unwrap();
        let f = factorize_on_grid(&m, tr.times(), &x0).unwrap();
        assert_eq!(f.apply(x0.as_slice()), tr.final_state().as_slice());
        assert!(f.row_sum_error() < 1e-12);
        assert!(f.min_entry() >= 0.0);
        let lb = lower_bound_transition(&f, &f.accumulated.clone(), f.lambda).unwrap();
        assert!(lb.holds, "{lb:?}");
    }

    #[test]
    fn fig1_lower_bound() {
        let f = factorize_transition(&fig1(), 0.0, 1.0, &sv(&[1.0, 2.0]), 1000).unwrap();
        let e = (-1f64).exp();
        assert!((f.product[(1, 0)] - (1.0 - e)).abs() < 1e-3);
        assert!((f.product[(1, 1)] - e).abs() < 1e-3);
        let lb = lower_bound_transition(&f, &f.accumulated.clone(), 1.0).unwrap();
        assert!(lb.holds && lb.worst_slack >= 0.0, "{lb:?}");
        assert!(lower_bound_transition(&f, &f.accumulated.clone(), 0.5).is_err());
        assert!(lower_bound_transition(&f, &WeightedDigraph::empty(2), 1.0).is_err());
    }

    #[test]
    fn zero_model_factor_is_identity() {
        let zero = SystemModel::ltv_constant(MetzlerMatrix::new(Matrix::zeros(3)).unwrap()).unwrap();
        let f = factorize_transition(&zero, 0.0, 2.0, &sv(&[1.0, 2.0, 3.0]), 10).unwrap();
        assert_eq!(f.product, Matrix::identity(3));
        let lb = lower_bound_transition(&f, &WeightedDigraph::empty(3), 0.0).unwrap();
        assert!(lb.holds);
    }

    #[test]
    fn internal_dynamics_examples() {
        let tr = simulate(&fig1(), &sv(&[1.0, 2.0]), 0.0, 2.0, 0.01, Scheme::Euler).unwrap();
        let zero = ScalarSignal::constant(0.0);
        let id = internal_dynamics_transform(&zero, &zero, &tr).unwrap();
        assert_eq!(id.states(), tr.states());

        let y = internal_dynamics_transform(&zero, &ScalarSignal::constant(1.0), &tr).unwrap();
        for k in 0..tr.len() {
            let t = tr.times()[k];
            assert!((y.states()[k][0] - (tr.states()[k][0] - t)).abs() < 1e-12);
            assert!((y.diagnostics()[k].spread - tr.diagnostics()[k].spread).abs() < 1e-12);
        }

        let y = internal_dynamics_transform(&ScalarSignal::constant(-1.0), &zero, &tr).unwrap();
        for k in 0..tr.len() {
            let s = (-tr.times()[k]).exp() * tr.diagnostics()[k].spread;
            assert!((y.diagnostics()[k].spread - s).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_examples() {
        let (a, s) = shift_to_positive(&sv(&[1.0, 2.0]), 1.0).unwrap();
        assert_eq!((a, s.as_slice()), (1.0, &[2.0, 3.0][..]));
        let (a, s) = shift_to_positive(&sv(&[-3.0, 5.0]), 0.5).unwrap();
        assert_eq!((a, s.as_slice()), (3.5, &[0.5, 8.5][..]));
        assert_eq!(shift_box_to_positive(-1.0, 1.0).unwrap(), 2.0);
        assert!(shift_box_to_positive(0.0, 0.0).is_err());
    }

    #[test]
    fn custom_switching_selects_member() {
        let a = fig1();
        let b =
            SystemModel::ltv_constant(MetzlerMatrix::from_rows(&[vec![-2.0, 2.0], vec![0.0, 0.0]]).unwrap()).unwrap();
        let m =
            SystemModel::custom_switching(vec![a, b], SwitchingSignal::new(vec![1.0], vec![0, 1]).unwrap()).unwrap();
        let x = sv(&[1.0, 2.0]);
        assert_eq!(m.evaluate(0.5, &x).unwrap().matrix()[(1, 0)], 1.0);
        assert_eq!(m.evaluate(1.0, &x).unwrap().matrix()[(0, 1)], 2.0);
        assert_eq!(m.switch_times(0.0, 2.0), vec![1.0]);
        assert!(SystemModel::custom_switching(vec![fig1()], SwitchingSignal::constant(3)).is_err());
    }
}
