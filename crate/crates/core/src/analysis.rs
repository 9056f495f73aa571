//! Consensus verdicts from trajectories and numerical checks of the cone
//! contraction estimates.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{factorize_on_grid, lower_bound_transition, simulate, Scheme, SystemModel, Trajectory};
use crate::error::{Error, Result};
use crate::graph::MetzlerMatrix;
use crate::hilbert::{
    an_bn, contraction_constant, inv_sqrt, minimal_gamma_slice, norm_metric_bounds, ratio_distance, sample_cone_ray,
    ComparisonConstant, Cone, DiameterConstants, StateVector,
};
use crate::linalg::{norm2, Matrix};
use crate::rng;
use crate::topology::CheckpointSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Exponential,
    Asymptotic,
    Undecided,
    Diverging,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Exponential => "exponential",
            Verdict::Asymptotic => "asymptotic",
            Verdict::Undecided => "undecided",
            Verdict::Diverging => "diverging",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyOptions {
    /// Trailing fraction of samples used for the fit.
    pub fit_window_fraction: f64,
    /// Largest accepted `1 − R²`.
    pub residual_tol: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            fit_window_fraction: 0.5,
            residual_tol: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub verdict: Verdict,
    /// Decay exponent of `d(x(t), 𝟙)`; `+∞` when the trajectory is already
    /// at consensus.
    #[serde(serialize_with = "crate::output::lossless_float")]
    pub rate_lambda: f64,
    /// Smallest `K` with `d(t) ≤ K e^{−λ(t − t_0)} d(t_0)` on the samples.
    #[serde(serialize_with = "crate::output::lossless_float")]
    pub prefactor_k: f64,
    pub fit_residual: f64,
    /// Same fit on the spread `max x − min x`.
    pub rate_spread: f64,
    pub fit_residual_spread: f64,
    pub spread_initial: f64,
    pub spread_final: f64,
    pub window: (f64, f64),
    pub samples_used: usize,
    pub method: String,
}

/// Values below this are treated as numerical consensus and left out of
/// the log-linear fit.
const FIT_FLOOR: f64 = 1e-13;

struct Fit {
    slope: f64,
    residual: f64,
    used: usize,
}

fn log_linear_fit(t: &[f64], y: &[f64]) -> Option<Fit> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(_, v)| **v > FIT_FLOOR && v.is_finite())
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / m, a.1 + p.1 / m));
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in &pts {
        stt += (a - mt) * (a - mt);
        sty += (a - mt) * (b - my);
        syy += (b - my) * (b - my);
    }
    if stt == 0.0 {
        return None;
    }
    let slope = sty / stt;
    let ss_res = (syy - slope * sty).max(0.0);
    let residual = if syy > 0.0 { ss_res / syy } else { 1.0 };
    Some(Fit {
        slope,
        residual,
        used: pts.len(),
    })
}

/// Verdict from a trailing-window least-squares fit of `ln d(x(t), 𝟙)`.
pub fn certify_consensus(traj: &Trajectory, options: &CertifyOptions) -> Result<ConsensusReport> {
    let len = traj.len();
    if len < 10 {
        return Err(Error::TooFewSamples { needed: 10, got: len });
    }
    if !(options.fit_window_fraction > 0.0 && options.fit_window_fraction <= 1.0) {
        return Err(Error::param(
            "fit_window_fraction",
            options.fit_window_fraction,
            "must lie in (0, 1]",
        ));
    }
    let times = traj.times();
    let diag = traj.diagnostics();
    let d: Vec<f64> = diag.iter().map(|g| g.d_hilbert).collect();
    let spread: Vec<f64> = diag.iter().map(|g| g.spread).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Hypothesis(
            "d(x, 1) is infinite somewhere on the trajectory; shift the states into the positive orthant".into(),
        ));
    }
    let start = ((1.0 - options.fit_window_fraction) * len as f64).floor() as usize;
    let start = start.min(len - 3);
    let window = (times[start], times[len - 1]);
    let (spread_initial, spread_final) = (spread[0], spread[len - 1]);
    let method = format!(
        "least-squares fit of ln d(x,1) on the trailing {} of samples; residual = 1 - R^2",
        options.fit_window_fraction
    );

    if d[start..].iter().all(|&v| v <= FIT_FLOOR) {
        return Ok(ConsensusReport {
            verdict: Verdict::Exponential,
            rate_lambda: f64::INFINITY,
            prefactor_k: if d[0] > 0.0 {
                d.iter().fold(0.0, |m: f64, v| m.max(*v)) / d[0]
            } else {
                1.0
            },
            fit_residual: 0.0,
            rate_spread: f64::INFINITY,
            fit_residual_spread: 0.0,
            spread_initial,
            spread_final,
            window,
            samples_used: 0,
            method,
        });
    }

    let fit = log_linear_fit(&times[start..], &d[start..]);
    let sfit = log_linear_fit(&times[start..], &spread[start..]);
    let (rate, residual, used) = fit.map_or((0.0, 1.0, 0), |f| (-f.slope, f.residual, f.used));
    let (rate_spread, fit_residual_spread) = sfit.map_or((0.0, 1.0), |f| (-f.slope, f.residual));

    let prefactor_k = if rate > 0.0 && d[0] > 0.0 {
        d.iter()
            .zip(times)
            .map(|(v, t)| v * (rate * (t - times[0])).exp() / d[0])
            .fold(0.0, f64::max)
    } else {
        f64::NAN
    };

    let jitter = |a: f64, b: f64| b <= a * (1.0 + 1e-9) + 1e-15;
    let verdict = if !jitter(spread_initial, spread_final) {
        Verdict::Diverging
    } else if rate > 0.0 && residual <= options.residual_tol {
        Verdict::Exponential
    } else if d.windows(2).all(|w| jitter(w[0], w[1])) && d[len - 1] < d[0] {
        Verdict::Asymptotic
    } else {
        Verdict::Undecided
    };
    Ok(ConsensusReport {
        verdict,
        rate_lambda: rate,
        prefactor_k,
        fit_residual: residual,
        rate_spread,
        fit_residual_spread,
        spread_initial,
        spread_final,
        window,
        samples_used: used,
        method,
    })
}

/// Where the test points of the contraction check are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractionDomain {
    /// Unit rays of the whole cone `K(ε)`.
    #[default]
    FullCone,
    /// The box `{e : 1/√n − ε ≤ e_i ≤ 1/√n}`.
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionParams {
    pub n: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub samples: usize,
    pub seed: u64,
    pub domain: ContractionDomain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionWitness {
    pub a: Vec<Vec<f64>>,
    pub x: Vec<f64>,
    pub gamma_image: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub domain: ContractionDomain,
    pub c_theoretical: f64,
    pub c_observed: f64,
    pub samples: usize,
    pub violations: usize,
    /// The sample with the largest `minimal_gamma(Ax)/ε`.
    pub worst: Option<ContractionWitness>,
}

impl ContractionReport {
    pub fn pass(&self) -> bool {
        self.violations == 0
    }
}

/// Absolute slack in `minimal_gamma(Ax) ≤ Cε`.
pub const CONTRACTION_SLACK: f64 = 1e-9;

/// Random row-stochastic `A = (1 − δ) R + δ 𝟙 e_kᵀ`. Rows of `R` are dense
/// uniform, one-hot, or sparse, so that extreme stochastic rows are hit.
pub fn sample_row_stochastic<R: Rng + ?Sized>(n: usize, delta: f64, rng: &mut R) -> (Matrix, usize) {
    let k = rng.random_range(0..n);
    let mut a = Matrix::zeros(n);
    for i in 0..n {
        let mut row: Vec<f64> = match rng.random_range(0..3u8) {
            0 => (0..n).map(|_| rng.random::<f64>()).collect(),
            1 => {
                let mut r = vec![0.0; n];
                r[rng.random_range(0..n)] = 1.0;
                r
            }
            _ => (0..n)
                .map(|_| if rng.random_bool(0.3) { rng.random::<f64>() } else { 0.0 })
                .collect(),
        };
        let s: f64 = row.iter().sum();
        if s == 0.0 {
            row[rng.random_range(0..n)] = 1.0;
        } else {
            row.iter_mut().for_each(|v| *v /= s);
        }
        for j in 0..n {
            a[(i, j)] = (1.0 - delta) * row[j] + if j == k { delta } else { 0.0 };
        }
    }
    (a, k)
}

fn sample_box_point<R: Rng + ?Sized>(n: usize, epsilon: f64, rng: &mut R) -> Vec<f64> {
    let top = inv_sqrt(n);
    (0..n)
        .map(|_| match rng.random_range(0..3u8) {
            0 => top,
            1 => top - epsilon,
            _ => top - epsilon * rng.random::<f64>(),
        })
        .collect()
}

/// Samples `(A, x)` pairs and checks `minimal_gamma(Ax) ≤ C ε` with
/// `C = (1 − δ)/(1 − √n ε δ)`.
pub fn verify_lemma_contraction(params: &ContractionParams) -> Result<ContractionReport> {
    let ContractionParams {
        n,
        delta,
        epsilon,
        samples,
        seed,
        domain,
    } = *params;
    let c = contraction_constant(n, delta, epsilon)?;
    if samples == 0 {
        return Err(Error::param("samples", 0.0, "need at least one sample"));
    }
    let cone = Cone::new(n, epsilon.min(crate::hilbert::max_gamma(n) * (1.0 - 1e-12)))?;
    const CHUNK: usize = 1024;
    let chunks = samples.div_ceil(CHUNK);
    let results: Vec<(usize, f64, Option<ContractionWitness>)> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = rng::stream(seed, &format!("contraction/{n}/{delta}/{epsilon}/{chunk}"));
            let count = CHUNK.min(samples - chunk * CHUNK);
            let mut violations = 0;
            let mut worst = f64::NEG_INFINITY;
            let mut witness = None;
            for s in 0..count {
                let (a, _) = sample_row_stochastic(n, delta, &mut rng);
                let x = if chunk == 0 && s == 0 {
                    vec![inv_sqrt(n); n]
                } else {
                    match domain {
                        ContractionDomain::FullCone => sample_cone_ray(&cone, &mut rng),
                        ContractionDomain::Box => sample_box_point(n, epsilon, &mut rng),
                    }
                };
                let y = a.mul_vec(&x);
                let g = minimal_gamma_slice(&y).map(|g| g.value).unwrap_or(f64::INFINITY);
                if g > c * epsilon + CONTRACTION_SLACK {
                    violations += 1;
                }
                if g / epsilon > worst {
                    worst = g / epsilon;
                    witness = Some(ContractionWitness {
                        a: a.rows(),
                        x,
                        gamma_image: g,
                    });
                }
            }
            (violations, worst, witness)
        })
        .collect();
    let violations = results.iter().map(|r| r.0).sum();
    let (c_observed, worst) =
        results.into_iter().fold(
            (f64::NEG_INFINITY, None),
            |acc, r| if r.1 > acc.0 { (r.1, r.2) } else { acc },
        );
    Ok(ContractionReport {
        n,
        epsilon,
        delta,
        domain,
        c_theoretical: c,
        c_observed,
        samples,
        violations,
        worst,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub m: usize,
    pub estimate: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiameterDecayReport {
    pub n: usize,
    pub epsilon: f64,
    /// Largest column minimum of `A`.
    pub delta: f64,
    pub c: f64,
    /// Per-step factor `k` with `diam(A^m K(ε)) ≤ k^m α(ε)`.
    pub factor: f64,
    pub rows: Vec<DecayRow>,
    pub pass: bool,
}

/// `min_i a_ik` maximised over `k`, after checking that `A` is
/// nonnegative with unit row sums.
pub fn stochastic_delta(a: &Matrix) -> Result<f64> {
    let n = a.n();
    for i in 0..n {
        for j in 0..n {
            if !(a[(i, j)] >= 0.0) {
                return Err(Error::Hypothesis(format!(
                    "entry ({i}, {j}) = {} is negative",
                    a[(i, j)]
                )));
            }
        }
        let s: f64 = a.row(i).iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Hypothesis(format!("row {i} sums to {s}")));
        }
    }
    let delta = (0..n)
        .map(|k| (0..n).map(|i| a[(i, k)]).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    if !(delta > 0.0) {
        return Err(Error::Hypothesis("no column of A is strictly positive".into()));
    }
    Ok(delta)
}

/// Largest pairwise Hilbert distance within `points`, via
/// `max_{i,j} [max_u ln(u_i/u_j) + max_v ln(v_j/v_i)]`, which equals the
/// maximum over all pairs without the quadratic loop.
pub fn max_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let Some(first) = points.first() else {
        return 0.0;
    };
    let n = first.len();
    let mut s = vec![f64::NEG_INFINITY; n * n];
    for p in points {
        for i in 0..n {
            for j in 0..n {
                let r = (p[i] / p[j]).ln();
                if r > s[i * n + j] {
                    s[i * n + j] = r;
                }
            }
        }
    }
    let mut best: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            best = best.max(s[i * n + j] + s[j * n + i]);
        }
    }
    best
}

/// Pushes sampled rays of `K(ε)` through `A^m` and compares the spread of
/// the image with `k^m α(ε)`.
pub fn verify_diameter_decay(
    a: &Matrix,
    epsilon: f64,
    m_max: usize,
    samples: usize,
    seed: u64,
) -> Result<DiameterDecayReport> {
    let n = a.n();
    let delta = stochastic_delta(a)?;
    let cone = Cone::new(n, epsilon)?;
    let c = contraction_constant(n, delta, epsilon)?;
    let constants = DiameterConstants::certify(n, epsilon, 1000)?;
    let factor = constants.contraction_factor(c);
    let alpha = cone.diameter();
    let mut rng = rng::stream(seed, "diameter-decay");
    let mut points: Vec<Vec<f64>> = crate::hilbert::cone_corner_rays(&cone);
    while points.len() < samples.max(2) {
        points.push(sample_cone_ray(&cone, &mut rng));
    }
    let mut rows = Vec::with_capacity(m_max + 1);
    for m in 0..=m_max {
        if m > 0 {
            points.par_iter_mut().for_each(|p| {
                let y = a.mul_vec(p);
                let s = norm2(&y);
                *p = y.into_iter().map(|v| v / s).collect();
            });
        }
        let estimate = max_pairwise_distance(&points);
        let bound = factor.powi(m as i32) * alpha;
        rows.push(DecayRow {
            m,
            estimate,
            bound,
            pass: estimate <= bound + 1e-9,
        });
    }
    Ok(DiameterDecayReport {
        n,
        epsilon,
        delta,
        c,
        factor,
        pass: rows.iter().all(|r| r.pass),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiameterFormulaReport {
    pub n: usize,
    pub gamma: f64,
    pub formula: f64,
    pub sampled_sup: f64,
    /// `(formula − sampled_sup)/formula`
    pub relative_gap: f64,
    /// `max(0, sampled_sup − formula)`
    pub max_excess: f64,
    pub pairs: usize,
}

/// Largest Hilbert distance over independently sampled pairs of rays.
pub fn verify_cone_diameter(n: usize, gamma: f64, pairs: usize, seed: u64) -> Result<DiameterFormulaReport> {
    let cone = Cone::new(n, gamma)?;
    const CHUNK: usize = 8192;
    let sup = (0..pairs.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut rng = rng::stream(seed, &format!("cone-diameter/{n}/{gamma}/{chunk}"));
            let mut best: f64 = 0.0;
            for _ in 0..CHUNK.min(pairs - chunk * CHUNK) {
                let u = sample_cone_ray(&cone, &mut rng);
                let v = sample_cone_ray(&cone, &mut rng);
                best = best.max(ratio_distance(&u, &v).value());
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    let formula = cone.diameter();
    Ok(DiameterFormulaReport {
        n,
        gamma,
        formula,
        sampled_sup: sup,
        relative_gap: if formula > 0.0 { (formula - sup) / formula } else { 0.0 },
        max_excess: (sup - formula).max(0.0),
        pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub samples: usize,
    pub violations: usize,
    /// Smallest of `(B − nA)/scale` and `(2nA − B)/scale` seen.
    pub worst_relative_slack: f64,
    pub n_min: usize,
    pub n_max: usize,
}

/// Relative tolerance for `n A_n ≤ B_n ≤ 2n A_n`.
pub const SANDWICH_TOL: f64 = 1e-12;

/// Random nonnegative vectors (dense, sparse, and wide-range magnitudes)
/// checked against `n A_n ≤ B_n ≤ 2n A_n`.
pub fn verify_sandwich(n_min: usize, n_max: usize, samples: usize, seed: u64) -> Result<SandwichReport> {
    if n_min < 2 || n_max < n_min {
        return Err(Error::Config(format!("invalid dimension range {n_min}..={n_max}")));
    }
    const CHUNK: usize = 4096;
    let parts: Vec<(usize, f64)> = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut rng = rng::stream(seed, &format!("sandwich/{chunk}"));
            let mut violations = 0;
            let mut worst = f64::INFINITY;
            for _ in 0..CHUNK.min(samples - chunk * CHUNK) {
                let n = rng.random_range(n_min..=n_max);
                let x: Vec<f64> = match rng.random_range(0..3u8) {
                    0 => (0..n).map(|_| rng.random::<f64>()).collect(),
                    1 => (0..n)
                        .map(|_| if rng.random_bool(0.5) { rng.random::<f64>() } else { 0.0 })
                        .collect(),
                    _ => (0..n).map(|_| 10f64.powf(rng.random_range(-6.0..6.0))).collect(),
                };
                let r = an_bn(&StateVector::new(x).expect("n >= 2"));
                let nf = n as f64;
                let scale = r.b_n.max(nf * r.a_n).max(f64::MIN_POSITIVE);
                let slack = ((r.b_n - nf * r.a_n) / scale).min((2.0 * nf * r.a_n - r.b_n) / scale);
                worst = worst.min(slack);
                if !r.sandwich_holds(n, SANDWICH_TOL) {
                    violations += 1;
                }
            }
            (violations, worst)
        })
        .collect();
    Ok(SandwichReport {
        samples,
        violations: parts.iter().map(|p| p.0).sum(),
        worst_relative_slack: parts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        n_min,
        n_max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeImage {
    pub gamma: f64,
    pub samples: usize,
    /// Largest `minimal_gamma` of the flowed rays at `t = 1`.
    pub image_gamma_max: f64,
    pub contracted: bool,
    /// Largest gap between the simulated and closed-form flow on a subset.
    pub simulation_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoConeReport {
    /// `x(0) = (0, 1)`: largest `|minimal_gamma − 1/√2|` along the flow.
    pub boundary_gamma_deviation: f64,
    /// First coordinate stays exactly zero.
    pub boundary_stays_on_boundary: bool,
    pub boundary_closed_form_error: f64,
    /// `x(0) = (1, 1)` stays put.
    pub fixed_point_drift: f64,
    pub cones: Vec<ConeImage>,
    pub pass: bool,
}

fn fig1_model() -> SystemModel {
    let a = MetzlerMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, -1.0]]).expect("valid Metzler matrix");
    SystemModel::ltv_constant(a).expect("n = 2")
}

/// The two-agent system `ẋ₁ = 0, ẋ₂ = x₁ − x₂`: the boundary ray of the
/// orthant is invariant, while each `K(γ)` is mapped strictly inside itself.
pub fn two_cone_demo(samples: usize, seed: u64) -> Result<TwoConeReport> {
    let model = fig1_model();
    let h = 1e-3;
    let boundary = simulate(&model, &StateVector::new(vec![0.0, 1.0])?, 0.0, 5.0, h, Scheme::Rk4)?;
    let target = inv_sqrt(2);
    let mut boundary_gamma_deviation: f64 = 0.0;
    let mut boundary_closed_form_error: f64 = 0.0;
    let mut on_boundary = true;
    for (t, x) in boundary.times().iter().zip(boundary.states()) {
        let g = minimal_gamma_slice(x.as_slice())?;
        boundary_gamma_deviation = boundary_gamma_deviation.max((g.value - target).abs());
        on_boundary &= x[0] == 0.0 && g.boundary;
        boundary_closed_form_error = boundary_closed_form_error.max((x[1] - (-t).exp()).abs());
    }
    let fixed = simulate(&model, &StateVector::new(vec![1.0, 1.0])?, 0.0, 5.0, h, Scheme::Rk4)?;
    let fixed_point_drift = fixed
        .states()
        .iter()
        .map(|x| (x[0] - 1.0).abs().max((x[1] - 1.0).abs()))
        .fold(0.0, f64::max);

    let mut cones = Vec::new();
    for gamma in [0.1, 0.2] {
        let cone = Cone::new(2, gamma)?;
        let mut rng = rng::stream(seed, &format!("two-cone/{gamma}"));
        let e1 = (-1f64).exp();
        let mut image_gamma_max: f64 = 0.0;
        let mut simulation_error: f64 = 0.0;
        for s in 0..samples.max(1) {
            let x = sample_cone_ray(&cone, &mut rng);
            let y = [x[0], x[0] + (x[1] - x[0]) * e1];
            image_gamma_max = image_gamma_max.max(minimal_gamma_slice(&y)?.value);
            if s < 20 {
                let tr = simulate(&model, &StateVector::new(x.clone())?, 0.0, 1.0, h, Scheme::Rk4)?;
                let z = tr.final_state();
                simulation_error = simulation_error.max((z[0] - y[0]).abs().max((z[1] - y[1]).abs()));
            }
        }
        cones.push(ConeImage {
            gamma,
            samples: samples.max(1),
            image_gamma_max,
            contracted: image_gamma_max < gamma,
            simulation_error,
        });
    }
    let pass = on_boundary
        && boundary_gamma_deviation < 1e-12
        && boundary_closed_form_error < 1e-6
        && fixed_point_drift == 0.0
        && cones.iter().all(|c| c.contracted && c.simulation_error < 1e-6);
    Ok(TwoConeReport {
        boundary_gamma_deviation,
        boundary_stays_on_boundary: on_boundary,
        boundary_closed_form_error,
        fixed_point_drift,
        cones,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricNormReport {
    pub steps: usize,
    pub sandwich_violations: usize,
    pub worst_sandwich_slack: f64,
    pub bound_violations: usize,
    /// Smallest `|x̂ − 𝟙̂| − C tanh(d/2)`.
    pub worst_lower_slack: f64,
    /// Smallest `e^d − 1 − |x̂ − 𝟙̂|`.
    pub worst_upper_slack: f64,
    pub comparison_constant: f64,
    pub gamma_max: f64,
    pub max_d_squared: f64,
    pub pass: bool,
}

/// Along a positive trajectory: the `A_n`/`B_n` sandwich and the
/// norm-metric bounds against the consensus ray at every step.
pub fn metric_norm_consistency(traj: &Trajectory, comparison: &ComparisonConstant) -> Result<MetricNormReport> {
    let n = traj.n();
    let shifted: Vec<StateVector> = traj.states().iter().map(|s| s.shifted(traj.shift())).collect();
    if let Some(s) = shifted.iter().find(|s| !s.is_positive()) {
        let (index, &value) = s
            .as_slice()
            .iter()
            .enumerate()
            .find(|(_, v)| **v <= 0.0)
            .expect("a nonpositive entry exists");
        return Err(Error::NegativeEntry { index, value });
    }
    let gamma_max = traj.diagnostics().iter().map(|g| g.gamma).fold(0.0, f64::max);
    let c = if gamma_max > 0.0 {
        comparison.resolve(&Cone::new(n, gamma_max)?)
    } else {
        0.0
    };
    let ones = StateVector::ones(n)?;
    let nf = n as f64;
    let mut report = MetricNormReport {
        steps: shifted.len(),
        sandwich_violations: 0,
        worst_sandwich_slack: f64::INFINITY,
        bound_violations: 0,
        worst_lower_slack: f64::INFINITY,
        worst_upper_slack: f64::INFINITY,
        comparison_constant: c,
        gamma_max,
        max_d_squared: 0.0,
        pass: true,
    };
    for (x, diag) in shifted.iter().zip(traj.diagnostics()) {
        report.max_d_squared = report.max_d_squared.max(diag.d_hilbert * diag.d_hilbert);
        let r = an_bn(x);
        let scale = r.b_n.max(nf * r.a_n).max(f64::MIN_POSITIVE);
        report.worst_sandwich_slack = report
            .worst_sandwich_slack
            .min((r.b_n - nf * r.a_n) / scale)
            .min((2.0 * nf * r.a_n - r.b_n) / scale);
        if !r.sandwich_holds(n, SANDWICH_TOL) {
            report.sandwich_violations += 1;
        }
        let b = norm_metric_bounds(x, &ones, c)?;
        report.worst_lower_slack = report.worst_lower_slack.min(b.gap - b.lower);
        report.worst_upper_slack = report.worst_upper_slack.min(b.upper - b.gap);
        if !(b.gap >= b.lower - 1e-12 && b.gap <= b.upper + 1e-12) {
            report.bound_violations += 1;
        }
    }
    report.pass = report.sandwich_violations == 0 && report.bound_violations == 0;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorInterval {
    pub t_start: f64,
    pub t_end: f64,
    pub steps: usize,
    pub row_sum_error: f64,
    pub min_entry: f64,
    /// Factors reproduce the integrator's state at `t_end` bit for bit.
    pub bitwise: bool,
    pub lower_bound_slack: f64,
    pub lower_bound_holds: bool,
    /// Same bound with `e^{−λT}` in place of the discrete factor; reported
    /// only, since Euler products miss it by `O(h)`.
    pub exp_form_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorReport {
    pub intervals: Vec<FactorInterval>,
    pub max_row_sum_error: f64,
    pub min_entry: f64,
    pub all_bitwise: bool,
    #[serde(serialize_with = "crate::output::lossless_float")]
    pub worst_lower_bound_slack: f64,
    pub pass: bool,
}

/// Largest accepted `|P𝟙 − 𝟙|`.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Rebuilds the Euler transition factors of an Euler trajectory between
/// consecutive checkpoints (which must lie on its grid) and checks `P𝟙 = 𝟙`,
/// `P ≥ 0`, the reproduced endpoint and the elementwise lower bound.
pub fn verify_transition_factors(
    model: &SystemModel,
    traj: &Trajectory,
    checkpoints: &CheckpointSequence,
) -> Result<FactorReport> {
    let intervals = checkpoints
        .intervals()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(a, b)| {
            let (ia, ib) = match (traj.index_of(a), traj.index_of(b)) {
                (Some(ia), Some(ib)) if ib > ia => (ia, ib),
                _ => {
                    return Err(Error::GridMismatch(format!(
                        "checkpoints {a} and {b} are not on the trajectory grid"
                    )))
                }
            };
            let f = factorize_on_grid(model, &traj.times()[ia..=ib], &traj.states()[ia])?;
            let lb = lower_bound_transition(&f, &f.accumulated, f.lambda)?;
            Ok(FactorInterval {
                t_start: a,
                t_end: b,
                steps: ib - ia,
                row_sum_error: f.row_sum_error(),
                min_entry: f.min_entry(),
                bitwise: f.end_state().as_slice() == traj.states()[ib].as_slice()
                    && f.apply(traj.states()[ia].as_slice()) == traj.states()[ib].as_slice(),
                lower_bound_slack: lb.worst_slack,
                lower_bound_holds: lb.holds,
                exp_form_slack: lb.exp_form_slack,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_row_sum_error = intervals.iter().map(|i| i.row_sum_error).fold(0.0, f64::max);
    let min_entry = intervals.iter().map(|i| i.min_entry).fold(f64::INFINITY, f64::min);
    let all_bitwise = intervals.iter().all(|i| i.bitwise);
    let worst_lower_bound_slack = intervals
        .iter()
        .map(|i| i.lower_bound_slack)
        .fold(f64::INFINITY, f64::min);
    let pass = max_row_sum_error <= ROW_SUM_TOL
        && min_entry >= 0.0
        && all_bitwise
        && intervals.iter().all(|i| i.lower_bound_holds);
    Ok(FactorReport {
        intervals,
        max_row_sum_error,
        min_entry,
        all_bitwise,
        worst_lower_bound_slack,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::simulate;

    fn sv(v: &[f64]) -> StateVector {
        StateVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn fig1_certifies_with_unit_rate() {
        let tr = simulate(&fig1_model(), &sv(&[1.0, 2.0]), 0.0, 10.0, 1e-2, Scheme::Rk4).unwrap();
        let r = certify_consensus(&tr, &CertifyOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Exponential);
        assert!((r.rate_lambda - 1.0).abs() < 0.05, "{r:?}");
        assert!((r.rate_spread - 1.0).abs() < 1e-3, "{r:?}");
        assert!(r.spread_final <= r.spread_initial);
        assert!(r.prefactor_k >= 1.0);
    }

    #[test]
    fn consensus_trajectory_is_degenerate_exponential() {
        let tr = simulate(&fig1_model(), &sv(&[3.0, 3.0]), 0.0, 1.0, 0.05, Scheme::Euler).unwrap();
        let r = certify_consensus(&tr, &CertifyOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Exponential);
        assert!(r.rate_lambda.is_infinite());
        assert_eq!(r.spread_final, 0.0);
    }

    #[test]
    fn certify_needs_samples_and_finite_metric() {
        let tr = simulate(&fig1_model(), &sv(&[1.0, 2.0]), 0.0, 1.0, 0.2, Scheme::Euler).unwrap();
        assert!(matches!(
            certify_consensus(&tr, &CertifyOptions::default()),
            Err(Error::TooFewSamples { .. })
        ));
        let tr = simulate(&fig1_model(), &sv(&[0.0, 2.0]), 0.0, 1.0, 0.01, Scheme::Euler).unwrap();
        assert!(certify_consensus(&tr, &CertifyOptions::default()).is_err());
    }

    #[test]
    fn contraction_trivial_cases() {
        let r = verify_lemma_contraction(&ContractionParams {
            n: 3,
            delta: 1.0,
            epsilon: 0.3,
            samples: 500,
            seed: 1,
            domain: ContractionDomain::FullCone,
        })
        .unwrap();
        assert_eq!(r.c_theoretical, 0.0);
        assert!(r.c_observed < 1e-12);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn contraction_two_agents_holds() {
        let r = verify_lemma_contraction(&ContractionParams {
            n: 2,
            delta: 0.3,
            epsilon: 0.5,
            samples: 10_000,
            seed: 7,
            domain: ContractionDomain::FullCone,
        })
        .unwrap();
        assert_eq!(r.violations, 0, "{r:?}");
        assert!(r.c_observed <= r.c_theoretical + 1e-9);
    }

    #[test]
    fn contraction_box_domain_holds() {
        for n in 2..=6 {
            let r = verify_lemma_contraction(&ContractionParams {
                n,
                delta: 0.3,
                epsilon: 0.5 * inv_sqrt(n),
                samples: 5000,
                seed: 3,
                domain: ContractionDomain::Box,
            })
            .unwrap();
            assert_eq!(r.violations, 0, "{r:?}");
        }
    }

    #[test]
    fn pairwise_max_matches_quadratic_loop() {
        let cone = Cone::new(3, 0.3).unwrap();
        let mut rng = rng::stream(11, "t");
        let pts: Vec<Vec<f64>> = (0..60).map(|_| sample_cone_ray(&cone, &mut rng)).collect();
        let mut brute: f64 = 0.0;
        for u in &pts {
            for v in &pts {
                brute = brute.max(ratio_distance(u, v).value());
            }
        }
        assert!((max_pairwise_distance(&pts) - brute).abs() < 1e-12);
    }

    #[test]
    fn decay_trivial_cases() {
        let mut a = Matrix::zeros(3);
        for i in 0..3 {
            a[(i, 1)] = 1.0;
        }
        let r = verify_diameter_decay(&a, 0.3, 3, 500, 1).unwrap();
        assert!(r.rows[0].estimate <= Cone::new(3, 0.3).unwrap().diameter() + 1e-9);
        assert!(r.rows[1..].iter().all(|row| row.estimate < 1e-12));
        assert!(verify_diameter_decay(&Matrix::identity(3), 0.3, 2, 100, 1).is_err());
    }

    #[test]
    fn two_cone_demo_passes() {
        let r = two_cone_demo(2000, 5).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn sandwich_small_run() {
        let r = verify_sandwich(2, 10, 5000, 1).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.worst_relative_slack >= -1e-12);
    }

    #[test]
    fn metric_norm_on_fig1() {
        let tr = simulate(&fig1_model(), &sv(&[1.0, 2.0]), 0.0, 5.0, 1e-2, Scheme::Rk4).unwrap();
        let r = metric_norm_consistency(&tr, &ComparisonConstant::Analytic).unwrap();
        assert!(r.pass, "{r:?}");
        let flat = simulate(&fig1_model(), &sv(&[2.0, 2.0]), 0.0, 1.0, 0.1, Scheme::Euler).unwrap();
        let r = metric_norm_consistency(&flat, &ComparisonConstant::Analytic).unwrap();
        assert_eq!(r.max_d_squared, 0.0);
        assert!(r.pass);
    }
}
