//! Hilbert projective metric on the positive orthant and the cone family
//! `K(γ) = { x : x_i / |x|₂ ≥ 1/√n − γ for all i }`.
//!
//! Distances are reported as [`HilbertDistance`], which is `+∞` on the
//! boundary of the orthant instead of an error, so trajectory diagnostics
//! stay total.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::rng;

/// Relative margin below `1/√n` that admissible cone parameters must keep.
pub const GAMMA_MARGIN: f64 = 1e-9;

/// Gaps below this are rounding noise in `1/√n − min_i x_i/|x|`.
const GAMMA_SNAP: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::TooFewAgents(entries.len()));
        }
        Ok(Self(entries))
    }

    pub fn ones(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| v * c).collect())
    }

    pub fn shifted(&self, alpha: f64) -> Self {
        Self(self.0.iter().map(|v| v + alpha).collect())
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max_i x_i − min_i x_i`.
    pub fn spread(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn is_positive(&self) -> bool {
        self.0.iter().all(|&v| v > 0.0)
    }

    fn check_dim(&self, other: &StateVector) -> Result<()> {
        if self.n() != other.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                actual: other.n(),
            });
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for StateVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<&[f64]> for StateVector {
    type Error = Error;

    fn try_from(v: &[f64]) -> Result<Self> {
        Self::new(v.to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HilbertDistance(f64);

impl HilbertDistance {
    pub const INFINITE: HilbertDistance = HilbertDistance(f64::INFINITY);

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl fmt::Display for HilbertDistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `ln(max_i(x_i/y_i) / min_i(x_i/y_i))`, or `+∞` when any entry of either
/// vector is nonpositive.
pub fn hilbert_distance(x: &StateVector, y: &StateVector) -> Result<HilbertDistance> {
    x.check_dim(y)?;
    Ok(ratio_distance(x.as_slice(), y.as_slice()))
}

pub(crate) fn ratio_distance(x: &[f64], y: &[f64]) -> HilbertDistance {
    // max(x/y) · max(y/x) rather than max/min keeps d(x, y) == d(y, x) bitwise.
    let mut fwd = f64::NEG_INFINITY;
    let mut rev = f64::NEG_INFINITY;
    for (&a, &b) in x.iter().zip(y) {
        if !(a > 0.0 && b > 0.0) {
            return HilbertDistance::INFINITE;
        }
        fwd = fwd.max(a / b);
        rev = rev.max(b / a);
    }
    HilbertDistance((fwd * rev).ln().max(0.0))
}

/// Distance from `x` to the consensus ray, `ln(max_i x_i / min_i x_i)`.
pub fn distance_to_consensus(x: &StateVector) -> HilbertDistance {
    let (lo, hi) = (x.min(), x.max());
    if !(lo > 0.0) {
        return HilbertDistance::INFINITE;
    }
    HilbertDistance((hi / lo).ln().max(0.0))
}

/// One member `K(γ)` of the cone family around span{𝟙}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    n: usize,
    gamma: f64,
}

impl Cone {
    pub fn new(n: usize, gamma: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewAgents(n));
        }
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::param("gamma", gamma, "must be finite and >= 0"));
        }
        if gamma >= max_gamma(n) {
            return Err(Error::param("gamma", gamma, "must stay below (1 - 1e-9)/sqrt(n)"));
        }
        Ok(Self { n, gamma })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Lower bound `1/√n − γ` on every normalized entry.
    pub fn floor(&self) -> f64 {
        inv_sqrt(self.n) - self.gamma
    }

    pub fn contains(&self, x: &StateVector) -> Result<bool> {
        cone_membership(x, self)
    }

    pub fn diameter(&self) -> f64 {
        diameter_formula(self.n, self.gamma)
    }
}

/// Supremum of admissible `γ` for dimension `n` (exclusive).
pub fn max_gamma(n: usize) -> f64 {
    (1.0 - GAMMA_MARGIN) * inv_sqrt(n)
}

pub(crate) fn inv_sqrt(n: usize) -> f64 {
    1.0 / (n as f64).sqrt()
}

/// `1/√n − min_i x_i/|x|`, snapped to zero at rounding level.
fn raw_gamma(x: &[f64]) -> f64 {
    let norm = norm2(x);
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let g = inv_sqrt(x.len()) - min / norm;
    if g.abs() <= GAMMA_SNAP {
        0.0
    } else {
        g
    }
}

pub fn cone_membership(x: &StateVector, cone: &Cone) -> Result<bool> {
    if x.n() != cone.n {
        return Err(Error::DimensionMismatch {
            expected: cone.n,
            actual: x.n(),
        });
    }
    if x.as_slice().iter().all(|&v| v == 0.0) {
        return Ok(true);
    }
    Ok(raw_gamma(x.as_slice()) <= cone.gamma)
}

/// Smallest `γ` whose cone contains `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimalGamma {
    pub value: f64,
    /// Set when `value` is not an admissible cone parameter, i.e. `x` sits on
    /// the boundary of the orthant and belongs to no `K(γ)`.
    pub boundary: bool,
}

pub fn minimal_gamma(x: &StateVector) -> Result<MinimalGamma> {
    minimal_gamma_slice(x.as_slice())
}

pub(crate) fn minimal_gamma_slice(x: &[f64]) -> Result<MinimalGamma> {
    if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativeEntry { index, value });
    }
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroVector);
    }
    let value = raw_gamma(x).max(0.0);
    Ok(MinimalGamma {
        value,
        boundary: value >= max_gamma(x.len()),
    })
}

/// Hilbert diameter of `K(γ)`: `ln(1 − n + n/(1 − √n γ)²)`.
pub fn cone_diameter(cone: &Cone) -> f64 {
    cone.diameter()
}

/// Closed form without parameter validation. Evaluated as
/// `ln1p(n (1−u)(1+u)/u²)` with `u = 1 − √n γ` to keep precision near 0.
pub(crate) fn diameter_formula(n: usize, gamma: f64) -> f64 {
    let rn = (n as f64).sqrt();
    let one_minus_u = rn * gamma;
    let u = 1.0 - one_minus_u;
    (n as f64 * one_minus_u * (1.0 + u) / (u * u)).ln_1p()
}

/// Derivative of the diameter in `γ`: `2n√n / (u (n − (n−1) u²))`.
pub fn diameter_slope(n: usize, gamma: f64) -> f64 {
    let nf = n as f64;
    let u = 1.0 - nf.sqrt() * gamma;
    2.0 * nf * nf.sqrt() / slope_denominator(nf, u)
}

fn slope_denominator(nf: f64, u: f64) -> f64 {
    u * (nf - (nf - 1.0) * u * u)
}

/// Cone contraction factor `(1 − δ)/(1 − √n ε δ)` for a row-stochastic
/// matrix with a column bounded below by `δ`.
pub fn contraction_constant(n: usize, delta: f64, epsilon: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::TooFewAgents(n));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::param("delta", delta, "must lie in (0, 1]"));
    }
    if !(epsilon > 0.0 && epsilon < inv_sqrt(n)) {
        return Err(Error::param("epsilon", epsilon, "must lie in (0, 1/sqrt(n))"));
    }
    Ok((1.0 - delta) / (1.0 - (n as f64).sqrt() * epsilon * delta))
}

/// How the constant `C` in `C tanh(d/2) ≤ |x − w|` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ComparisonConstant {
    /// Empirical infimum of `|x − w| / tanh(d(x,w)/2)` over sampled pairs
    /// of unit rays in the cone, refined by local search.
    Calibrated {
        samples: usize,
        seed: u64,
    },
    /// `(1/√n − γ)/√2`, valid for every pair of unit rays in `K(γ)`.
    Analytic,
    Fixed {
        value: f64,
    },
}

impl Default for ComparisonConstant {
    fn default() -> Self {
        ComparisonConstant::Calibrated {
            samples: 100_000,
            seed: 0x5eed,
        }
    }
}

impl ComparisonConstant {
    pub fn resolve(&self, cone: &Cone) -> f64 {
        match *self {
            ComparisonConstant::Calibrated { samples, seed } => calibrate_comparison_constant(cone, samples, seed),
            ComparisonConstant::Analytic => analytic_comparison_constant(cone),
            ComparisonConstant::Fixed { value } => value,
        }
    }
}

pub fn analytic_comparison_constant(cone: &Cone) -> f64 {
    cone.floor() / std::f64::consts::SQRT_2
}

fn comparison_ratio(x: &[f64], w: &[f64]) -> Option<f64> {
    let d = ratio_distance(x, w).value();
    if !(d > 1e-9) || !d.is_finite() {
        return None;
    }
    let gap = norm2(&x.iter().zip(w).map(|(a, b)| a - b).collect::<Vec<_>>());
    Some(gap / (0.5 * d).tanh())
}

pub fn calibrate_comparison_constant(cone: &Cone, samples: usize, seed: u64) -> f64 {
    let mut rng = rng::stream(seed, "comparison-constant");
    let mut pairs: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut best = f64::INFINITY;
    for _ in 0..samples.max(1) {
        let x = sample_cone_ray(cone, &mut rng);
        let w = sample_cone_ray(cone, &mut rng);
        if let Some(r) = comparison_ratio(&x, &w) {
            if r < best || pairs.len() < 8 {
                best = best.min(r);
                pairs.push((r, x, w));
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                pairs.truncate(8);
            }
        }
    }
    for (r, x, w) in pairs {
        best = best.min(refine_comparison_pair(cone, r, x, w));
    }
    best
}

/// Coordinate pattern search on a pair of rays, staying inside the cone.
fn refine_comparison_pair(cone: &Cone, mut r: f64, mut x: Vec<f64>, mut w: Vec<f64>) -> f64 {
    let n = cone.n;
    let mut step = 1e-2;
    let mut passes = 0;
    while step > 1e-10 && passes < 400 {
        passes += 1;
        let mut improved = false;
        for coord in 0..2 * n {
            for sign in [1.0, -1.0] {
                let (mut cx, mut cw) = (x.clone(), w.clone());
                if coord < n {
                    cx[coord] += sign * step;
                    cx = project_into_cone(cone, &cx);
                } else {
                    cw[coord - n] += sign * step;
                    cw = project_into_cone(cone, &cw);
                }
                if let Some(cr) = comparison_ratio(&cx, &cw) {
                    if cr < r {
                        r = cr;
                        x = cx;
                        w = cw;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    r
}

/// Bounds relating the Euclidean gap of normalized vectors to their Hilbert
/// distance: `C tanh(d/2) ≤ |x̂ − ŵ| ≤ e^d − 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormMetricBounds {
    pub lower: f64,
    pub upper: f64,
    pub distance: f64,
    pub gap: f64,
    pub x_norm: f64,
    pub w_norm: f64,
}

impl NormMetricBounds {
    pub fn holds(&self) -> bool {
        self.lower <= self.gap && self.gap <= self.upper
    }
}

pub fn norm_metric_bounds(x: &StateVector, w: &StateVector, comparison: f64) -> Result<NormMetricBounds> {
    x.check_dim(w)?;
    for v in [x, w] {
        if let Some((index, &value)) = v.as_slice().iter().enumerate().find(|(_, e)| **e < 0.0) {
            return Err(Error::NegativeEntry { index, value });
        }
    }
    let (x_norm, w_norm) = (x.norm(), w.norm());
    if x_norm == 0.0 || w_norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let xh: Vec<f64> = x.as_slice().iter().map(|v| v / x_norm).collect();
    let wh: Vec<f64> = w.as_slice().iter().map(|v| v / w_norm).collect();
    let distance = ratio_distance(&xh, &wh).value();
    let gap = norm2(&xh.iter().zip(&wh).map(|(a, b)| a - b).collect::<Vec<_>>());
    Ok(NormMetricBounds {
        lower: comparison * (0.5 * distance).tanh(),
        upper: distance.exp_m1(),
        distance,
        gap,
        x_norm,
        w_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnBn {
    /// `|x − (|x|/√n) 𝟙|²`
    pub a_n: f64,
    /// `Σ_{i,j} (x_i − x_j)²` over ordered pairs
    pub b_n: f64,
}

impl AnBn {
    /// `n A_n ≤ B_n ≤ 2n A_n` up to `rel` relative slack.
    pub fn sandwich_holds(&self, n: usize, rel: f64) -> bool {
        let nf = n as f64;
        let scale = self.b_n.abs().max(nf * self.a_n.abs()).max(f64::MIN_POSITIVE);
        nf * self.a_n - self.b_n <= rel * scale && self.b_n - 2.0 * nf * self.a_n <= rel * scale
    }
}

pub fn an_bn(x: &StateVector) -> AnBn {
    let n = x.n() as f64;
    let xs = x.as_slice();
    let c = x.norm() / n.sqrt();
    let mean = xs.iter().sum::<f64>() / n;
    let centred: f64 = xs.iter().map(|v| (v - mean) * (v - mean)).sum();
    // c − mean = var/(c + mean), which keeps A_n accurate near consensus.
    let offset = if c + mean > 0.0 {
        centred / n / (c + mean)
    } else {
        c - mean
    };
    let a_n = xs.iter().map(|v| (v - mean - offset) * (v - mean - offset)).sum();
    // Σ_{i,j}(x_i − x_j)² = 2n Σ (x_i − x̄)².
    let b_n = 2.0 * n * centred;
    AnBn { a_n, b_n }
}

/// Certified linear bounds on the diameter function `α` over `[0, ε₀]`.
///
/// `α'` decreases and then increases in `γ` (its denominator is concave in
/// `u = 1 − √n γ`), so its extremes over an interval are available in closed
/// form. The grid fields are plain samples of `α(γ)/γ` kept for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiameterConstants {
    pub n: usize,
    pub eps0: f64,
    /// `min α'` on `[0, ε₀]`; also a lower bound for `α(γ)/γ`.
    pub slope_min: f64,
    /// `k₁ = slope_min`.
    pub k1: f64,
    /// `k₂ = max(α'(0), α'(ε₀)) ≥ α(γ)/γ`.
    pub k2: f64,
    pub k1_grid: f64,
    pub k2_grid: f64,
}

impl DiameterConstants {
    pub fn certify(n: usize, eps0: f64, grid_points: usize) -> Result<Self> {
        let cone = Cone::new(n, eps0)?;
        if eps0 <= 0.0 {
            return Err(Error::param("eps0", eps0, "must be > 0"));
        }
        let nf = n as f64;
        let u_min = 1.0 - nf.sqrt() * cone.gamma;
        let u_star = (nf / (3.0 * (nf - 1.0))).sqrt();
        let mut g_max = slope_denominator(nf, 1.0).max(slope_denominator(nf, u_min));
        if u_star > u_min && u_star < 1.0 {
            g_max = g_max.max(slope_denominator(nf, u_star));
        }
        let slope_min = 2.0 * nf * nf.sqrt() / g_max;
        let k2 = diameter_slope(n, 0.0).max(diameter_slope(n, eps0));

        let mut k1_grid = diameter_slope(n, 0.0);
        let mut k2_grid = k1_grid;
        for i in 1..=grid_points.max(1) {
            let g = eps0 * i as f64 / grid_points.max(1) as f64;
            let ratio = diameter_formula(n, g) / g;
            k1_grid = k1_grid.min(ratio);
            k2_grid = k2_grid.max(ratio);
        }
        Ok(Self {
            n,
            eps0,
            slope_min,
            k1: slope_min,
            k2,
            k1_grid,
            k2_grid,
        })
    }

    /// Factor `k` with `α(Cγ) ≤ k α(γ)` on `[0, ε₀]`:
    /// `k = 1 / (1 + (1 − C) α'_min / (k₂ C))`.
    pub fn contraction_factor(&self, c: f64) -> f64 {
        if c <= 0.0 {
            return 0.0;
        }
        1.0 / (1.0 + (1.0 - c) * self.slope_min / (self.k2 * c))
    }
}

/// Mixes `y` toward the consensus ray until the result lies in `cone`;
/// returns a unit vector.
pub fn project_into_cone(cone: &Cone, y: &[f64]) -> Vec<f64> {
    let n = cone.n;
    let centre = inv_sqrt(n);
    let ny = norm2(y);
    let dir: Vec<f64> = if ny > 0.0 {
        y.iter().map(|v| v / ny).collect()
    } else {
        vec![centre; n]
    };
    let mix = |s: f64| -> Vec<f64> {
        let v: Vec<f64> = dir.iter().map(|d| (1.0 - s) * centre + s * d).collect();
        let nv = norm2(&v);
        v.into_iter().map(|e| e / nv).collect()
    };
    let inside = |v: &[f64]| raw_gamma(v) <= cone.gamma;
    let full = mix(1.0);
    if inside(&full) {
        return full;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if inside(&mix(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mix(lo)
}

/// Unit rays with `|S|` entries on the floor `1/√n − γ` and the rest equal,
/// for every nonempty proper subset `S`. These are the extreme rays that
/// realise the diameter.
pub fn cone_corner_rays(cone: &Cone) -> Vec<Vec<f64>> {
    let n = cone.n;
    let floor = cone.floor();
    let mut out = Vec::new();
    for mask in 1u64..(1u64 << n) - 1 {
        let k = mask.count_ones() as usize;
        let rest = ((1.0 - k as f64 * floor * floor) / (n - k) as f64).sqrt();
        out.push((0..n).map(|i| if mask >> i & 1 == 1 { floor } else { rest }).collect());
    }
    out
}

/// Draws a unit ray of `cone`: a third of the draws are jittered corner
/// rays, a third lie on the boundary, a third in the interior.
pub fn sample_cone_ray<R: Rng + ?Sized>(cone: &Cone, rng: &mut R) -> Vec<f64> {
    let n = cone.n;
    match rng.random_range(0..3u8) {
        0 => {
            let floor = cone.floor();
            let mut mask = 0u64;
            while mask == 0 || mask == (1u64 << n) - 1 {
                mask = rng.random_range(1..(1u64 << n) - 1);
            }
            let k = mask.count_ones() as usize;
            let rest = ((1.0 - k as f64 * floor * floor) / (n - k) as f64).sqrt();
            let jitter = 10f64.powf(rng.random_range(-8.0..-1.0));
            let y: Vec<f64> = (0..n)
                .map(|i| {
                    let base = if mask >> i & 1 == 1 { floor } else { rest };
                    base * (1.0 + jitter * rng.random_range(-1.0..1.0))
                })
                .collect();
            project_into_cone(cone, &y)
        }
        1 => project_into_cone(cone, &random_direction(n, rng)),
        _ => {
            let boundary = project_into_cone(cone, &random_direction(n, rng));
            let s: f64 = rng.random();
            let centre = inv_sqrt(n);
            let v: Vec<f64> = boundary.iter().map(|b| (1.0 - s) * centre + s * b).collect();
            let nv = norm2(&v);
            v.into_iter().map(|e| e / nv).collect()
        }
    }
}

/// Nonnegative direction with a heavy tail toward the coordinate axes.
fn random_direction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let p = rng.random_range(1.0..4.0);
    (0..n).map(|_| rng.random::<f64>().powf(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn sv(v: &[f64]) -> StateVector {
        StateVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn distance_examples() {
        let d = hilbert_distance(&sv(&[1.0, 2.0]), &sv(&[1.0, 1.0])).unwrap();
        assert!((d.value() - 2f64.ln()).abs() < 1e-15);
        let d = hilbert_distance(&sv(&[3.0, 3.0, 3.0]), &sv(&[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(d.value(), 0.0);
        let d = hilbert_distance(&sv(&[1.0, 2.0]), &sv(&[2.0, 1.0])).unwrap();
        assert!((d.value() - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn distance_degenerates_to_infinity() {
        let d = hilbert_distance(&sv(&[0.0, 1.0]), &sv(&[1.0, 1.0])).unwrap();
        assert!(!d.is_finite());
        let d = hilbert_distance(&sv(&[-1.0, 1.0]), &sv(&[1.0, 1.0])).unwrap();
        assert_eq!(d, HilbertDistance::INFINITE);
        assert!(hilbert_distance(&sv(&[1.0, 1.0]), &sv(&[1.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn consensus_distance_examples() {
        assert_eq!(distance_to_consensus(&sv(&[5.0; 4])).value(), 0.0);
        let e = std::f64::consts::E;
        assert!((distance_to_consensus(&sv(&[1.0, e])).value() - 1.0).abs() < 1e-15);
        assert!((distance_to_consensus(&sv(&[2.0, 4.0, 8.0])).value() - 4f64.ln()).abs() < 1e-15);
        assert!(!distance_to_consensus(&sv(&[0.0, 1.0])).is_finite());
    }

    #[test]
    fn state_vector_needs_two_agents() {
        assert!(StateVector::new(vec![1.0]).is_err());
    }

    #[test]
    fn membership_examples() {
        let c0 = Cone::new(2, 0.0).unwrap();
        assert!(cone_membership(&sv(&[1.0, 1.0]), &c0).unwrap());
        assert!(cone_membership(&sv(&[3.0, 3.0, 3.0]), &Cone::new(3, 0.0).unwrap()).unwrap());
        assert!(!cone_membership(&sv(&[1.0, 0.0]), &Cone::new(2, 0.1).unwrap()).unwrap());
        assert!(cone_membership(&sv(&[3.0, 4.0]), &Cone::new(2, 0.11).unwrap()).unwrap());
        assert!(cone_membership(&sv(&[0.0, 0.0]), &c0).unwrap());
        assert!(cone_membership(&sv(&[1.0, 1.0, 1.0]), &c0).is_err());
    }

    #[test]
    fn minimal_gamma_examples() {
        assert_eq!(minimal_gamma(&sv(&[1.0, 1.0, 1.0])).unwrap().value, 0.0);
        let g = minimal_gamma(&sv(&[3.0, 4.0])).unwrap();
        assert!((g.value - (0.5f64.sqrt() - 0.6)).abs() < 1e-15);
        assert!(!g.boundary);
        let g = minimal_gamma(&sv(&[1.0, 0.0])).unwrap();
        assert!((g.value - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(g.boundary);
        assert!(matches!(
            minimal_gamma(&sv(&[1.0, -1.0])),
            Err(Error::NegativeEntry { index: 1, .. })
        ));
        assert!(matches!(minimal_gamma(&sv(&[0.0, 0.0])), Err(Error::ZeroVector)));
    }

    #[test]
    fn cone_rejects_gamma_outside_range() {
        assert!(Cone::new(2, -0.1).is_err());
        assert!(Cone::new(4, 0.5).is_err());
        assert!(Cone::new(4, 0.5 * (1.0 - 1e-10)).is_err());
        assert!(Cone::new(4, 0.49).is_ok());
        assert!(Cone::new(1, 0.0).is_err());
    }

    #[test]
    fn diameter_examples() {
        assert_eq!(Cone::new(2, 0.0).unwrap().diameter(), 0.0);
        // ln(-1 + 2/(1 - 0.2√2)^2), evaluated directly
        let u: f64 = 1.0 - 0.2 * 2f64.sqrt();
        let direct = (-1.0 + 2.0 / (u * u)).ln();
        let d = Cone::new(2, 0.2).unwrap().diameter();
        assert!((d - direct).abs() < 1e-14);
        assert!((d - 1.060_796_4).abs() < 1e-6, "{d}");
        // monotone divergence toward 1/√n
        let mut last = 0.0;
        for g in [0.1, 0.3, 0.45, 0.49, 0.499, 0.4999] {
            let d = Cone::new(4, g).unwrap().diameter();
            assert!(d > last);
            last = d;
        }
        assert!(last > 8.0);
    }

    #[test]
    fn diameter_is_realised_by_corner_rays() {
        for (n, g) in [(2, 0.2), (3, 0.1), (3, 0.3), (5, 0.25)] {
            let cone = Cone::new(n, g).unwrap();
            let corners = cone_corner_rays(&cone);
            let mut sup: f64 = 0.0;
            for a in &corners {
                for b in &corners {
                    sup = sup.max(ratio_distance(a, b).value());
                }
            }
            assert!((sup - cone.diameter()).abs() < 1e-12, "n={n} g={g}");
        }
    }

    #[test]
    fn contraction_constant_examples() {
        assert_eq!(contraction_constant(3, 1.0, 0.3).unwrap(), 0.0);
        // 0.7 / (1 - 0.15√2)
        let c = contraction_constant(2, 0.3, 0.5).unwrap();
        assert!((c - 0.888_473_0).abs() < 1e-6, "{c}");
        let c = contraction_constant(2, 1e-9, 0.5).unwrap();
        assert!((1.0 - c).abs() < 1e-8);
        assert!(contraction_constant(2, 0.0, 0.5).is_err());
        assert!(contraction_constant(2, 1.1, 0.5).is_err());
        assert!(contraction_constant(2, 0.5, 0.75).is_err());
        assert!(contraction_constant(1, 0.5, 0.5).is_err());
    }

    #[test]
    fn norm_metric_examples() {
        let x = sv(&[1.0, 2.0]);
        let b = norm_metric_bounds(&x, &x, 0.3).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));

        let b = norm_metric_bounds(&sv(&[1.0, 2.0]), &sv(&[1.0, 1.0]), 0.0).unwrap();
        assert!((b.upper - 1.0).abs() < 1e-14);
        // |(1,2)/√5 − (1,1)/√2| by hand
        let gap = ((1.0 / 5f64.sqrt() - 0.5f64.sqrt()).powi(2) + (2.0 / 5f64.sqrt() - 0.5f64.sqrt()).powi(2)).sqrt();
        assert!((b.gap - gap).abs() < 1e-15);
        assert!((b.gap - 0.320_364).abs() < 1e-6);
        assert!(b.gap <= b.upper);
        assert!((b.x_norm - 5f64.sqrt()).abs() < 1e-15);

        let b = norm_metric_bounds(&sv(&[0.0, 1.0]), &sv(&[1.0, 1.0]), 0.5).unwrap();
        assert!(b.upper.is_infinite());
        assert_eq!(b.lower, 0.5);
    }

    #[test]
    fn analytic_comparison_constant_is_valid() {
        let mut rng = stream(3, "t");
        for (n, g) in [(2, 0.3), (3, 0.2), (5, 0.3)] {
            let cone = Cone::new(n, g).unwrap();
            let c = analytic_comparison_constant(&cone);
            for _ in 0..5000 {
                let x = sample_cone_ray(&cone, &mut rng);
                let w = sample_cone_ray(&cone, &mut rng);
                let b = norm_metric_bounds(&StateVector::new(x).unwrap(), &StateVector::new(w).unwrap(), c).unwrap();
                assert!(b.holds(), "{b:?}");
            }
        }
    }

    #[test]
    fn calibrated_constant_dominates_analytic_and_holds() {
        let cone = Cone::new(3, 0.25).unwrap();
        let c = calibrate_comparison_constant(&cone, 20_000, 1);
        assert!(c >= analytic_comparison_constant(&cone));
        let mut rng = stream(99, "fresh");
        for _ in 0..20_000 {
            let x = StateVector::new(sample_cone_ray(&cone, &mut rng)).unwrap();
            let w = StateVector::new(sample_cone_ray(&cone, &mut rng)).unwrap();
            let b = norm_metric_bounds(&x, &w, c).unwrap();
            assert!(b.holds(), "{b:?}");
            assert!(b.upper.is_finite());
        }
    }

    #[test]
    fn an_bn_examples() {
        let r = an_bn(&sv(&[1.0, 1.0, 1.0]));
        assert!(r.a_n.abs() < 1e-30 && r.b_n == 0.0);
        let r = an_bn(&sv(&[1.0, 0.0]));
        assert!((r.a_n - (2.0 - 2f64.sqrt())).abs() < 1e-15);
        assert!((r.b_n - 2.0).abs() < 1e-15);
        assert!(r.sandwich_holds(2, 1e-12));
    }

    #[test]
    fn diameter_constants_bracket_grid() {
        for n in 2..=8 {
            let eps0 = 0.8 * inv_sqrt(n);
            let k = DiameterConstants::certify(n, eps0, 10_000).unwrap();
            assert!(k.k1 <= k.k1_grid + 1e-12);
            assert!(k.k2 >= k.k2_grid - 1e-12);
            for c in [0.3, 0.5, 0.9] {
                let kc = k.contraction_factor(c);
                assert!(kc > 0.0 && kc < 1.0);
            }
        }
    }

    #[test]
    fn sampled_rays_lie_in_cone() {
        let mut rng = stream(5, "rays");
        for (n, g) in [(2, 0.1), (4, 0.4), (7, 0.05)] {
            let cone = Cone::new(n, g).unwrap();
            for _ in 0..2000 {
                let x = StateVector::new(sample_cone_ray(&cone, &mut rng)).unwrap();
                assert!(cone.contains(&x).unwrap());
                assert!((x.norm() - 1.0).abs() < 1e-12);
            }
        }
    }
}
