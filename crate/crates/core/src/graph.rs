//! Weighted digraphs carried by the off-diagonal of a Metzler matrix.
//!
//! Convention: `weights[i][j] = a_ij` is the influence of agent `j` on
//! agent `i`, so information travels `j → i`. Reachability for
//! quasi-strong connectivity follows that orientation; in a chain with
//! links `a_{i,i+1}` the root is the last agent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDigraph {
    weights: Matrix,
}

impl WeightedDigraph {
    pub fn empty(n: usize) -> Self {
        Self {
            weights: Matrix::zeros(n),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_matrix(Matrix::from_rows(rows)?)
    }

    /// Validates a zero diagonal and nonnegative, finite off-diagonal.
    pub fn from_matrix(weights: Matrix) -> Result<Self> {
        let n = weights.n();
        for i in 0..n {
            for j in 0..n {
                let w = weights[(i, j)];
                if i == j && w != 0.0 {
                    return Err(Error::param("weight", w, "diagonal of a digraph must be 0"));
                }
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(Error::param("weight", w, "link weights must be finite and >= 0"));
                }
            }
        }
        Ok(Self { weights })
    }

    /// Complete graph with every link weight equal to `w`.
    pub fn complete(n: usize, w: f64) -> Result<Self> {
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    g.set(i, j, w)?;
                }
            }
        }
        Ok(g)
    }

    /// Chain with `a_{i,i+1} = w` (agent `i` listens to agent `i+1`).
    pub fn chain(n: usize, w: f64) -> Result<Self> {
        let mut g = Self::empty(n);
        for i in 0..n.saturating_sub(1) {
            g.set(i, i + 1, w)?;
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.weights.n()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, w: f64) -> Result<()> {
        if i == j {
            return Err(Error::param("weight", w, "self loops are not allowed"));
        }
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::param("weight", w, "link weights must be finite and >= 0"));
        }
        self.weights[(i, j)] = w;
        Ok(())
    }

    pub fn matrix(&self) -> &Matrix {
        &self.weights
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            weights: self.weights.scale(s),
        }
    }

    /// `self + s·other`, elementwise.
    pub fn add_scaled(&mut self, other: &WeightedDigraph, s: f64) -> Result<()> {
        check_dims(self.n(), other.n())?;
        let n = self.n();
        for i in 0..n {
            for j in 0..n {
                self.weights[(i, j)] += s * other.weights[(i, j)];
            }
        }
        Ok(())
    }

    /// Directed links `(i, j)` with `weight(i, j) > tol`.
    pub fn links(&self, tol: f64) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = self.weights[(i, j)];
                if i != j && w > tol {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.links(0.0).is_empty()
    }

    /// Plain-text form: a header line `n=<int>` then one row per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("n={}\n", self.n());
        for row in self.weights.rows() {
            let cells: Vec<String> = row.iter().map(|w| format!("{w}")).collect();
            s.push_str(&cells.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing `n=<int>` header".into(),
        })?;
        let n: usize = header
            .strip_prefix("n=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Parse {
                line: hline,
                message: format!("expected `n=<int>`, found `{header}`"),
            })?;
        let mut rows = Vec::with_capacity(n);
        for (line, l) in lines {
            let row = l
                .split_whitespace()
                .map(|c| c.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    line,
                    message: e.to_string(),
                })?;
            if row.len() != n {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {n} entries, found {}", row.len()),
                });
            }
            rows.push(row);
        }
        if rows.len() != n {
            return Err(Error::Parse {
                line: hline,
                message: format!("expected {n} rows, found {}", rows.len()),
            });
        }
        Self::from_rows(&rows)
    }
}

fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Row-sum tolerance, relative to the largest magnitude in the row.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetzlerMatrix {
    entries: Matrix,
}

impl MetzlerMatrix {
    /// Checks nonnegative off-diagonal and `|Σ_j a_ij| ≤ 1e-12·max(1, max_j |a_ij|)`.
    pub fn new(entries: Matrix) -> Result<Self> {
        if let Some(msg) = metzler_violation(&entries) {
            return Err(Error::NotMetzler(msg));
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// `A = G − diag(G𝟙)`, the zero-row-sum matrix carried by `G`.
    pub fn from_digraph(g: &WeightedDigraph) -> Self {
        let n = g.n();
        let mut m = g.matrix().clone();
        for i in 0..n {
            let s: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)]).sum();
            m[(i, i)] = -s;
        }
        Self { entries: m }
    }

    pub fn n(&self) -> usize {
        self.entries.n()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }

    pub fn into_matrix(self) -> Matrix {
        self.entries
    }

    pub fn max_abs_diagonal(&self) -> f64 {
        (0..self.n()).map(|i| self.entries[(i, i)].abs()).fold(0.0, f64::max)
    }
}

/// Describes the first broken Metzler/zero-row-sum condition, if any.
pub fn metzler_violation(m: &Matrix) -> Option<String> {
    let n = m.n();
    for i in 0..n {
        let mut sum = 0.0;
        let mut scale: f64 = 1.0;
        for j in 0..n {
            let a = m[(i, j)];
            if !a.is_finite() {
                return Some(format!("entry ({i}, {j}) = {a} is not finite"));
            }
            if i != j && a < 0.0 {
                return Some(format!("off-diagonal entry ({i}, {j}) = {a} is negative"));
            }
            sum += a;
            scale = scale.max(a.abs());
        }
        if sum.abs() > ROW_SUM_TOL * scale {
            return Some(format!("row {i} sums to {sum}"));
        }
    }
    None
}

pub fn digraph_of_metzler(a: &MetzlerMatrix) -> WeightedDigraph {
    let mut w = a.matrix().clone();
    for i in 0..w.n() {
        w[(i, i)] = 0.0;
    }
    WeightedDigraph { weights: w }
}

/// Elementwise off-diagonal dominance `G1 ≥ G2`.
pub fn graph_geq(g1: &WeightedDigraph, g2: &WeightedDigraph) -> Result<bool> {
    check_dims(g1.n(), g2.n())?;
    let n = g1.n();
    Ok((0..n).all(|i| (0..n).all(|j| i == j || g1.weight(i, j) >= g2.weight(i, j))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Each sample holds until the next timestamp.
    #[default]
    LeftRectangle,
    /// Linear interpolation between consecutive samples.
    Trapezoid,
}

/// `∫_{t1}^{t2} G(t) dt` from timestamped samples.
///
/// Samples must have nondecreasing timestamps with the first at or before
/// `t1` and the last at or after `t2`.
pub fn accumulate(samples: &[(f64, WeightedDigraph)], t1: f64, t2: f64, rule: Quadrature) -> Result<WeightedDigraph> {
    if !(t1 < t2) {
        return Err(Error::param("t2", t2, "interval must satisfy t1 < t2"));
    }
    let (first, last) = match (samples.first(), samples.last()) {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => return Err(Error::CoverageGap { t1, t2 }),
    };
    if first > t1 || last < t2 {
        return Err(Error::CoverageGap { t1, t2 });
    }
    if samples.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(Error::GridMismatch("sample timestamps must be nondecreasing".into()));
    }
    let n = samples[0].1.n();
    for (_, g) in samples {
        check_dims(n, g.n())?;
    }
    let mut acc = WeightedDigraph::empty(n);
    for w in samples.windows(2) {
        let (ta, ga) = (&w[0].0, &w[0].1);
        let (tb, gb) = (&w[1].0, &w[1].1);
        let lo = ta.max(t1);
        let hi = tb.min(t2);
        if hi <= lo {
            continue;
        }
        match rule {
            Quadrature::LeftRectangle => acc.add_scaled(ga, hi - lo)?,
            Quadrature::Trapezoid => {
                // exact integral of the linear interpolant over [lo, hi]
                let span = tb - ta;
                let (s0, s1) = ((lo - ta) / span, (hi - ta) / span);
                let wb = 0.5 * (s1 * s1 - s0 * s0) * span;
                let wa = (hi - lo) - wb;
                acc.add_scaled(ga, wa)?;
                acc.add_scaled(gb, wb)?;
            }
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    QscSpanningTree,
    SingleHop,
    DeltaConnected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityCertificate {
    pub kind: CertificateKind,
    pub center: usize,
    pub margin: f64,
    /// For spanning-tree certificates, `parent[j]` is the agent `j` hears
    /// the center through; `None` at the center.
    pub parent: Option<Vec<Option<usize>>>,
}

impl ConnectivityCertificate {
    /// Checks the certificate against `g` independently of how it was found.
    pub fn validate(&self, g: &WeightedDigraph) -> bool {
        let n = g.n();
        if self.center >= n || !(self.margin > 0.0) {
            return false;
        }
        match self.kind {
            CertificateKind::SingleHop | CertificateKind::DeltaConnected => (0..n)
                .filter(|&i| i != self.center)
                .all(|i| g.weight(i, self.center) >= self.margin),
            CertificateKind::QscSpanningTree => {
                let Some(parent) = &self.parent else {
                    return false;
                };
                if parent.len() != n || parent[self.center].is_some() {
                    return false;
                }
                (0..n).filter(|&j| j != self.center).all(|j| {
                    // walk up the tree; must reach the center within n steps
                    let mut v = j;
                    for _ in 0..n {
                        let Some(p) = parent[v] else { return false };
                        if g.weight(v, p) < self.margin {
                            return false;
                        }
                        if p == self.center {
                            return true;
                        }
                        v = p;
                    }
                    false
                })
            }
        }
    }
}

/// Smallest `k` with `weights[i][k] ≥ δ` for every `i ≠ k`.
pub fn is_delta_connected(g: &WeightedDigraph, delta: f64) -> Option<ConnectivityCertificate> {
    column_center(g, |w| w >= delta).map(|(center, margin)| ConnectivityCertificate {
        kind: CertificateKind::DeltaConnected,
        center,
        margin,
        parent: None,
    })
}

/// Smallest `k` with `weights[i][k] > tol` for every `i ≠ k`.
pub fn single_hop_center(g: &WeightedDigraph, tol: f64) -> Option<ConnectivityCertificate> {
    column_center(g, |w| w > tol).map(|(center, margin)| ConnectivityCertificate {
        kind: CertificateKind::SingleHop,
        center,
        margin,
        parent: None,
    })
}

fn column_center(g: &WeightedDigraph, ok: impl Fn(f64) -> bool) -> Option<(usize, f64)> {
    let n = g.n();
    (0..n).find_map(|k| {
        let mut margin = f64::INFINITY;
        for i in (0..n).filter(|&i| i != k) {
            let w = g.weight(i, k);
            if !ok(w) {
                return None;
            }
            margin = margin.min(w);
        }
        margin.is_finite().then_some((k, margin))
    })
}

/// Quasi-strong connectivity in the spanning-tree sense: some agent `k`
/// whose information reaches every other agent. Weights `≤ tol` are
/// ignored. Returns the smallest such `k` with a breadth-first witness tree.
pub fn is_qsc(g: &WeightedDigraph, tol: f64) -> Option<ConnectivityCertificate> {
    let n = g.n();
    (0..n).find_map(|k| spanning_tree_from(g, k, tol))
}

fn spanning_tree_from(g: &WeightedDigraph, k: usize, tol: f64) -> Option<ConnectivityCertificate> {
    let n = g.n();
    let mut parent = vec![None; n];
    let mut seen = vec![false; n];
    seen[k] = true;
    let mut queue = std::collections::VecDeque::from([k]);
    let mut margin = f64::INFINITY;
    let mut reached = 1;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            // v listens to u
            let w = g.weight(v, u);
            if !seen[v] && v != u && w > tol {
                seen[v] = true;
                parent[v] = Some(u);
                margin = margin.min(w);
                reached += 1;
                queue.push_back(v);
            }
        }
    }
    (reached == n && n >= 2).then_some(ConnectivityCertificate {
        kind: CertificateKind::QscSpanningTree,
        center: k,
        margin,
        parent: Some(parent),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBound {
    pub m: usize,
    pub delta: f64,
    pub center: usize,
}

/// Smallest `m` such that `(λI + S)^m` has a strictly positive column,
/// with the smallest off-diagonal entry `δ` of the first such column.
pub fn power_delta_bound(s: &WeightedDigraph, lambda_floor: f64) -> Result<PowerBound> {
    if !(lambda_floor > 0.0 && lambda_floor.is_finite()) {
        return Err(Error::param("lambda_floor", lambda_floor, "must be finite and > 0"));
    }
    if is_qsc(s, 0.0).is_none() {
        return Err(Error::NotQsc);
    }
    let n = s.n();
    let mut base = s.matrix().clone();
    for i in 0..n {
        base[(i, i)] = lambda_floor;
    }
    let mut p = base.clone();
    for m in 1..n {
        let col = (0..n).find_map(|k| {
            let mut delta = f64::INFINITY;
            for i in 0..n {
                if p[(i, k)] <= 0.0 {
                    return None;
                }
                if i != k {
                    delta = delta.min(p[(i, k)]);
                }
            }
            Some((k, delta))
        });
        if let Some((center, delta)) = col {
            return Ok(PowerBound { m, delta, center });
        }
        p = p.matmul(&base);
    }
    // unreachable for a QSC graph: every path has length ≤ n − 1
    Err(Error::NotQsc)
}
