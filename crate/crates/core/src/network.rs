//! Directed communication graph, its row-stochastic weight matrix, the
//! eigenvector centrality π and the augmented multi-type matrix Ã.
//!
//! `a_ij` is the weight agent `i` places on agent `j`; a positive entry means
//! `j`'s belief reaches `i`. For `p` signal types with weights `γ`, the
//! augmented matrix has diagonal blocks `γ_l·A` and off-diagonal blocks
//! `γ_k·I` (block column `k`). Its stationary distribution is `(γ_1π, …, γ_pπ)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Row sums accepted by [`validate_network`].
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;
/// Weights at or below this are treated as absent edges.
pub const SUPPORT_THRESHOLD: f64 = 1e-15;
/// Stored rows sum to one within this.
pub const STORED_ROW_SUM_TOLERANCE: f64 = 1e-12;
/// Tolerance on `Σγ = 1`.
pub const GAMMA_SUM_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Network {
    weights: Matrix,
}

impl Network {
    pub fn n(&self) -> usize {
        self.weights.rows()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn matrix(&self) -> &Matrix {
        &self.weights
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.weights.to_rows()
    }

    /// Relabels agents: new agent `k` is old agent `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Network> {
        let n = self.n();
        let mut seen = vec![false; n];
        if perm.len() != n
            || perm
                .iter()
                .any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::DimensionMismatch(format!(
                "{perm:?} is not a permutation of 0..{n}"
            )));
        }
        let rows: Vec<Vec<f64>> = perm
            .iter()
            .map(|&pi| perm.iter().map(|&pj| self.weights[(pi, pj)]).collect())
            .collect();
        validate_network(&rows)
    }
}

/// Checks the communication assumptions and builds a [`Network`].
///
/// Rows within [`ROW_SUM_TOLERANCE`] of one are accepted; those off by more
/// than [`STORED_ROW_SUM_TOLERANCE`] are rescaled, the rest are kept verbatim so
/// that validation is idempotent.
pub fn validate_network(weights: &[Vec<f64>]) -> Result<Network> {
    let n = weights.len();
    if n == 0 {
        return Err(Error::NotSquare("no rows".into()));
    }
    for (i, row) in weights.iter().enumerate() {
        if row.len() != n {
            return Err(Error::NotSquare(format!(
                "row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
        for (j, &w) in row.iter().enumerate() {
            if !w.is_finite() || !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidWeight {
                    row: i,
                    col: j,
                    value: w,
                });
            }
        }
    }
    let mut m = Matrix::from_rows(weights);
    for i in 0..n {
        let sum: f64 = m.row(i).iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::NotRowStochastic { row: i, sum });
        }
        if (sum - 1.0).abs() > STORED_ROW_SUM_TOLERANCE {
            m.row_mut(i).iter_mut().for_each(|w| *w /= sum);
        }
    }
    let reachable = strongly_connected_count(&m, SUPPORT_THRESHOLD);
    if reachable != n {
        return Err(Error::NotStronglyConnected { reachable, n });
    }
    if !(0..n).any(|i| m[(i, i)] > SUPPORT_THRESHOLD) {
        return Err(Error::NoPositiveDiagonal);
    }
    Ok(Network { weights: m })
}

/// Number of nodes in the strongly connected component containing node 0,
/// on the digraph with an edge wherever `m[(i, j)] > threshold`.
///
/// Strong connectivity is equivalent to every node being reachable from node
/// 0 both in the graph and in its reverse.
fn strongly_connected_count(m: &Matrix, threshold: f64) -> usize {
    let n = m.rows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let w = if forward { m[(u, v)] } else { m[(v, u)] };
                if w > threshold && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    };
    let fwd = reach(true);
    let bwd = reach(false);
    fwd.iter().zip(&bwd).filter(|(a, b)| **a && **b).count()
}

/// Strong connectivity of the positivity pattern of any square matrix.
pub fn is_strongly_connected(m: &Matrix) -> bool {
    m.rows() > 0 && strongly_connected_count(m, SUPPORT_THRESHOLD) == m.rows()
}

/// Eigenvector centrality π with `πA = π`, `Σπ = 1`, all entries positive.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct StationaryDistribution(Vec<f64>);

impl StationaryDistribution {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Wraps an externally supplied vector after checking it is stationary for
    /// `net` within `tol`.
    pub fn checked(net: &Network, pi: Vec<f64>, tol: f64) -> Result<Self> {
        finish_stationary(net.matrix(), pi, tol)
    }
}

impl std::ops::Index<usize> for StationaryDistribution {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Power iteration on `A`; falls back to an exact linear solve when the
/// iteration budget runs out.
pub fn stationary_distribution(
    net: &Network,
    tol: f64,
    max_iter: usize,
) -> Result<StationaryDistribution> {
    stationary_of_matrix(net.matrix(), tol, max_iter).map(StationaryDistribution)
}

/// Stationary distribution of an arbitrary row-stochastic matrix, using the
/// same strategy as [`stationary_distribution`]. Entries are only required to
/// be non-negative, so reducible chains with a single recurrent class work.
pub fn stationary_of_matrix(m: &Matrix, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let residual = match linalg::power_iteration(m, tol, max_iter) {
        Ok(pi) => return Ok(pi),
        Err((_, residual)) => residual,
    };
    if let Some(mut pi) = linalg::solve_stationary(m) {
        let s: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|v| *v /= s);
        let r = linalg::stationarity_residual(m, &pi);
        if r <= tol && pi.iter().all(|&v| v >= -tol) {
            pi.iter_mut().for_each(|v| *v = v.max(0.0));
            return Ok(pi);
        }
        return Err(Error::ConvergenceFailure {
            residual: r.min(residual),
        });
    }
    Err(Error::ConvergenceFailure { residual })
}

/// Exact linear-solve route, exposed for cross-checking power iteration.
pub fn stationary_by_linear_solve(net: &Network) -> Result<StationaryDistribution> {
    let pi = linalg::solve_stationary(net.matrix()).ok_or(Error::ConvergenceFailure {
        residual: f64::INFINITY,
    })?;
    let s: f64 = pi.iter().sum();
    let pi = pi.into_iter().map(|v| v / s).collect();
    finish_stationary(net.matrix(), pi, 1e-10)
}

fn finish_stationary(m: &Matrix, pi: Vec<f64>, tol: f64) -> Result<StationaryDistribution> {
    if pi.len() != m.rows() {
        return Err(Error::DimensionMismatch(format!(
            "π has {} entries for {} agents",
            pi.len(),
            m.rows()
        )));
    }
    if let Some(v) = pi.iter().find(|v| v.is_nan() || **v <= 0.0) {
        return Err(Error::InvariantViolation(format!(
            "stationary distribution entry {v} is not strictly positive"
        )));
    }
    let r = linalg::stationarity_residual(m, &pi);
    if r > tol {
        return Err(Error::InvariantViolation(format!(
            "‖πA − π‖∞ = {r:e} exceeds {tol:e}"
        )));
    }
    Ok(StationaryDistribution(pi))
}

/// Per-signal-type aggregation weights `γ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Gamma(Vec<f64>);

impl Gamma {
    /// Weights strictly inside (0,1) summing to one. A single type with
    /// `γ = (1)` is also accepted (classic single-signal learning).
    pub fn new(gamma: Vec<f64>) -> Result<Self> {
        Self::check_common(&gamma)?;
        if gamma.len() == 1 {
            return Ok(Self(gamma));
        }
        if let Some(g) = gamma.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
            return Err(Error::InvalidGamma {
                reason: format!("entry {g} is outside (0,1)"),
                gamma,
            });
        }
        Ok(Self(gamma))
    }

    /// Admits boundary weights in [0,1], e.g. `(1, 0)` to run the model on one
    /// signal type while the others only receive that type's beliefs.
    pub fn relaxed(gamma: Vec<f64>) -> Result<Self> {
        Self::check_common(&gamma)?;
        if let Some(g) = gamma.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return Err(Error::InvalidGamma {
                reason: format!("entry {g} is outside [0,1]"),
                gamma,
            });
        }
        Ok(Self(gamma))
    }

    /// All weight on type `l` out of `p`.
    pub fn point_mass(p: usize, l: usize) -> Result<Self> {
        if l >= p {
            return Err(Error::InvalidGamma {
                gamma: vec![],
                reason: format!("type {l} out of range for {p} types"),
            });
        }
        let mut g = vec![0.0; p];
        g[l] = 1.0;
        Self::relaxed(g)
    }

    pub fn uniform(p: usize) -> Result<Self> {
        Self::new(vec![1.0 / p as f64; p])
    }

    fn check_common(gamma: &[f64]) -> Result<()> {
        if gamma.is_empty() {
            return Err(Error::InvalidGamma {
                gamma: vec![],
                reason: "at least one signal type required".into(),
            });
        }
        let sum: f64 = gamma.iter().sum();
        if !sum.is_finite() || (sum - 1.0).abs() > GAMMA_SUM_TOLERANCE {
            return Err(Error::InvalidGamma {
                gamma: gamma.to_vec(),
                reason: format!("entries sum to {sum}"),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// True unless some weight sits on the boundary of (0,1) with `p > 1`.
    pub fn is_interior(&self) -> bool {
        self.0.len() == 1 || self.0.iter().all(|&g| g > 0.0 && g < 1.0)
    }
}

impl std::ops::Index<usize> for Gamma {
    type Output = f64;
    fn index(&self, l: usize) -> &f64 {
        &self.0[l]
    }
}

/// The `np × np` matrix coupling the per-type belief networks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentedNetwork {
    n: usize,
    gamma: Gamma,
    weights: Matrix,
}

impl AugmentedNetwork {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.gamma.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn gamma(&self) -> &Gamma {
        &self.gamma
    }

    pub fn matrix(&self) -> &Matrix {
        &self.weights
    }
}

/// Assembles Ã. Index `l·n + i` is agent `i` on signal type `l`.
pub fn augment(net: &Network, gamma: &Gamma) -> Result<AugmentedNetwork> {
    let n = net.n();
    let p = gamma.len();
    let mut m = Matrix::zeros(n * p, n * p);
    for l in 0..p {
        for k in 0..p {
            for i in 0..n {
                if l == k {
                    for j in 0..n {
                        m[(l * n + i, k * n + j)] = gamma[l] * net.weight(i, j);
                    }
                } else {
                    m[(l * n + i, k * n + i)] = gamma[k];
                }
            }
        }
    }
    let dev = m.max_row_sum_deviation();
    if dev > GAMMA_SUM_TOLERANCE + ROW_SUM_TOLERANCE {
        return Err(Error::InvariantViolation(format!(
            "augmented matrix row sum deviates from 1 by {dev:e}"
        )));
    }
    Ok(AugmentedNetwork {
        n,
        gamma: gamma.clone(),
        weights: m,
    })
}

/// `(γ_1π, …, γ_pπ)`, verified to be stationary for Ã within 1e-10.
pub fn augmented_stationary(
    aug: &AugmentedNetwork,
    pi: &StationaryDistribution,
) -> Result<Vec<f64>> {
    if pi.len() != aug.n() {
        return Err(Error::DimensionMismatch(format!(
            "π has {} entries, augmented network has {} agents",
            pi.len(),
            aug.n()
        )));
    }
    let out: Vec<f64> = aug
        .gamma()
        .as_slice()
        .iter()
        .flat_map(|&g| pi.as_slice().iter().map(move |&v| g * v))
        .collect();
    let r = linalg::stationarity_residual(aug.matrix(), &out);
    if r > 1e-10 {
        return Err(Error::InvariantViolation(format!(
            "(γ⊗π)Ã deviates from γ⊗π by {r:e}"
        )));
    }
    Ok(out)
}
