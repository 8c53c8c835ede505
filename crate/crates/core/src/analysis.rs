//! Predictions derived from the model alone, with no simulation involved.
//!
//! The condition value of a state is `c(θ) = Σ_l γ_l Σ_i π_i K_i^l(θ*,θ)`. It
//! is also the almost-sure limit of `ν_{i,t}^l(θ)/t` for every agent and
//! type. All agents learn `θ*` iff `c(θ) < 0` for every `θ ≠ θ*`. The limit
//! state does not depend on which state is called true: it minimises
//! `J(θ) = Σ_l γ_l Σ_i π_i D(f_i^l ‖ ℓ_i^l(·|θ))`, and `c(θ) = J(θ*) − J(θ)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::learning::LearningProblem;
use crate::network::{
    augment, augmented_stationary, stationary_distribution, stationary_of_matrix, Gamma,
    StationaryDistribution, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::signal_model::{
    build_k_ledger, check_identifiability, kl_divergence, KLedger, SignalModel,
};

/// `|c(θ)|` at or below this counts as zero (boundary of the learning
/// condition); also the tie tolerance for the predicted limit.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;
/// Allowed gap between `(γ_1π, …, γ_pπ)` and power iteration on Ã.
pub const LIFT_CHECK_TOLERANCE: f64 = 1e-8;

pub fn condition_values(
    ledger: &KLedger,
    pi: &StationaryDistribution,
    gamma: &Gamma,
) -> Result<Vec<f64>> {
    let (n, p, m) = ledger.dims();
    if pi.len() != n || gamma.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "ledger is {n}×{p}×{m}, π has {} entries, γ has {}",
            pi.len(),
            gamma.len()
        )));
    }
    Ok((0..m)
        .map(|theta| {
            (0..p)
                .map(|l| gamma[l] * (0..n).map(|i| pi[i] * ledger.get(i, l, theta)).sum::<f64>())
                .sum()
        })
        .collect())
}

/// `J(θ)` for every state.
pub fn group_objective(
    model: &SignalModel,
    pi: &StationaryDistribution,
    gamma: &Gamma,
) -> Result<Vec<f64>> {
    if pi.len() != model.n() || gamma.len() != model.p() {
        return Err(Error::DimensionMismatch(format!(
            "model is {}×{}, π has {} entries, γ has {}",
            model.n(),
            model.p(),
            pi.len(),
            gamma.len()
        )));
    }
    (0..model.m())
        .map(|theta| {
            let mut total = 0.0;
            for l in 0..model.p() {
                let mut s = 0.0;
                for i in 0..model.n() {
                    s +=
                        pi[i] * kl_divergence(model.generator(i, l), model.structure(i, l, theta))?;
                }
                total += gamma[l] * s;
            }
            Ok(total)
        })
        .collect()
}

/// Minimiser of the group objective together with its margin over the
/// runner-up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitPrediction {
    pub state: usize,
    /// `J(runner-up) − J(best)`; infinite with a single state.
    pub gap: f64,
}

/// `argmin J`; fails with [`Error::AmbiguousLimit`] when the best states tie
/// within [`BOUNDARY_TOLERANCE`].
pub fn predicted_limit(objective: &[f64]) -> Result<LimitPrediction> {
    let (best, gap) = objective_margin(objective)
        .ok_or_else(|| Error::DimensionMismatch("objective has no states".into()))?;
    if gap <= BOUNDARY_TOLERANCE {
        return Err(Error::AmbiguousLimit {
            states: tied_states(objective),
            tolerance: BOUNDARY_TOLERANCE,
        });
    }
    Ok(LimitPrediction { state: best, gap })
}

/// Lowest-index minimiser and its gap to the next best value.
pub fn objective_margin(objective: &[f64]) -> Option<(usize, f64)> {
    let best = (0..objective.len()).min_by(|&a, &b| objective[a].total_cmp(&objective[b]))?;
    let runner_up = objective
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != best)
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);
    Some((best, runner_up - objective[best]))
}

fn tied_states(objective: &[f64]) -> Vec<usize> {
    let min = objective.iter().copied().fold(f64::INFINITY, f64::min);
    (0..objective.len())
        .filter(|&k| objective[k] - min <= BOUNDARY_TOLERANCE)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub labels: Vec<String>,
    pub true_index: usize,
    pub gamma: Vec<f64>,
    /// Every γ_l strictly inside (0,1) (or a single type).
    pub gamma_interior: bool,
    pub pi: StationaryDistribution,
    pub pi_tilde: Vec<f64>,
    /// `‖(γ⊗π) − power iteration on Ã‖∞`.
    pub pi_tilde_deviation: f64,
    /// `ledger[i][l][θ] = K_i^l(θ*,θ)`.
    pub ledger: Vec<Vec<Vec<f64>>>,
    pub condition_values: Vec<f64>,
    /// `c(θ) < 0` for every `θ ≠ θ*`: all agents learn the true state.
    pub converges_to_truth: bool,
    /// States `θ ≠ θ*` with `|c(θ)|` within tolerance; no prediction is made
    /// for them.
    pub boundary_states: Vec<usize>,
    /// States `θ ≠ θ*` with `c(θ) > 0`.
    pub misleading_states: Vec<usize>,
    pub objective: Vec<f64>,
    pub objective_gap: f64,
    pub predicted_limit: Option<usize>,
    pub predicted_limit_label: Option<String>,
    /// Non-empty only when the predicted limit is ambiguous.
    pub tied_states: Vec<usize>,
    pub identifiability_set: Vec<usize>,
    pub globally_identifiable: bool,
    pub well_specified: bool,
}

pub fn build_report(problem: &LearningProblem) -> Result<AnalysisReport> {
    let LearningProblem {
        network,
        gamma,
        model,
        hypotheses,
    } = problem;
    let pi = stationary_distribution(network, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let aug = augment(network, gamma)?;
    let pi_tilde = augmented_stationary(&aug, &pi)?;
    let direct = stationary_of_matrix(aug.matrix(), DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let pi_tilde_deviation = pi_tilde
        .iter()
        .zip(&direct)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if pi_tilde_deviation > LIFT_CHECK_TOLERANCE {
        return Err(Error::InvariantViolation(format!(
            "lifted stationary distribution differs from power iteration on the augmented matrix by {pi_tilde_deviation:e}"
        )));
    }

    let ledger = build_k_ledger(model, hypotheses)?;
    let condition = condition_values(&ledger, &pi, gamma)?;
    let star = hypotheses.true_index();
    let others = || (0..hypotheses.m()).filter(move |&t| t != star);
    let converges_to_truth = others().all(|t| condition[t] < -BOUNDARY_TOLERANCE);
    let boundary_states = others()
        .filter(|&t| condition[t].abs() <= BOUNDARY_TOLERANCE)
        .collect();
    let misleading_states = others()
        .filter(|&t| condition[t] > BOUNDARY_TOLERANCE)
        .collect();

    let objective = group_objective(model, &pi, gamma)?;
    let (predicted, tied, gap) = match predicted_limit(&objective) {
        Ok(lp) => (Some(lp.state), vec![], lp.gap),
        Err(Error::AmbiguousLimit { states, .. }) => {
            let gap = objective_margin(&objective).map_or(0.0, |(_, g)| g);
            (None, states, gap)
        }
        Err(e) => return Err(e),
    };
    let ident: Vec<usize> = check_identifiability(model, hypotheses)?
        .into_iter()
        .collect();

    Ok(AnalysisReport {
        labels: hypotheses.labels().to_vec(),
        true_index: star,
        gamma: gamma.as_slice().to_vec(),
        gamma_interior: gamma.is_interior(),
        pi,
        pi_tilde,
        pi_tilde_deviation,
        ledger: ledger.nested(),
        condition_values: condition,
        converges_to_truth,
        boundary_states,
        misleading_states,
        objective_gap: gap,
        predicted_limit_label: predicted.map(|k| hypotheses.label(k).to_string()),
        predicted_limit: predicted,
        objective,
        tied_states: tied,
        globally_identifiable: ident == [star],
        identifiability_set: ident,
        well_specified: model.is_well_specified(hypotheses)?,
    })
}
