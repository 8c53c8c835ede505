//! Belief dynamics. Each step has two stages. First, every agent aggregates
//! log-linearly over its neighbours' beliefs on the same signal type and
//! over its own beliefs on the other types. Then it applies a Bayesian update
//! with its fresh observation of that type.
//!
//! All beliefs are held as log-probabilities normalised by log-sum-exp.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{Gamma, Network};
use crate::rng::{self, StreamRng};
use crate::signal_model::{HypothesisSpace, Observation, SignalModel};

/// Tolerance on prior normalisation.
pub const PRIOR_SUM_TOLERANCE: f64 = 1e-9;

/// `log Σ exp(x)`, stable for large negative inputs.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn normalize_in_place(xs: &mut [f64]) {
    let z = log_sum_exp(xs);
    xs.iter_mut().for_each(|x| *x -= z);
}

/// Everything needed to simulate: graph, type weights, signal model and
/// hypotheses, with consistent dimensions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningProblem {
    pub network: Network,
    pub gamma: Gamma,
    pub model: SignalModel,
    pub hypotheses: HypothesisSpace,
}

impl LearningProblem {
    pub fn new(
        network: Network,
        gamma: Gamma,
        model: SignalModel,
        hypotheses: HypothesisSpace,
    ) -> Result<Self> {
        if network.n() != model.n() {
            return Err(Error::DimensionMismatch(format!(
                "network has {} agents, signal model {}",
                network.n(),
                model.n()
            )));
        }
        if gamma.len() != model.p() {
            return Err(Error::DimensionMismatch(format!(
                "{} signal-type weights for {} signal types",
                gamma.len(),
                model.p()
            )));
        }
        if hypotheses.m() != model.m() {
            return Err(Error::DimensionMismatch(format!(
                "{} hypotheses, signal model covers {} states",
                hypotheses.m(),
                model.m()
            )));
        }
        Ok(Self {
            network,
            gamma,
            model,
            hypotheses,
        })
    }

    pub fn with_gamma(&self, gamma: Gamma) -> Result<Self> {
        Self::new(
            self.network.clone(),
            gamma,
            self.model.clone(),
            self.hypotheses.clone(),
        )
    }

    pub fn n(&self) -> usize {
        self.network.n()
    }

    pub fn p(&self) -> usize {
        self.gamma.len()
    }

    pub fn m(&self) -> usize {
        self.hypotheses.m()
    }
}

/// Log-beliefs `log μ_{i,t}^l(θ)` for every agent, type and state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeliefState {
    n: usize,
    p: usize,
    m: usize,
    t: u64,
    log_beliefs: Vec<f64>,
}

impl BeliefState {
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.p, self.m)
    }

    #[inline]
    fn idx(&self, i: usize, l: usize) -> usize {
        (i * self.p + l) * self.m
    }

    pub fn log_belief(&self, i: usize, l: usize, theta: usize) -> f64 {
        self.log_beliefs[self.idx(i, l) + theta]
    }

    pub fn log_beliefs(&self, i: usize, l: usize) -> &[f64] {
        let s = self.idx(i, l);
        &self.log_beliefs[s..s + self.m]
    }

    pub fn belief(&self, i: usize, l: usize, theta: usize) -> f64 {
        self.log_belief(i, l, theta).exp()
    }

    /// `ν = log μ(θ) − log μ(reference)`.
    pub fn log_ratio(&self, i: usize, l: usize, theta: usize, reference: usize) -> f64 {
        self.log_belief(i, l, theta) - self.log_belief(i, l, reference)
    }

    /// Most believed state for (agent, type); lowest index on ties.
    pub fn argmax(&self, i: usize, l: usize) -> usize {
        let xs = self.log_beliefs(i, l);
        let mut best = 0;
        for (k, &x) in xs.iter().enumerate().skip(1) {
            if x > xs[best] {
                best = k;
            }
        }
        best
    }

    /// The state every agent on every type currently ranks first, if they agree.
    pub fn consensus_argmax(&self) -> Option<usize> {
        let first = self.argmax(0, 0);
        (0..self.n)
            .all(|i| (0..self.p).all(|l| self.argmax(i, l) == first))
            .then_some(first)
    }

    /// Largest `|log Σ_θ μ(θ)|` across (agent, type).
    pub fn max_normalization_error(&self) -> f64 {
        self.log_beliefs
            .chunks(self.m)
            .map(|c| log_sum_exp(c).abs())
            .fold(0.0, f64::max)
    }
}

/// Initial beliefs. `priors[i][l][θ]` must be strictly positive and sum to one
/// per (agent, type); defaults to uniform.
pub fn init_beliefs(
    hyp: &HypothesisSpace,
    n: usize,
    p: usize,
    priors: Option<&[Vec<Vec<f64>>]>,
) -> Result<BeliefState> {
    let m = hyp.m();
    if n == 0 || p == 0 {
        return Err(Error::DimensionMismatch(
            "need at least one agent and one signal type".into(),
        ));
    }
    let log_beliefs = match priors {
        None => vec![-(m as f64).ln(); n * p * m],
        Some(priors) => {
            if priors.len() != n || priors.iter().any(|r| r.len() != p) {
                return Err(Error::InvalidPrior(format!(
                    "prior grid must be {n} × {p} × {m}"
                )));
            }
            let mut out = Vec::with_capacity(n * p * m);
            for (i, per_type) in priors.iter().enumerate() {
                for (l, mu) in per_type.iter().enumerate() {
                    if mu.len() != m {
                        return Err(Error::InvalidPrior(format!(
                            "agent {i} type {l} prior has {} entries, expected {m}",
                            mu.len()
                        )));
                    }
                    if let Some(v) = mu.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                        return Err(Error::InvalidPrior(format!(
                            "agent {i} type {l} prior has non-positive mass {v}"
                        )));
                    }
                    let s: f64 = mu.iter().sum();
                    if (s - 1.0).abs() > PRIOR_SUM_TOLERANCE {
                        return Err(Error::InvalidPrior(format!(
                            "agent {i} type {l} prior sums to {s}"
                        )));
                    }
                    let start = out.len();
                    out.extend(mu.iter().map(|v| v.ln()));
                    normalize_in_place(&mut out[start..]);
                }
            }
            out
        }
    };
    Ok(BeliefState {
        n,
        p,
        m,
        t: 0,
        log_beliefs,
    })
}

/// Log-linear aggregation. For each (i, l, θ) the unnormalised value is
/// `γ_l Σ_j a_ij log μ_j^l(θ) + Σ_{k≠l} γ_k log μ_i^k(θ)`; the result is
/// renormalised per (i, l) and keeps the input's time index.
pub fn aggregate(state: &BeliefState, net: &Network, gamma: &Gamma) -> Result<BeliefState> {
    let (n, p, m) = state.dims();
    if net.n() != n || gamma.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "beliefs are {n} agents × {p} types, network has {} agents and γ has {} entries",
            net.n(),
            gamma.len()
        )));
    }
    let mut out = vec![0.0; n * p * m];
    for i in 0..n {
        for l in 0..p {
            let dst = &mut out[(i * p + l) * m..(i * p + l + 1) * m];
            let g = gamma[l];
            for j in 0..n {
                let w = g * net.weight(i, j);
                if w != 0.0 {
                    for (d, s) in dst.iter_mut().zip(state.log_beliefs(j, l)) {
                        *d += w * s;
                    }
                }
            }
            for k in (0..p).filter(|&k| k != l) {
                let w = gamma[k];
                if w != 0.0 {
                    for (d, s) in dst.iter_mut().zip(state.log_beliefs(i, k)) {
                        *d += w * s;
                    }
                }
            }
            normalize_in_place(dst);
        }
    }
    Ok(BeliefState {
        n,
        p,
        m,
        t: state.t,
        log_beliefs: out,
    })
}

/// One observation per (agent, type) for a single time step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationBatch {
    n: usize,
    p: usize,
    obs: Vec<Observation>,
}

impl ObservationBatch {
    /// `obs[i][l]`.
    pub fn new(obs: Vec<Vec<Observation>>) -> Result<Self> {
        let n = obs.len();
        let p = obs.first().map_or(0, Vec::len);
        if n == 0 || p == 0 || obs.iter().any(|r| r.len() != p) {
            return Err(Error::DimensionMismatch(
                "observation batch must be a non-empty n × p grid".into(),
            ));
        }
        Ok(Self {
            n,
            p,
            obs: obs.into_iter().flatten().collect(),
        })
    }

    pub fn get(&self, i: usize, l: usize) -> Observation {
        self.obs[i * self.p + l]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.p)
    }
}

/// Bayesian update of aggregated beliefs with one observation batch;
/// advances the time index by one.
pub fn bayes_update(
    aggregated: BeliefState,
    model: &SignalModel,
    obs: &ObservationBatch,
) -> Result<BeliefState> {
    let (n, p, m) = aggregated.dims();
    if obs.dims() != (n, p) || (model.n(), model.p(), model.m()) != (n, p, m) {
        return Err(Error::DimensionMismatch(format!(
            "beliefs {n}×{p}×{m}, observations {:?}, model {}×{}×{}",
            obs.dims(),
            model.n(),
            model.p(),
            model.m()
        )));
    }
    let mut next = aggregated;
    for i in 0..n {
        for l in 0..p {
            let s = obs.get(i, l);
            let start = (i * p + l) * m;
            let dst = &mut next.log_beliefs[start..start + m];
            for (d, fam) in dst.iter_mut().zip(model.structures_for(i, l)) {
                *d += fam.log_likelihood(s)?;
            }
            normalize_in_place(dst);
        }
    }
    next.t += 1;
    Ok(next)
}

/// Supplies one observation batch per time step.
pub trait ObservationSource {
    fn next_batch(&mut self, model: &SignalModel) -> Result<ObservationBatch>;
}

/// Draws from the generators `f_i^l`, one independent stream per
/// (agent, type) derived from `(seed, trial, i, l)`.
#[derive(Debug, Clone)]
pub struct GeneratorSampler {
    n: usize,
    p: usize,
    streams: Vec<StreamRng>,
}

impl GeneratorSampler {
    pub fn new(n: usize, p: usize, seed: u64, trial: u64) -> Self {
        let streams = (0..n)
            .flat_map(|i| (0..p).map(move |l| rng::signal_stream(seed, trial, i, l)))
            .collect();
        Self { n, p, streams }
    }

    pub fn for_model(model: &SignalModel, seed: u64, trial: u64) -> Self {
        Self::new(model.n(), model.p(), seed, trial)
    }
}

impl ObservationSource for GeneratorSampler {
    fn next_batch(&mut self, model: &SignalModel) -> Result<ObservationBatch> {
        if (model.n(), model.p()) != (self.n, self.p) {
            return Err(Error::DimensionMismatch(format!(
                "sampler built for {}×{}, model is {}×{}",
                self.n,
                self.p,
                model.n(),
                model.p()
            )));
        }
        let p = self.p;
        let obs = self
            .streams
            .iter_mut()
            .enumerate()
            .map(|(k, rng)| model.generator(k / p, k % p).sample(rng))
            .collect();
        Ok(ObservationBatch { n: self.n, p, obs })
    }
}

/// Replays a fixed observation sequence; fails once exhausted.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    batches: Vec<ObservationBatch>,
    cursor: usize,
}

impl ReplaySource {
    pub fn new(batches: Vec<ObservationBatch>) -> Self {
        Self { batches, cursor: 0 }
    }
}

impl ObservationSource for ReplaySource {
    fn next_batch(&mut self, _model: &SignalModel) -> Result<ObservationBatch> {
        let b = self.batches.get(self.cursor).cloned().ok_or_else(|| {
            Error::InvalidParameter(format!(
                "observation sequence exhausted after {} steps",
                self.batches.len()
            ))
        })?;
        self.cursor += 1;
        Ok(b)
    }
}

/// Draws `steps` batches up front, e.g. to feed identical sequences to
/// several learners.
pub fn draw_batches(
    model: &SignalModel,
    source: &mut dyn ObservationSource,
    steps: usize,
) -> Result<Vec<ObservationBatch>> {
    (0..steps).map(|_| source.next_batch(model)).collect()
}

/// Aggregation followed by a Bayesian update on the next observation batch.
pub fn step(
    state: &BeliefState,
    problem: &LearningProblem,
    source: &mut dyn ObservationSource,
) -> Result<BeliefState> {
    let obs = source.next_batch(&problem.model)?;
    let aggregated = aggregate(state, &problem.network, &problem.gamma)?;
    bayes_update(aggregated, &problem.model, &obs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceCriterion {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_window")]
    pub window: u64,
}

fn default_threshold() -> f64 {
    0.99
}

fn default_window() -> u64 {
    50
}

impl Default for ConvergenceCriterion {
    fn default() -> Self {
        Self {
            threshold: default_threshold(),
            window: default_window(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub horizon: u64,
    pub record_stride: u64,
    pub convergence: ConvergenceCriterion,
}

impl RunOptions {
    pub fn new(horizon: u64) -> Self {
        Self {
            horizon,
            record_stride: 1,
            convergence: ConvergenceCriterion::default(),
        }
    }

    pub fn with_stride(mut self, stride: u64) -> Self {
        self.record_stride = stride;
        self
    }
}

/// Whether every agent on every type held more than `threshold` belief on the
/// true state, and for how long.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub threshold: f64,
    pub window: u64,
    /// First step at which the threshold held.
    pub first_reached: Option<u64>,
    /// The threshold held on each of the final `window` steps.
    pub sustained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub true_index: usize,
    /// Recorded every `record_stride` steps from t = 0; the final state is
    /// always included.
    pub states: Vec<BeliefState>,
    pub convergence: ConvergenceReport,
}

impl Trajectory {
    pub fn final_state(&self) -> &BeliefState {
        self.states.last().expect("trajectory records t = 0")
    }

    /// `(t, ν_{i,t}^l(θ)/t)` for each recorded `t ≥ 1`, with `ν` taken
    /// against the true state.
    pub fn rate_series(&self, i: usize, l: usize, theta: usize) -> Vec<(u64, f64)> {
        self.states
            .iter()
            .filter(|s| s.t() > 0)
            .map(|s| {
                (
                    s.t(),
                    s.log_ratio(i, l, theta, self.true_index) / s.t() as f64,
                )
            })
            .collect()
    }
}

fn all_above(state: &BeliefState, theta: usize, log_threshold: f64) -> bool {
    let (n, p, _) = state.dims();
    (0..n).all(|i| (0..p).all(|l| state.log_belief(i, l, theta) > log_threshold))
}

/// Iterates [`step`] from uniform priors up to `opts.horizon`.
pub fn run(
    problem: &LearningProblem,
    opts: &RunOptions,
    source: &mut dyn ObservationSource,
) -> Result<Trajectory> {
    let init = init_beliefs(&problem.hypotheses, problem.n(), problem.p(), None)?;
    run_from(init, problem, opts, source)
}

pub fn run_from(
    init: BeliefState,
    problem: &LearningProblem,
    opts: &RunOptions,
    source: &mut dyn ObservationSource,
) -> Result<Trajectory> {
    if opts.horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    if opts.record_stride == 0 {
        return Err(Error::InvalidParameter(
            "record stride must be at least 1".into(),
        ));
    }
    let c = opts.convergence;
    if !(c.threshold > 0.0 && c.threshold < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "convergence threshold {} must lie in (0,1)",
            c.threshold
        )));
    }
    let star = problem.hypotheses.true_index();
    let log_thr = c.threshold.ln();

    let mut state = init;
    let mut states = vec![state.clone()];
    let mut first_reached = None;
    let mut last_miss: Option<u64> = None;
    let mut track = |s: &BeliefState| {
        if all_above(s, star, log_thr) {
            first_reached.get_or_insert(s.t());
        } else {
            last_miss = Some(s.t());
        }
    };
    track(&state);
    for _ in 0..opts.horizon {
        state = step(&state, problem, source)?;
        track(&state);
        if state.t().is_multiple_of(opts.record_stride) || state.t() == opts.horizon {
            states.push(state.clone());
        }
    }
    let start_t = states[0].t();
    let end_t = state.t();
    let sustained = match last_miss {
        None => end_t - start_t + 1 >= c.window,
        Some(miss) => end_t - miss >= c.window,
    };
    Ok(Trajectory {
        true_index: star,
        states,
        convergence: ConvergenceReport {
            threshold: c.threshold,
            window: c.window,
            first_reached,
            sustained,
        },
    })
}

/// Runs to `horizon` and returns only the final state.
pub fn simulate_final(
    problem: &LearningProblem,
    horizon: u64,
    source: &mut dyn ObservationSource,
) -> Result<BeliefState> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let mut state = init_beliefs(&problem.hypotheses, problem.n(), problem.p(), None)?;
    for _ in 0..horizon {
        state = step(&state, problem, source)?;
    }
    Ok(state)
}
