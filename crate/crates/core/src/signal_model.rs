//! Hypotheses, per-agent per-type signal structures `ℓ_i^l(·|θ)`, the true
//! generators `f_i^l`, and the KL ledger
//! `K_i^l(θ*,θ) = D(f_i^l ‖ ℓ_i^l(·|θ*)) − D(f_i^l ‖ ℓ_i^l(·|θ))`.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elementwise tolerance for comparing categorical masses.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisSpace {
    labels: Vec<String>,
    true_index: usize,
}

impl HypothesisSpace {
    pub fn new(labels: Vec<String>, true_index: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidHypotheses("no states".into()));
        }
        if true_index >= labels.len() {
            return Err(Error::InvalidHypotheses(format!(
                "true index {true_index} out of range for {} states",
                labels.len()
            )));
        }
        let unique: BTreeSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(Error::InvalidHypotheses("labels must be unique".into()));
        }
        Ok(Self { labels, true_index })
    }

    pub fn m(&self) -> usize {
        self.labels.len()
    }

    pub fn true_index(&self) -> usize {
        self.true_index
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, k: usize) -> &str {
        &self.labels[k]
    }

    pub fn with_true_index(&self, true_index: usize) -> Result<Self> {
        Self::new(self.labels.clone(), true_index)
    }
}

/// One observation: a real value, or an index into a categorical alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Observation {
    Real(f64),
    Symbol(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LikelihoodFamily {
    Gaussian {
        mean: f64,
        std: f64,
    },
    Categorical {
        symbols: Vec<String>,
        probs: Vec<f64>,
    },
}

impl LikelihoodFamily {
    pub fn gaussian(mean: f64, std: f64) -> Result<Self> {
        let f = LikelihoodFamily::Gaussian { mean, std };
        f.validate()?;
        Ok(f)
    }

    pub fn categorical<S: Into<String>>(symbols: Vec<S>, probs: Vec<f64>) -> Result<Self> {
        let f = LikelihoodFamily::Categorical {
            symbols: symbols.into_iter().map(Into::into).collect(),
            probs,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LikelihoodFamily::Gaussian { mean, std } => {
                if !mean.is_finite() || !std.is_finite() || *std <= 0.0 {
                    return Err(Error::InvalidFamily(format!(
                        "gaussian needs finite mean and positive std, got N({mean}, {std}²)"
                    )));
                }
            }
            LikelihoodFamily::Categorical { symbols, probs } => {
                if symbols.is_empty() || symbols.len() != probs.len() {
                    return Err(Error::InvalidFamily(format!(
                        "categorical has {} symbols and {} masses",
                        symbols.len(),
                        probs.len()
                    )));
                }
                if symbols.iter().collect::<BTreeSet<_>>().len() != symbols.len() {
                    return Err(Error::InvalidFamily("duplicate categorical symbol".into()));
                }
                if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
                    return Err(Error::InvalidFamily(format!(
                        "categorical masses must be strictly positive, got {p}"
                    )));
                }
                let s: f64 = probs.iter().sum();
                if (s - 1.0).abs() > MASS_TOLERANCE {
                    return Err(Error::InvalidFamily(format!(
                        "categorical masses sum to {s}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// True when both families have the same kind and support, so
    /// log-likelihood ratios between them are defined.
    pub fn same_support(&self, other: &LikelihoodFamily) -> bool {
        match (self, other) {
            (LikelihoodFamily::Gaussian { .. }, LikelihoodFamily::Gaussian { .. }) => true,
            (
                LikelihoodFamily::Categorical { symbols: a, .. },
                LikelihoodFamily::Categorical { symbols: b, .. },
            ) => a == b,
            _ => false,
        }
    }

    /// Exact parameter equality for Gaussians, masses within
    /// [`MASS_TOLERANCE`] for categoricals.
    pub fn identical(&self, other: &LikelihoodFamily) -> bool {
        match (self, other) {
            (
                LikelihoodFamily::Gaussian { mean: m1, std: s1 },
                LikelihoodFamily::Gaussian { mean: m2, std: s2 },
            ) => m1 == m2 && s1 == s2,
            (
                LikelihoodFamily::Categorical {
                    symbols: a,
                    probs: p,
                },
                LikelihoodFamily::Categorical {
                    symbols: b,
                    probs: q,
                },
            ) => {
                a == b
                    && p.iter()
                        .zip(q)
                        .all(|(x, y)| (x - y).abs() <= MASS_TOLERANCE)
            }
            _ => false,
        }
    }

    /// Looks up a categorical symbol.
    pub fn symbol(&self, label: &str) -> Result<Observation> {
        match self {
            LikelihoodFamily::Categorical { symbols, .. } => symbols
                .iter()
                .position(|s| s == label)
                .map(Observation::Symbol)
                .ok_or_else(|| Error::UnsupportedObservation(format!("symbol {label:?}"))),
            LikelihoodFamily::Gaussian { .. } => Err(Error::UnsupportedObservation(format!(
                "symbol {label:?} for a gaussian family"
            ))),
        }
    }

    /// Human-readable rendering of an observation from this family.
    pub fn describe(&self, obs: Observation) -> String {
        match (self, obs) {
            (LikelihoodFamily::Categorical { symbols, .. }, Observation::Symbol(k))
                if k < symbols.len() =>
            {
                symbols[k].clone()
            }
            (_, Observation::Real(x)) => format!("{x}"),
            (_, Observation::Symbol(k)) => format!("#{k}"),
        }
    }

    pub fn log_likelihood(&self, obs: Observation) -> Result<f64> {
        match (self, obs) {
            (LikelihoodFamily::Gaussian { mean, std }, Observation::Real(x)) => {
                let z = (x - mean) / std;
                Ok(-0.5 * (2.0 * PI).ln() - std.ln() - 0.5 * z * z)
            }
            (LikelihoodFamily::Categorical { probs, .. }, Observation::Symbol(k))
                if k < probs.len() =>
            {
                Ok(probs[k].ln())
            }
            _ => Err(Error::UnsupportedObservation(self.describe(obs))),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Observation {
        match self {
            LikelihoodFamily::Gaussian { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                Observation::Real(mean + std * z)
            }
            LikelihoodFamily::Categorical { probs, .. } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (k, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return Observation::Symbol(k);
                    }
                }
                Observation::Symbol(probs.len() - 1)
            }
        }
    }
}

/// `D(p ‖ q)` in closed form.
pub fn kl_divergence(p: &LikelihoodFamily, q: &LikelihoodFamily) -> Result<f64> {
    let d = match (p, q) {
        (
            LikelihoodFamily::Gaussian { mean: mp, std: sp },
            LikelihoodFamily::Gaussian { mean: mq, std: sq },
        ) => (sq / sp).ln() + (sp * sp + (mp - mq).powi(2)) / (2.0 * sq * sq) - 0.5,
        (
            LikelihoodFamily::Categorical {
                symbols: a,
                probs: pp,
            },
            LikelihoodFamily::Categorical {
                symbols: b,
                probs: qq,
            },
        ) if a == b => pp.iter().zip(qq).map(|(x, y)| x * (x / y).ln()).sum(),
        _ => {
            return Err(Error::FamilyMismatch(format!(
                "cannot compare {} with {}",
                p.kind_name(),
                q.kind_name()
            )))
        }
    };
    Ok(d.max(0.0))
}

impl LikelihoodFamily {
    fn kind_name(&self) -> &'static str {
        match self {
            LikelihoodFamily::Gaussian { .. } => "gaussian",
            LikelihoodFamily::Categorical { .. } => "categorical",
        }
    }
}

/// Structures for every (agent, type, state) and generators for every
/// (agent, type).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalModel {
    n: usize,
    p: usize,
    m: usize,
    structures: Vec<LikelihoodFamily>,
    generators: Vec<LikelihoodFamily>,
}

impl SignalModel {
    /// `structures[i][l][θ]`, `generators[i][l]`.
    pub fn new(
        structures: Vec<Vec<Vec<LikelihoodFamily>>>,
        generators: Vec<Vec<LikelihoodFamily>>,
    ) -> Result<Self> {
        let n = structures.len();
        if n == 0 {
            return Err(Error::DimensionMismatch(
                "signal model has no agents".into(),
            ));
        }
        let p = structures[0].len();
        if p == 0 {
            return Err(Error::DimensionMismatch(
                "signal model has no signal types".into(),
            ));
        }
        let m = structures[0][0].len();
        if m == 0 {
            return Err(Error::DimensionMismatch(
                "signal model has no states".into(),
            ));
        }
        if generators.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} generator rows for {n} agents",
                generators.len()
            )));
        }
        for (i, (per_type, gens)) in structures.iter().zip(&generators).enumerate() {
            if per_type.len() != p || gens.len() != p {
                return Err(Error::DimensionMismatch(format!(
                    "agent {i} must have {p} signal types"
                )));
            }
            for (l, per_state) in per_type.iter().enumerate() {
                if per_state.len() != m {
                    return Err(Error::DimensionMismatch(format!(
                        "agent {i} type {l} has {} structures, expected {m}",
                        per_state.len()
                    )));
                }
                for f in per_state.iter().chain(std::iter::once(&gens[l])) {
                    f.validate()?;
                    if !f.same_support(&per_state[0]) {
                        return Err(Error::FamilyMismatch(format!(
                            "agent {i} type {l}: all structures and the generator must share one family and alphabet"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            n,
            p,
            m,
            structures: structures.into_iter().flatten().flatten().collect(),
            generators: generators.into_iter().flatten().collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn structure(&self, i: usize, l: usize, theta: usize) -> &LikelihoodFamily {
        &self.structures[(i * self.p + l) * self.m + theta]
    }

    pub fn structures_for(&self, i: usize, l: usize) -> &[LikelihoodFamily] {
        let start = (i * self.p + l) * self.m;
        &self.structures[start..start + self.m]
    }

    pub fn generator(&self, i: usize, l: usize) -> &LikelihoodFamily {
        &self.generators[i * self.p + l]
    }

    pub fn nested_structures(&self) -> Vec<Vec<Vec<LikelihoodFamily>>> {
        (0..self.n)
            .map(|i| {
                (0..self.p)
                    .map(|l| self.structures_for(i, l).to_vec())
                    .collect()
            })
            .collect()
    }

    pub fn nested_generators(&self) -> Vec<Vec<LikelihoodFamily>> {
        (0..self.n)
            .map(|i| (0..self.p).map(|l| self.generator(i, l).clone()).collect())
            .collect()
    }

    /// Keeps only the listed signal types, in the given order.
    pub fn select_types(&self, types: &[usize]) -> Result<SignalModel> {
        if let Some(l) = types.iter().find(|&&l| l >= self.p) {
            return Err(Error::DimensionMismatch(format!(
                "signal type {l} out of range for {} types",
                self.p
            )));
        }
        let structures = (0..self.n)
            .map(|i| {
                types
                    .iter()
                    .map(|&l| self.structures_for(i, l).to_vec())
                    .collect()
            })
            .collect();
        let generators = (0..self.n)
            .map(|i| {
                types
                    .iter()
                    .map(|&l| self.generator(i, l).clone())
                    .collect()
            })
            .collect();
        SignalModel::new(structures, generators)
    }

    /// Relabels agents: new agent `k` is old agent `perm[k]`.
    pub fn permute_agents(&self, perm: &[usize]) -> Result<SignalModel> {
        let s = self.nested_structures();
        let g = self.nested_generators();
        SignalModel::new(
            perm.iter().map(|&k| s[k].clone()).collect(),
            perm.iter().map(|&k| g[k].clone()).collect(),
        )
    }

    /// Relabels states: new state `k` is old state `perm[k]`.
    pub fn permute_states(&self, perm: &[usize]) -> Result<SignalModel> {
        let s = self
            .nested_structures()
            .into_iter()
            .map(|per_type| {
                per_type
                    .into_iter()
                    .map(|per_state| perm.iter().map(|&k| per_state[k].clone()).collect())
                    .collect()
            })
            .collect();
        SignalModel::new(s, self.nested_generators())
    }

    fn check_hypotheses(&self, hyp: &HypothesisSpace) -> Result<()> {
        if hyp.m() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "{} hypotheses but signal model covers {} states",
                hyp.m(),
                self.m
            )));
        }
        Ok(())
    }

    /// Every generator equals the structure at the true state.
    pub fn is_well_specified(&self, hyp: &HypothesisSpace) -> Result<bool> {
        self.check_hypotheses(hyp)?;
        let t = hyp.true_index();
        Ok((0..self.n)
            .all(|i| (0..self.p).all(|l| self.generator(i, l).identical(self.structure(i, l, t)))))
    }
}

/// `k[i][l][θ] = K_i^l(θ*, θ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KLedger {
    n: usize,
    p: usize,
    m: usize,
    values: Vec<f64>,
}

impl KLedger {
    pub fn get(&self, i: usize, l: usize, theta: usize) -> f64 {
        self.values[(i * self.p + l) * self.m + theta]
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.p, self.m)
    }

    pub fn nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n)
            .map(|i| {
                (0..self.p)
                    .map(|l| (0..self.m).map(|t| self.get(i, l, t)).collect())
                    .collect()
            })
            .collect()
    }
}

pub fn build_k_ledger(model: &SignalModel, hyp: &HypothesisSpace) -> Result<KLedger> {
    model.check_hypotheses(hyp)?;
    let star = hyp.true_index();
    let mut values = Vec::with_capacity(model.n * model.p * model.m);
    for i in 0..model.n {
        for l in 0..model.p {
            let f = model.generator(i, l);
            let d_star = kl_divergence(f, model.structure(i, l, star))?;
            for theta in 0..model.m {
                if theta == star {
                    values.push(0.0);
                } else {
                    values.push(d_star - kl_divergence(f, model.structure(i, l, theta))?);
                }
            }
        }
    }
    Ok(KLedger {
        n: model.n,
        p: model.p,
        m: model.m,
        values,
    })
}

/// States observationally equivalent to the true state for every agent and
/// signal type. The true state is globally identifiable iff this is `{θ*}`.
pub fn check_identifiability(
    model: &SignalModel,
    hyp: &HypothesisSpace,
) -> Result<BTreeSet<usize>> {
    model.check_hypotheses(hyp)?;
    let star = hyp.true_index();
    Ok((0..model.m)
        .filter(|&theta| {
            (0..model.n).all(|i| {
                (0..model.p).all(|l| {
                    model
                        .structure(i, l, theta)
                        .identical(model.structure(i, l, star))
                })
            })
        })
        .collect())
}
