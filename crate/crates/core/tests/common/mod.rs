//! Reference implementations used as oracles by the integration tests. They
//! share no code with the library beyond its public data types.
#![allow(dead_code, clippy::needless_range_loop)]

use mvsl::learning::{LearningProblem, ObservationBatch};
use mvsl::network::{validate_network, Gamma};
use mvsl::signal_model::{HypothesisSpace, LikelihoodFamily, Observation, SignalModel};
use rand::seq::SliceRandom;
use rand::Rng;

/// Solves `x M = x`, `Σx = 1` by Gaussian elimination with partial pivoting
/// on `(Mᵀ − I)` with the last equation replaced by the normalisation.
pub fn stationary_oracle(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mut a = vec![vec![0.0; n + 1]; n];
    for r in 0..n {
        for c in 0..n {
            a[r][c] = m[c][r] - if r == c { 1.0 } else { 0.0 };
        }
    }
    for c in 0..n {
        a[n - 1][c] = 1.0;
    }
    a[n - 1][n] = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..n).map(|r| a[r][n] / a[r][r]).collect()
}

/// Plain power iteration on the lazy chain `(I + M)/2`, which shares the
/// stationary distribution of `M` and is aperiodic.
pub fn lazy_power_oracle(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mut x = vec![1.0 / n as f64; n];
    for _ in 0..1_000_000 {
        let mut y = vec![0.0; n];
        for r in 0..n {
            for c in 0..n {
                y[c] += 0.5 * x[r] * m[r][c];
            }
            y[r] += 0.5 * x[r];
        }
        let delta = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = y;
        if delta < 1e-15 {
            break;
        }
    }
    let s: f64 = x.iter().sum();
    x.iter().map(|v| v / s).collect()
}

/// Ã indexed as `(l·n + i, k·n + j)`.
pub fn augmented_oracle(a: &[Vec<f64>], gamma: &[f64]) -> Vec<Vec<f64>> {
    let n = a.len();
    let p = gamma.len();
    let mut out = vec![vec![0.0; n * p]; n * p];
    for l in 0..p {
        for i in 0..n {
            for k in 0..p {
                if k == l {
                    for j in 0..n {
                        out[l * n + i][k * n + j] = gamma[l] * a[i][j];
                    }
                } else {
                    out[l * n + i][k * n + i] = gamma[k];
                }
            }
        }
    }
    out
}

pub fn gaussian_logpdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

pub fn log_density(f: &LikelihoodFamily, obs: Observation) -> f64 {
    match (f, obs) {
        (LikelihoodFamily::Gaussian { mean, std }, Observation::Real(x)) => {
            gaussian_logpdf(x, *mean, *std)
        }
        (LikelihoodFamily::Categorical { probs, .. }, Observation::Symbol(k)) => probs[k].ln(),
        _ => panic!("observation does not match family"),
    }
}

/// `L_{i}^l(θ) = log ℓ(s|θ) − log ℓ(s|θ*)` for one batch, indexed `[l][i][θ]`.
pub fn likelihood_ratios(
    model: &SignalModel,
    batch: &ObservationBatch,
    star: usize,
) -> Vec<Vec<Vec<f64>>> {
    (0..model.p())
        .map(|l| {
            (0..model.n())
                .map(|i| {
                    let s = batch.get(i, l);
                    let base = log_density(model.structure(i, l, star), s);
                    (0..model.m())
                        .map(|th| log_density(model.structure(i, l, th), s) - base)
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// One step of the per-agent log-ratio recursion, `nu[l][i][θ]`:
/// `ν' = γ_l Σ_j a_ij ν_j^l + Σ_{k≠l} γ_k ν_i^k + L_i^l`.
pub fn ratio_step(
    nu: &[Vec<Vec<f64>>],
    a: &[Vec<f64>],
    gamma: &[f64],
    lr: &[Vec<Vec<f64>>],
) -> Vec<Vec<Vec<f64>>> {
    let p = gamma.len();
    let n = a.len();
    let m = nu[0][0].len();
    let mut out = vec![vec![vec![0.0; m]; n]; p];
    for l in 0..p {
        for i in 0..n {
            for th in 0..m {
                let mut v = lr[l][i][th];
                for j in 0..n {
                    v += gamma[l] * a[i][j] * nu[l][j][th];
                }
                for k in (0..p).filter(|&k| k != l) {
                    v += gamma[k] * nu[k][i][th];
                }
                out[l][i][th] = v;
            }
        }
    }
    out
}

/// Closed-form KL divergences, written out independently of the library.
pub fn kl_oracle(p: &LikelihoodFamily, q: &LikelihoodFamily) -> f64 {
    match (p, q) {
        (
            LikelihoodFamily::Gaussian { mean: m1, std: s1 },
            LikelihoodFamily::Gaussian { mean: m2, std: s2 },
        ) => (s2 / s1).ln() + (s1 * s1 + (m1 - m2).powi(2)) / (2.0 * s2 * s2) - 0.5,
        (
            LikelihoodFamily::Categorical { probs: a, .. },
            LikelihoodFamily::Categorical { probs: b, .. },
        ) => a.iter().zip(b).map(|(x, y)| x * (x / y).ln()).sum(),
        _ => panic!("mismatched families"),
    }
}

/// Random strongly connected row-stochastic matrix with at least one
/// self-loop: a random Hamiltonian cycle plus random extra edges.
pub fn random_weights<R: Rng>(rng: &mut R, n: usize, density: f64) -> Vec<Vec<f64>> {
    let mut w = vec![vec![0.0; n]; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for k in 0..n {
        let (i, j) = (order[k], order[(k + 1) % n]);
        w[i][j] = rng.random_range(0.1..1.0);
    }
    for row in w.iter_mut() {
        for v in row.iter_mut() {
            if *v == 0.0 && rng.random_bool(density) {
                *v = rng.random_range(0.05..1.0);
            }
        }
    }
    let d = rng.random_range(0..n);
    if w[d][d] == 0.0 {
        w[d][d] = rng.random_range(0.1..1.0);
    }
    for row in w.iter_mut() {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    w
}

/// Interior weights bounded away from the edges of the simplex.
pub fn random_gamma<R: Rng>(rng: &mut R, p: usize) -> Vec<f64> {
    if p == 1 {
        return vec![1.0];
    }
    let raw: Vec<f64> = (0..p).map(|_| rng.random_range(0.2..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

fn random_family<R: Rng>(rng: &mut R, categorical: Option<usize>) -> LikelihoodFamily {
    match categorical {
        None => LikelihoodFamily::gaussian(rng.random_range(-2.0..2.0), rng.random_range(0.4..2.0))
            .unwrap(),
        Some(k) => {
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let symbols = (0..k).map(|c| format!("s{c}")).collect();
            LikelihoodFamily::categorical(symbols, raw.iter().map(|v| v / s).collect()).unwrap()
        }
    }
}

/// Random problem with mixed Gaussian and categorical signal types. When
/// `well_specified` is set the generators equal the structures at θ*.
pub fn random_problem<R: Rng>(
    rng: &mut R,
    n: usize,
    p: usize,
    m: usize,
    well_specified: bool,
) -> LearningProblem {
    let weights = random_weights(rng, n, 0.4);
    let gamma = random_gamma(rng, p);
    let star = rng.random_range(0..m);
    let kinds: Vec<Option<usize>> = (0..p)
        .map(|_| rng.random_bool(0.5).then(|| rng.random_range(2..5)))
        .collect();
    let mut structures = Vec::new();
    let mut generators = Vec::new();
    for _ in 0..n {
        let mut per_type = Vec::new();
        let mut gens = Vec::new();
        for &kind in &kinds {
            let fams: Vec<_> = (0..m).map(|_| random_family(rng, kind)).collect();
            gens.push(if well_specified {
                fams[star].clone()
            } else {
                random_family(rng, kind)
            });
            per_type.push(fams);
        }
        structures.push(per_type);
        generators.push(gens);
    }
    let labels = (0..m).map(|k| format!("h{k}")).collect();
    LearningProblem::new(
        validate_network(&weights).unwrap(),
        Gamma::new(gamma).unwrap(),
        SignalModel::new(structures, generators).unwrap(),
        HypothesisSpace::new(labels, star).unwrap(),
    )
    .unwrap()
}
