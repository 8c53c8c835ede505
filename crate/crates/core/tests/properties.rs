#![allow(clippy::needless_range_loop)]

mod common;

use std::collections::BTreeSet;

use mvsl::analysis::{build_report, group_objective, objective_margin, BOUNDARY_TOLERANCE};
use mvsl::cli::ExperimentConfig;
use mvsl::learning::{
    aggregate, bayes_update, draw_batches, init_beliefs, GeneratorSampler, LearningProblem,
    ObservationBatch,
};
use mvsl::network::{
    augment, augmented_stationary, is_strongly_connected, stationary_by_linear_solve,
    stationary_distribution, validate_network, Gamma, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use mvsl::scenarios::{build_example2, LocalizationScenario, Point};
use mvsl::signal_model::{
    build_k_ledger, check_identifiability, kl_divergence, HypothesisSpace, LikelihoodFamily,
    SignalModel,
};
use mvsl::Assumption;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn batches(problem: &LearningProblem, seed: u64, steps: usize) -> Vec<ObservationBatch> {
    let mut src = GeneratorSampler::for_model(&problem.model, seed, 0);
    draw_batches(&problem.model, &mut src, steps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stationary_power_and_linear_solve_agree(seed in any::<u64>(), n in 1usize..=10, density in 0.0f64..0.8) {
        let w = random_weights(&mut rng(seed), n, density);
        let net = validate_network(&w).unwrap();
        let a = stationary_distribution(&net, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let b = stationary_by_linear_solve(&net).unwrap();
        let oracle = stationary_oracle(&net.to_rows());
        let pi = a.as_slice();
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(pi.iter().all(|&v| v > 0.0));
        let rows = net.to_rows();
        for c in 0..n {
            let pa: f64 = (0..n).map(|r| pi[r] * rows[r][c]).sum();
            prop_assert!((pa - pi[c]).abs() < 1e-10);
            prop_assert!((pi[c] - b[c]).abs() < 1e-8);
            prop_assert!((pi[c] - oracle[c]).abs() < 1e-8);
        }
    }

    #[test]
    fn lifted_stationary_matches_direct_iteration(seed in any::<u64>(), n in 1usize..=8, p in 1usize..=4) {
        let mut r = rng(seed);
        let w = random_weights(&mut r, n, 0.3);
        let g = random_gamma(&mut r, p);
        let net = validate_network(&w).unwrap();
        let gamma = Gamma::new(g.clone()).unwrap();
        let aug = augment(&net, &gamma).unwrap();
        let expected = augmented_oracle(&net.to_rows(), &g);
        let rows = aug.matrix().to_rows();
        for (x, y) in rows.iter().flatten().zip(expected.iter().flatten()) {
            prop_assert!((x - y).abs() < 1e-15);
        }
        let pi = stationary_distribution(&net, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let lifted = augmented_stationary(&aug, &pi).unwrap();
        let direct = lazy_power_oracle(&expected);
        for (x, y) in lifted.iter().zip(&direct) {
            prop_assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }

    #[test]
    fn augmented_matrix_is_stochastic_irreducible_and_lazy(seed in any::<u64>(), n in 1usize..=8, p in 1usize..=4) {
        let mut r = rng(seed);
        let net = validate_network(&random_weights(&mut r, n, 0.3)).unwrap();
        let gamma = Gamma::new(random_gamma(&mut r, p)).unwrap();
        let aug = augment(&net, &gamma).unwrap();
        let m = aug.matrix();
        for row in 0..n * p {
            prop_assert!((m.row(row).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        prop_assert!(is_strongly_connected(m));
        let self_loops = (0..n).filter(|&i| net.weight(i, i) > 0.0).count();
        let diag = (0..n * p).filter(|&k| m[(k, k)] > 0.0).count();
        prop_assert_eq!(diag, p * self_loops);
        prop_assert!(diag >= p);
    }

    #[test]
    fn stationary_permutes_with_agents(seed in any::<u64>(), n in 2usize..=8) {
        let mut r = rng(seed);
        let net = validate_network(&random_weights(&mut r, n, 0.3)).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let pi = stationary_distribution(&net, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let permuted = stationary_distribution(&net.permuted(&perm).unwrap(), DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        for k in 0..n {
            prop_assert!((permuted[k] - pi[perm[k]]).abs() < 1e-10);
        }
    }

    #[test]
    fn kl_is_nonnegative_and_zero_only_on_identical(seed in any::<u64>(), k in 2usize..6) {
        let mut r = rng(seed);
        let g1 = LikelihoodFamily::gaussian(r.random_range(-3.0..3.0), r.random_range(0.1..3.0)).unwrap();
        let g2 = LikelihoodFamily::gaussian(r.random_range(-3.0..3.0), r.random_range(0.1..3.0)).unwrap();
        let cat = |r: &mut ChaCha8Rng| {
            let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            LikelihoodFamily::categorical((0..k).map(|c| c.to_string()).collect(), raw.iter().map(|v| v / s).collect()).unwrap()
        };
        let (c1, c2) = (cat(&mut r), cat(&mut r));
        for (p, q) in [(&g1, &g2), (&c1, &c2)] {
            let d = kl_divergence(p, q).unwrap();
            prop_assert!(d > 0.0);
            prop_assert!((d - kl_oracle(p, q)).abs() <= 1e-12 * d.max(1.0));
            prop_assert_eq!(kl_divergence(p, p).unwrap(), 0.0);
            prop_assert_eq!(kl_divergence(q, q).unwrap(), 0.0);
        }
        prop_assert!(kl_divergence(&g1, &c1).is_err());
    }

    #[test]
    fn ledger_is_nonpositive_and_vanishes_on_identifiability_set(
        seed in any::<u64>(), n in 1usize..=3, p in 1usize..=3, m in 2usize..=6,
    ) {
        let mut r = rng(seed);
        let prob = random_problem(&mut r, n, p, m, true);
        let star = prob.hypotheses.true_index();
        // copy θ*'s structures onto a few states, sometimes only partially
        let mut s = prob.model.nested_structures();
        let mut expected = BTreeSet::from([star]);
        for th in (0..m).filter(|&t| t != star) {
            match r.random_range(0..3) {
                0 => {
                    for per_type in s.iter_mut() {
                        for fams in per_type.iter_mut() {
                            fams[th] = fams[star].clone();
                        }
                    }
                    expected.insert(th);
                }
                1 => {
                    let l = r.random_range(0..p);
                    for per_type in s.iter_mut() {
                        per_type[l][th] = per_type[l][star].clone();
                    }
                    if p == 1 {
                        expected.insert(th);
                    }
                }
                _ => {}
            }
        }
        let model = SignalModel::new(s, prob.model.nested_generators()).unwrap();
        let set = check_identifiability(&model, &prob.hypotheses).unwrap();
        prop_assert_eq!(&set, &expected);
        let ledger = build_k_ledger(&model, &prob.hypotheses).unwrap();
        for th in 0..m {
            let zero_everywhere = (0..n).all(|i| (0..p).all(|l| ledger.get(i, l, th) == 0.0));
            for i in 0..n {
                for l in 0..p {
                    prop_assert!(ledger.get(i, l, th) <= 0.0);
                }
            }
            prop_assert_eq!(zero_everywhere, set.contains(&th));
        }
    }

    #[test]
    fn predicted_limit_ignores_reference_state(
        seed in any::<u64>(), n in 1usize..=4, p in 1usize..=3, m in 2usize..=6, ws in any::<bool>(),
    ) {
        let prob = random_problem(&mut rng(seed), n, p, m, ws);
        let base = build_report(&prob).unwrap();
        if ws {
            prop_assert_eq!(base.predicted_limit, Some(prob.hypotheses.true_index()));
        }
        for k in 0..m {
            let moved = LearningProblem::new(
                prob.network.clone(),
                prob.gamma.clone(),
                prob.model.clone(),
                prob.hypotheses.with_true_index(k).unwrap(),
            ).unwrap();
            let rep = build_report(&moved).unwrap();
            prop_assert_eq!(rep.predicted_limit, base.predicted_limit);
            prop_assert_eq!(rep.condition_values[k], 0.0);
            for th in 0..m {
                let diff = rep.objective[k] - rep.objective[th];
                prop_assert!((rep.condition_values[th] - diff).abs() < 1e-12);
            }
            let all_negative = (0..m).filter(|&t| t != k).all(|t| rep.condition_values[t] < -BOUNDARY_TOLERANCE);
            prop_assert_eq!(rep.converges_to_truth, all_negative);
            prop_assert_eq!(rep.converges_to_truth, rep.predicted_limit == Some(k) && rep.boundary_states.is_empty());
        }
    }

    #[test]
    fn localisation_objective_reduces_to_weighted_squared_errors(
        ax in 0.0f64..=1.0, ay in 0.0f64..=1.0, bx in 0.0f64..=1.0, by in 0.0f64..=1.0,
        tx in 0.0f64..=1.0, ty in 0.0f64..=1.0,
    ) {
        let agents = vec![Point::new(ax, ay), Point::new(bx, by)];
        let target = Point::new(tx, ty);
        let scn = LocalizationScenario::new(agents.clone(), target);
        let prob = build_example2(&scn).unwrap();
        let pi = stationary_distribution(&prob.network, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let j = group_objective(&prob.model, &pi, &prob.gamma).unwrap();
        let cands = scn.candidates();
        let score: Vec<f64> = cands.iter().map(|c| {
            agents.iter().enumerate().map(|(i, a)| {
                let dd = a.distance(&target) - a.distance(c);
                let da = (target.y - a.y).atan2(target.x - a.x) - (c.y - a.y).atan2(c.x - a.x);
                pi[i] * (dd * dd + 0.1 * da * da)
            }).sum()
        }).collect();
        // equal up to an additive constant
        for k in 1..cands.len() {
            prop_assert!(((j[k] - j[0]) - (score[k] - score[0])).abs() < 1e-10);
        }
        let (best, gap) = objective_margin(&j).unwrap();
        if gap > 1e-9 {
            let arg = (0..score.len()).min_by(|&a, &b| score[a].total_cmp(&score[b])).unwrap();
            prop_assert_eq!(best, arg);
        }
    }

    #[test]
    fn config_round_trips_through_json(seed in any::<u64>(), n in 1usize..=4, p in 1usize..=3, m in 1usize..=5) {
        let prob = random_problem(&mut rng(seed), n, p, m, false);
        let cfg = ExperimentConfig::from_problem(&prob, 100, seed);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        let rebuilt = back.problem().unwrap();
        prop_assert_eq!(rebuilt.model.nested_structures(), prob.model.nested_structures());
        prop_assert_eq!(rebuilt.network.to_rows(), prob.network.to_rows());
    }

    #[test]
    fn invalid_networks_name_their_assumption(seed in any::<u64>(), n in 2usize..=6) {
        let mut r = rng(seed);
        let mut w = random_weights(&mut r, n, 0.3);
        let row = r.random_range(0..n);
        w[row][r.random_range(0..n)] += 0.01;
        let err = validate_network(&w).unwrap_err();
        prop_assert_eq!(err.assumption(), Some(Assumption::RowStochastic));

        // two disjoint blocks cannot reach each other
        let mut split = vec![vec![0.0; n]; n];
        let cut = n / 2;
        for i in 0..n {
            let (lo, hi) = if i < cut { (0, cut) } else { (cut, n) };
            for j in lo..hi {
                split[i][j] = 1.0 / (hi - lo) as f64;
            }
        }
        let err = validate_network(&split).unwrap_err();
        prop_assert_eq!(err.assumption(), Some(Assumption::StronglyConnected));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pipeline_matches_log_ratio_recursions(
        seed in any::<u64>(), n in 1usize..=4, p in 1usize..=3, m in 2usize..=5, ws in any::<bool>(),
    ) {
        let prob = random_problem(&mut rng(seed), n, p, m, ws);
        let star = prob.hypotheses.true_index();
        let a = prob.network.to_rows();
        let g = prob.gamma.as_slice().to_vec();
        let aug = augment(&prob.network, &prob.gamma).unwrap();
        let mut state = init_beliefs(&prob.hypotheses, n, p, None).unwrap();
        let mut nu = vec![vec![vec![0.0; m]; n]; p];
        let mut stacked = vec![vec![0.0; n * p]; m];
        for batch in batches(&prob, seed, 300) {
            let lr = likelihood_ratios(&prob.model, &batch, star);
            nu = ratio_step(&nu, &a, &g, &lr);
            for (th, col) in stacked.iter_mut().enumerate() {
                let mut next = aug.matrix().mul_vec(col);
                for l in 0..p {
                    for i in 0..n {
                        next[l * n + i] += lr[l][i][th];
                    }
                }
                *col = next;
            }
            state = bayes_update(aggregate(&state, &prob.network, &prob.gamma).unwrap(), &prob.model, &batch).unwrap();
            for l in 0..p {
                for i in 0..n {
                    for th in 0..m {
                        let got = state.log_ratio(i, l, th, star);
                        let tol = 1e-9 * got.abs().max(1.0);
                        prop_assert!((got - nu[l][i][th]).abs() < tol);
                        prop_assert!((got - stacked[th][l * n + i]).abs() < tol);
                    }
                }
            }
        }
    }

    #[test]
    fn single_type_matches_geometric_averaging(seed in any::<u64>(), n in 1usize..=5, m in 2usize..=5) {
        let prob = random_problem(&mut rng(seed), n, 1, m, false);
        let a = prob.network.to_rows();
        let mut state = init_beliefs(&prob.hypotheses, n, 1, None).unwrap();
        let mut mu = vec![vec![1.0 / m as f64; m]; n];
        for batch in batches(&prob, seed, 40) {
            state = bayes_update(aggregate(&state, &prob.network, &prob.gamma).unwrap(), &prob.model, &batch).unwrap();
            mu = (0..n).map(|i| {
                let s = batch.get(i, 0);
                let raw: Vec<f64> = (0..m).map(|th| {
                    let geo: f64 = (0..n).map(|j| mu[j][th].powf(a[i][j])).product();
                    geo * log_density(prob.model.structure(i, 0, th), s).exp()
                }).collect();
                let z: f64 = raw.iter().sum();
                raw.iter().map(|v| v / z).collect()
            }).collect();
            for i in 0..n {
                for th in 0..m {
                    prop_assert!((state.belief(i, 0, th) - mu[i][th]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn relabelling_states_permutes_beliefs(
        seed in any::<u64>(), n in 1usize..=3, p in 1usize..=3, m in 2usize..=6,
    ) {
        let mut r = rng(seed);
        let prob = random_problem(&mut r, n, p, m, false);
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut r);
        let labels = perm.iter().map(|&k| prob.hypotheses.label(k).to_string()).collect();
        let new_star = perm.iter().position(|&k| k == prob.hypotheses.true_index()).unwrap();
        let relabelled = LearningProblem::new(
            prob.network.clone(),
            prob.gamma.clone(),
            prob.model.permute_states(&perm).unwrap(),
            HypothesisSpace::new(labels, new_star).unwrap(),
        ).unwrap();
        let mut s0 = init_beliefs(&prob.hypotheses, n, p, None).unwrap();
        let mut s1 = init_beliefs(&relabelled.hypotheses, n, p, None).unwrap();
        for batch in batches(&prob, seed, 200) {
            s0 = bayes_update(aggregate(&s0, &prob.network, &prob.gamma).unwrap(), &prob.model, &batch).unwrap();
            s1 = bayes_update(aggregate(&s1, &relabelled.network, &relabelled.gamma).unwrap(), &relabelled.model, &batch).unwrap();
        }
        for i in 0..n {
            for l in 0..p {
                for k in 0..m {
                    let (x, y) = (s1.log_belief(i, l, k), s0.log_belief(i, l, perm[k]));
                    prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
                }
                let top = s0.argmax(i, l);
                let unique = (0..m).all(|k| k == top || s0.log_belief(i, l, k) < s0.log_belief(i, l, top) - 1e-9);
                if unique {
                    prop_assert_eq!(relabelled.hypotheses.label(s1.argmax(i, l)), prob.hypotheses.label(top));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn normalisation_holds_over_long_runs(
        seed in any::<u64>(), n in 1usize..=3, p in 1usize..=3, m in 2usize..=5, ws in any::<bool>(),
    ) {
        let prob = random_problem(&mut rng(seed), n, p, m, ws);
        let mut src = GeneratorSampler::for_model(&prob.model, seed, 0);
        let mut state = init_beliefs(&prob.hypotheses, n, p, None).unwrap();
        for _ in 0..10_000 {
            state = mvsl::learning::step(&state, &prob, &mut src).unwrap();
            prop_assert!(state.max_normalization_error() < 1e-9);
        }
        for i in 0..n {
            for l in 0..p {
                prop_assert!(state.log_beliefs(i, l).iter().all(|v| v.is_finite()));
            }
        }
    }
}
