use std::collections::HashSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fidtune_core::compression::{
    compress_from_sets, fit_density, minimal_alpha_region, shap_attribution, CompressionParams, PromisingValueSet,
};
use fidtune_core::evaluator::{make_synthetic_suite, no_guard, Evaluator, SuiteParams};
use fidtune_core::fidelity::{greedy_select, QueryCostProfile, SourceMatrix};
use fidtune_core::generator::{build_warm_start_pool, propose_batch, rank_aggregate, ProposalContext};
use fidtune_core::kendall::{kendall_tau, pair_counts};
use fidtune_core::scheduler::{hyperband_schedule, run_bracket, Mode, RunLedger, RunOptions};
use fidtune_core::similarity::{to_weights, SimilarityMode, SimilarityTracker};
use fidtune_core::space::{
    lhs_sample, mutate, random_sample, ConfigSpace, Configuration, KnobSpec, KnobStatus, NarrowedRange, SubSpace,
};
use fidtune_core::surrogate::{gaussian_ei, ObservationSet, SurrogateModel};
use fidtune_core::task::EvalStatus;

fn mixed_space() -> ConfigSpace {
    ConfigSpace::new(vec![
        KnobSpec::continuous("c", -2.0, 3.0, 0.0),
        KnobSpec::continuous("l", 1.0, 1000.0, 10.0).with_log_scale(),
        KnobSpec::integer("i", 1, 64, 8),
        KnobSpec::categorical("k", vec!["a", "b", "c"], 0),
    ])
    .unwrap()
}

fn numeric_space(d: usize) -> ConfigSpace {
    ConfigSpace::new(
        (0..d)
            .map(|j| KnobSpec::continuous(&format!("x{j}"), 0.0, 1.0, 0.5))
            .collect(),
    )
    .unwrap()
}

/// Pair-count oracle: concordant minus discordant, with tie counts.
fn brute_tau(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let (mut s, mut ta, mut tb, mut n0) = (0i64, 0u64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            n0 += 1;
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 {
                ta += 1;
            }
            if db == 0.0 {
                tb += 1;
            }
            if da != 0.0 && db != 0.0 {
                s += if (da > 0.0) == (db > 0.0) { 1 } else { -1 };
            }
        }
    }
    s as f64 / (((n0 - ta) * (n0 - tb)) as f64).sqrt()
}

fn fitted(seed: u64, n: usize) -> (ConfigSpace, SurrogateModel, Vec<Configuration>) {
    let space = numeric_space(3);
    let cfgs = lhs_sample(&SubSpace::full(&space), n, seed).unwrap();
    let mut set = ObservationSet::new();
    for c in &cfgs {
        let v = c.values();
        set.push(
            c.clone(),
            1.0 + 3.0 * v[0] + (v[1] - 0.5).powi(2) + v[0] * v[2],
            1.0,
            EvalStatus::Ok,
        );
    }
    let model = SurrogateModel::fit(&set, &space, seed).unwrap();
    (space, model, cfgs)
}

fn random_profile(rng: &mut ChaCha8Rng, nq: usize) -> QueryCostProfile {
    let raw: Vec<f64> = (0..nq).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    QueryCostProfile {
        ratios: raw.iter().map(|r| r / total).collect(),
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, nq: usize, weight: f64) -> SourceMatrix {
    let scale: Vec<f64> = (0..nq).map(|_| rng.random_range(0.5..5.0)).collect();
    let rows = (0..rows)
        .map(|_| {
            let common: f64 = rng.random_range(0.0..1.0);
            (0..nq)
                .map(|q| scale[q] * (1.0 + common + rng.random_range(0.0..0.8)))
                .collect()
        })
        .collect();
    SourceMatrix { weight, rows }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn samples_and_mutations_validate(seed in any::<u64>(), strength in 0.0f64..1.0) {
        let space = mixed_space();
        let sub = SubSpace::full(&space);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in random_sample(&sub, 20, &mut rng) {
            prop_assert!(space.validate(&c).is_ok());
            let m = mutate(&c, &sub, strength, seed);
            prop_assert!(space.validate(&m).is_ok());
        }
        for c in lhs_sample(&sub, 7, seed).unwrap() {
            prop_assert!(space.validate(&c).is_ok());
        }
    }

    #[test]
    fn lhs_one_sample_per_stratum(seed in any::<u64>(), n in 1usize..40) {
        let space = numeric_space(3);
        let a = lhs_sample(&SubSpace::full(&space), n, seed).unwrap();
        let b = lhs_sample(&SubSpace::full(&space), n, seed).unwrap();
        prop_assert_eq!(&a, &b);
        for j in 0..3 {
            let mut strata: Vec<usize> = a.iter().map(|c| ((c.values()[j] * n as f64) as usize).min(n - 1)).collect();
            strata.sort_unstable();
            prop_assert_eq!(strata, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn materialize_inverts_project(seed in any::<u64>(), lo in 0.0f64..0.4, hi in 0.6f64..1.0) {
        let space = numeric_space(3);
        let sub = SubSpace::new(&space, vec![
            KnobStatus::Unchanged,
            KnobStatus::Narrowed(NarrowedRange::Numeric { low: lo, high: hi }),
            KnobStatus::Removed,
        ]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in random_sample(&sub, 10, &mut rng) {
            let back = sub.materialize(&sub.project(&c)).unwrap();
            prop_assert_eq!(back.values()[0], c.values()[0]);
            prop_assert!(sub.contains(&back));
        }
    }

    #[test]
    fn ei_nonnegative_and_monotone_in_sigma(mu in -5.0f64..5.0, best in -5.0f64..5.0, s1 in 0.0f64..3.0, ds in 0.0f64..3.0) {
        let a = gaussian_ei(mu, s1, best);
        let b = gaussian_ei(mu, s1 + ds, best);
        prop_assert!(a >= 0.0);
        prop_assert!(b + 1e-12 >= a);
    }

    #[test]
    fn kendall_matches_pair_oracle(seed in any::<u64>(), n in 3usize..120, levels in 2u32..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..levels))).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0f64).round() + f64::from(rng.random_range(0..levels))).collect();
        match kendall_tau(&a, &b) {
            Ok(k) => {
                let oracle = brute_tau(&a, &b);
                prop_assert_eq!(k.tau, pair_counts(&a, &b).unwrap().tau_b());
                prop_assert!((k.tau - oracle).abs() < 1e-12, "{} vs {}", k.tau, oracle);
                prop_assert!((0.0..=1.0).contains(&k.p_value));
            }
            Err(_) => prop_assert!(a.iter().all(|&x| x == a[0]) || b.iter().all(|&x| x == b[0])),
        }
    }

    #[test]
    fn weights_form_a_distribution(sims in prop::collection::vec(-1.0f64..1.0, 0..8), target in -1.0f64..1.0) {
        let w = to_weights(&sims, target);
        prop_assert_eq!(w.sources.len(), sims.len());
        prop_assert!(w.sources.iter().all(|&x| x >= 0.0) && w.target >= 0.0);
        prop_assert!((w.total() - 1.0).abs() < 1e-9);
        for (s, &x) in sims.iter().zip(&w.sources) {
            if *s <= 0.0 {
                prop_assert_eq!(x, 0.0);
            }
        }
    }

    #[test]
    fn tracker_switches_at_most_once(ps in prop::collection::vec(prop::collection::vec(0.0f64..0.2, 1..4), 1..20)) {
        let mut t = SimilarityTracker::new();
        let mut switched = 0;
        let mut seen_kendall = false;
        for (i, p) in ps.iter().enumerate() {
            if t.observe(p, i) {
                switched += 1;
            }
            if seen_kendall {
                prop_assert_eq!(t.mode(), SimilarityMode::Kendall);
            }
            seen_kendall |= t.mode() == SimilarityMode::Kendall;
        }
        prop_assert!(switched <= 1);
    }

    #[test]
    fn shap_local_accuracy(seed in 0u64..500) {
        let (space, model, _) = fitted(seed, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        for c in random_sample(&SubSpace::full(&space), 5, &mut rng) {
            let s = shap_attribution(&model, &c);
            let pred = model.predict(&c).mean;
            let sum = s.base + s.contributions.iter().sum::<f64>();
            prop_assert!((sum - pred).abs() <= 1e-6 * pred.abs().max(1.0));
        }
    }

    #[test]
    fn compression_scale_invariant_and_monotone(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let space = numeric_space(3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sets: Vec<Vec<PromisingValueSet>> = (0..3)
            .map(|_| {
                (0..3)
                    .map(|j| PromisingValueSet {
                        knob: format!("x{j}"),
                        entries: if rng.random_bool(0.3) {
                            Vec::new()
                        } else {
                            (0..rng.random_range(1..8)).map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.1..1.0))).collect()
                        },
                    })
                    .collect()
            })
            .collect();
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
        let params = CompressionParams::default();
        let refs = |sets: &[Vec<PromisingValueSet>], k: f64| -> Vec<(Vec<PromisingValueSet>, f64)> {
            sets.iter().zip(&w).map(|(s, &x)| (s.clone(), x * k)).collect()
        };
        let run = |v: &[(Vec<PromisingValueSet>, f64)]| {
            let r: Vec<(&[PromisingValueSet], f64)> = v.iter().map(|(s, x)| (s.as_slice(), *x)).collect();
            compress_from_sets(&r, &space, &params)
        };
        let base = run(&refs(&sets, 1.0));
        let scaled = run(&refs(&sets, scale));
        for (a, b) in base.decisions.iter().zip(&scaled.decisions) {
            prop_assert_eq!(a.status == KnobStatus::Removed, b.status == KnobStatus::Removed);
            if let (KnobStatus::Narrowed(NarrowedRange::Numeric { low: l1, high: h1 }), KnobStatus::Narrowed(NarrowedRange::Numeric { low: l2, high: h2 })) = (&a.status, &b.status) {
                prop_assert!((l1 - l2).abs() < 1e-9 && (h1 - h2).abs() < 1e-9);
            }
            if let KnobStatus::Narrowed(NarrowedRange::Numeric { low, high }) = &a.status {
                prop_assert!(*low >= 0.0 && *high <= 1.0 && low <= high);
            }
        }
        // An extra all-empty source can only add removals.
        sets.push((0..3).map(|j| PromisingValueSet { knob: format!("x{j}"), entries: Vec::new() }).collect());
        let mut more = refs(&sets[..3], 1.0);
        more.push((sets[3].clone(), 0.5));
        let after = run(&more);
        for (a, b) in base.decisions.iter().zip(&after.decisions) {
            if a.status == KnobStatus::Removed && !base.degenerate {
                prop_assert_eq!(&b.status, &KnobStatus::Removed);
            }
        }
    }

    #[test]
    fn alpha_region_holds_alpha(seed in any::<u64>(), alpha in 0.3f64..0.95) {
        let knob = KnobSpec::continuous("x", 0.0, 10.0, 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries: Vec<(f64, f64)> = (0..rng.random_range(2..30)).map(|_| (rng.random_range(0.0..10.0), rng.random_range(0.01..1.0))).collect();
        let d = fit_density(&entries, &knob).unwrap();
        match minimal_alpha_region(&d, alpha, &knob) {
            NarrowedRange::Numeric { low, high } => {
                prop_assert!(0.0 <= low && low <= high && high <= 10.0);
                // Mass is measured on the knob's range, as the grid is.
                prop_assert!(d.mass(low, high) / d.mass(0.0, 10.0) >= alpha - 2e-3);
            }
            other => prop_assert!(false, "unexpected {:?}", other),
        }
    }

    #[test]
    fn greedy_monotone_in_delta_and_feasible(seed in any::<u64>(), nq in 2usize..7, d1 in 0.05f64..1.0, d2 in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let profile = random_profile(&mut rng, nq);
        let sources: Vec<SourceMatrix> = (0..2).map(|i| random_matrix(&mut rng, 25, nq, 0.5 + i as f64)).collect();
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let a = greedy_select(&profile, &sources, lo).unwrap();
        let b = greedy_select(&profile, &sources, hi).unwrap();
        if !a.overrun {
            prop_assert!(a.cost_ratio <= lo + 1e-9);
            prop_assert!(b.tau + 1e-12 >= a.tau, "tau {} at {} > {} at {}", a.tau, lo, b.tau, hi);
        }
        if !b.overrun {
            prop_assert!(b.cost_ratio <= hi + 1e-9);
        }
        let cheapest = profile.ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(a.overrun, cheapest > lo + 1e-9);
    }

    #[test]
    fn rank_aggregation_ignores_magnitudes(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let weights = [0.5, 0.3, 0.2];
        let warped: Vec<Vec<f64>> = scores.iter().enumerate().map(|(m, s)| s.iter().map(|&x| (3.0 * x).exp() * (m + 1) as f64 + 7.0).collect()).collect();
        let mut order = rank_aggregate(&scores, &weights);
        prop_assert_eq!(&order, &rank_aggregate(&warped, &weights));
        order.sort_unstable();
        prop_assert_eq!(order, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn batch_sizes_and_warm_draws(seed in 0u64..200) {
        let suite = make_synthetic_suite(&SuiteParams { n_tasks: 3, n_queries: 6, n_knobs: 5, n_no_effect: 1, observations: 30, seed, ..Default::default() });
        let recs = suite.records();
        let weighted: Vec<_> = recs.iter().map(|r| (r, 1.0 / 3.0)).collect();
        let mut pool = build_warm_start_pool(&weighted, None);
        let total = pool.entries().len();
        let sub = SubSpace::full(&suite.space);
        let evaluated = HashSet::new();
        let ctx = ProposalContext { space: &sub, models: &[], elites: &[], candidate_pool: None, evaluated: &evaluated };
        let mut proposed: HashSet<Vec<u64>> = HashSet::new();
        for b in hyperband_schedule(9, 3) {
            let before = pool.cursor();
            let batch = propose_batch(b.n1(), b.survivors(), b.rungs.len(), &mut pool, &ctx, seed);
            prop_assert_eq!(batch.len(), b.n1());
            prop_assert!(pool.cursor() - before <= b.survivors());
            prop_assert!(batch.count(fidtune_core::generator::Provenance::WarmStart) <= b.survivors());
            for (c, p) in batch.configs.iter().zip(&batch.provenance) {
                if *p == fidtune_core::generator::Provenance::WarmStart {
                    prop_assert!(proposed.insert(c.key()), "pool entry proposed twice");
                }
            }
        }
        prop_assert!(pool.cursor() <= total);
    }

    #[test]
    fn bracket_promotions_and_ledger(seed in 0u64..100) {
        let suite = make_synthetic_suite(&SuiteParams { n_tasks: 1, n_queries: 5, n_knobs: 4, n_no_effect: 0, failure_prob: 0.0, observations: 10, seed, ..Default::default() });
        let sim = suite.simulator(0);
        let mut ledger = RunLedger::new();
        let opts = RunOptions { budget_s: f64::INFINITY, parallelism: 1 + (seed % 3) as usize, early_stop: false, mode: Mode::FullFidelityBo };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for b in hyperband_schedule(27, 3) {
            let batch = random_sample(&SubSpace::full(&suite.space), b.n1(), &mut rng);
            let out = run_bracket(&b, &batch, None, &sim, &mut ledger, &opts);
            for (i, r) in out.rungs.iter().enumerate() {
                prop_assert_eq!(r.len(), b.rungs[i].n);
            }
        }
        let mut best = f64::INFINITY;
        let mut charged = 0.0;
        for e in ledger.entries() {
            charged += e.result.wall_cost;
            if let Some(x) = e.best_full_fidelity_s {
                prop_assert!(x <= best);
                best = x;
            }
        }
        prop_assert!(charged + 1e-9 >= ledger.elapsed());
    }

    #[test]
    fn simulator_cost_is_sum_of_queries(seed in any::<u64>(), mask in 0u32..32) {
        let suite = make_synthetic_suite(&SuiteParams { n_tasks: 1, n_queries: 5, n_knobs: 4, n_no_effect: 0, failure_prob: 0.0, observations: 5, seed: seed % 1000, ..Default::default() });
        let sim = suite.simulator(0);
        let subset: Vec<usize> = (0..5).filter(|q| mask & (1 << q) != 0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = random_sample(&SubSpace::full(&suite.space), 1, &mut rng).remove(0);
        let r = sim.evaluate(&cfg, &subset, &mut no_guard).unwrap();
        let per_query: f64 = r.cost.iter().flatten().sum();
        prop_assert!((r.wall_cost - per_query).abs() <= 1e-9 * per_query.max(1.0));
        prop_assert_eq!(r.latency.iter().flatten().count(), subset.len());
        let again = sim.evaluate(&cfg, &subset, &mut no_guard).unwrap();
        prop_assert_eq!(r, again);
    }
}
