use proptest::prelude::*;

use neyman_lab::analytics::{
    bernoulli_variance, cost, finite_stats, neyman_regret, neyman_summary, regret_benchmark,
    OutcomeSchedule,
};
use neyman_lab::data;
use neyman_lab::designs::{
    gradient_estimate, projection_parameter, ClipOgd, ClipOgdParams, ExploreThenCommit, PolicySpec,
};
use neyman_lab::estimators::Trace;
use neyman_lab::oracle::{enumerate_exact, for_each_path};
use neyman_lab::rng::Stream;
use neyman_lab::simulation::{replications, run_experiment, SimConfig};

fn nonzero() -> impl Strategy<Value = f64> {
    prop_oneof![0.05f64..5.0, -5.0f64..-0.05]
}

fn schedule(max_len: usize) -> impl Strategy<Value = OutcomeSchedule> {
    prop::collection::vec((nonzero(), nonzero()), 1..=max_len)
        .prop_map(|pairs| OutcomeSchedule::from_pairs(&pairs).unwrap())
}

proptest! {
    #[test]
    fn neyman_probability_minimizes_bernoulli_variance(s in schedule(12)) {
        let stats = finite_stats(&s);
        let summary = neyman_summary(&stats).unwrap();
        let best = bernoulli_variance(&stats, summary.p_star).unwrap();
        prop_assert!((best - summary.normalized_neyman_variance).abs() <= 1e-9 * best.abs().max(1.0));
        for i in 1..100 {
            let p = i as f64 / 100.0;
            prop_assert!(best <= bernoulli_variance(&stats, p).unwrap() + 1e-12);
        }
    }

    #[test]
    fn benchmark_matches_grid_search(s in schedule(10)) {
        let total = |p: f64| s.pairs().map(|(a, b)| cost(a, b, p).unwrap()).sum::<f64>();
        let bench = regret_benchmark(&finite_stats(&s));
        let p_star = neyman_summary(&finite_stats(&s)).unwrap().p_star;
        prop_assert!((total(p_star) - bench).abs() <= 1e-9 * bench);
        // a 1e-6-spaced window around p* bounds the grid minimum from above
        let grid_min = (-2000..=2000)
            .map(|k| p_star + k as f64 * 1e-6)
            .filter(|&p| p > 0.0 && p < 1.0)
            .map(total)
            .fold(f64::INFINITY, f64::min);
        prop_assert!(bench <= grid_min * (1.0 + 1e-12));
        prop_assert!(grid_min - bench <= 1e-6 * bench);
        for i in 1..50 {
            prop_assert!(bench <= total(i as f64 / 50.0) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn constant_design_regret_is_permutation_invariant(
        s in schedule(16), p in 0.05f64..0.95, seed in any::<u64>()
    ) {
        let probs = vec![p; s.horizon()];
        let a = neyman_regret(&s, &probs).unwrap();
        let b = neyman_regret(&data::shuffle(&s, seed), &probs).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        prop_assert!(a >= -1e-9 * regret_benchmark(&finite_stats(&s)));
    }

    #[test]
    fn gradient_estimate_is_unbiased(y1 in -10.0f64..10.0, y0 in -10.0f64..10.0, p in 0.01f64..0.99) {
        let mean = p * gradient_estimate(y1, true, p).unwrap()
            + (1.0 - p) * gradient_estimate(y0, false, p).unwrap();
        let derivative = -y1 * y1 / (p * p) + y0 * y0 / ((1.0 - p) * (1.0 - p));
        prop_assert!((mean - derivative).abs() <= 1e-12 * derivative.abs().max(1.0));
    }

    #[test]
    fn clip_ogd_stays_inside_clip_interval(
        s in schedule(60), eta in 0.001f64..50.0, alpha in 0.5f64..10.0, seed in any::<u64>()
    ) {
        let mut policy = ClipOgd::new(ClipOgdParams { eta, alpha }).unwrap();
        let trace = run_experiment(&s, &mut policy, &mut Stream::new(seed, 0)).unwrap();
        for (t, &p) in trace.probs().iter().enumerate() {
            let delta = projection_parameter(t + 1, alpha);
            prop_assert!(delta <= p && p <= 1.0 - delta, "round {}: {} vs {}", t + 1, p, delta);
        }
    }

    #[test]
    fn etc_changes_probability_at_most_once(s in schedule(40), t0 in 1usize..10, seed in any::<u64>()) {
        let mut policy = ExploreThenCommit::new(t0).unwrap();
        let trace = run_experiment(&s, &mut policy, &mut Stream::new(seed, 0)).unwrap();
        let probs = trace.probs();
        let changes = probs.windows(2).filter(|w| w[0] != w[1]).count();
        prop_assert!(changes <= 1);
        prop_assert!(probs.iter().take(t0).all(|&p| p == 0.5));
        prop_assert!(probs.iter().all(|&p| (0.01..=0.99).contains(&p)));
    }

    #[test]
    fn exact_estimator_is_unbiased(s in schedule(6), design in prop::sample::select(vec![
        "bernoulli:0.3", "clip-ogd", "etc:t0=2", "neyman-oracle", "clip-ogd:eta=3,alpha=1.5",
    ])) {
        prop_assume!(s.horizon() >= 2 || design != "clip-ogd");
        let spec: PolicySpec = design.parse().unwrap();
        let policy = spec.build(&s).unwrap();
        let exact = enumerate_exact(&s, &policy).unwrap();
        prop_assert!((exact.total_probability - 1.0).abs() < 1e-12);
        prop_assert!((exact.mean_tau_hat - s.ate()).abs() <= 1e-9 * s.ate().abs().max(1.0));
        prop_assert!(exact.var_tau_hat >= -1e-12);
    }
}

/// The weights `r_t = Z_t / P_t - 1` form a martingale difference sequence:
/// `E[r_t r_s] = 0` for `s != t` and `E[r_t^2] = E[1/P_t] - 1`.
#[test]
fn inverse_probability_weights_are_orthogonal() {
    let s = OutcomeSchedule::new(
        vec![0.3, 1.7, 0.9, 2.2, 0.4, 1.1, 0.8],
        vec![1.2, 0.2, 0.7, 0.5, 1.9, 0.6, 1.4],
    )
    .unwrap();
    let horizon = s.horizon();
    for spec in ["clip-ogd:eta=0.2,alpha=2", "etc:t0=3"] {
        let policy = spec.parse::<PolicySpec>().unwrap().build(&s).unwrap();
        let mut cross = vec![vec![0.0; horizon]; horizon];
        let mut inv_p = vec![0.0; horizon];
        for_each_path(&s, &policy, |w, path| {
            let r: Vec<f64> = path
                .iter()
                .map(|st| f64::from(u8::from(st.z)) / st.p - 1.0)
                .collect();
            for (t, row) in cross.iter_mut().enumerate() {
                inv_p[t] += w / path[t].p;
                for (cell, r_u) in row.iter_mut().zip(&r) {
                    *cell += w * r[t] * r_u;
                }
            }
        })
        .unwrap();
        for (t, row) in cross.iter().enumerate() {
            assert!((row[t] - (inv_p[t] - 1.0)).abs() < 1e-12, "{spec} t={t}");
            for (u, cell) in row.iter().enumerate().filter(|&(u, _)| u != t) {
                assert!(cell.abs() < 1e-12, "{spec} ({t},{u}) = {cell}");
            }
        }
    }
}

/// Monte Carlo mean and variance agree with exact enumeration within 4 SE.
#[test]
fn oracle_agrees_with_monte_carlo() {
    let s = OutcomeSchedule::new(
        vec![0.9, 0.2, 0.5, 0.8, 0.1, 0.7, 0.3, 0.6],
        vec![0.1, 0.4, 0.3, 0.2, 0.6, 0.1, 0.5, 0.2],
    )
    .unwrap();
    let reps = 200_000;
    for design in ["clip-ogd", "etc:t0=2", "bernoulli:0.4"] {
        let spec: PolicySpec = design.parse().unwrap();
        let exact = enumerate_exact(&s, &spec.build(&s).unwrap()).unwrap();
        let sims = replications(&s, &spec, &SimConfig::new(reps, 7)).unwrap();
        let n = reps as f64;
        let mean = sims.iter().map(|r| r.estimate.tau_hat).sum::<f64>() / n;
        let dev = |r: &neyman_lab::simulation::Replication| r.estimate.tau_hat - mean;
        let var = sims.iter().map(|r| dev(r).powi(2)).sum::<f64>() / (n - 1.0);
        let m4 = sims.iter().map(|r| dev(r).powi(4)).sum::<f64>() / n;
        let se_mean = (var / n).sqrt();
        let se_var = ((m4 - var * var) / n).sqrt();
        assert!(
            (mean - exact.mean_tau_hat).abs() <= 4.0 * se_mean,
            "{design} mean"
        );
        assert!(
            (var - exact.var_tau_hat).abs() <= 4.0 * se_var,
            "{design} var {var} vs {}",
            exact.var_tau_hat
        );
        let regret = sims.iter().map(|r| r.regret).sum::<f64>() / n;
        let sd = (sims
            .iter()
            .map(|r| (r.regret - regret).powi(2))
            .sum::<f64>()
            / (n - 1.0))
            .sqrt();
        assert!(
            (regret - exact.expected_regret).abs() <= 4.0 * sd / n.sqrt() + 1e-12,
            "{design} regret"
        );
    }
}

#[test]
fn seeded_runs_reproduce() {
    let s = data::gen_synthetic("iid-scaled", 500, 3, "").unwrap();
    let spec = PolicySpec::clip_ogd_default();
    let config = SimConfig::new(64, 11);
    let a = replications(&s, &spec, &config).unwrap();
    let b = replications(
        &s,
        &spec,
        &SimConfig {
            threads: Some(1),
            ..config.clone()
        },
    )
    .unwrap();
    assert_eq!(a, b);
    let c = replications(&s, &spec, &SimConfig::new(64, 12)).unwrap();
    assert_ne!(a, c);

    let trace = |seed| {
        let mut p = spec.build(&s).unwrap();
        run_experiment(&s, &mut p, &mut Stream::new(seed, 0)).unwrap()
    };
    let t: Trace = trace(5);
    assert_eq!(t, trace(5));
    assert_eq!(
        a[0].estimate,
        neyman_lab::EffectEstimate::from_trace(&trace(11))
    );
}
