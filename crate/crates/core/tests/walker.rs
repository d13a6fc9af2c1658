mod common;

use std::collections::{BTreeMap, HashMap};

use proptest::prelude::*;
use rand::Rng;
use rwce_core::environment::{
    ratio_certificate, trace_nonadaptive, EnvKind, Environment, WeightRule,
};
use rwce_core::graph::{ball, split_at_origin, GraphFamily, Label};
use rwce_core::walker::{
    classify, exact_law, frozen_process_check, hitting_time, martingale_suite, martingale_trace,
    nonadaptive_equivalence, simulate, transition_distribution, ClassifyOptions,
    SimulationOptions, TruncationPolicy, Verdict,
};
use rwce_core::Error;

#[derive(Clone, Copy)]
enum Reinforce {
    Once(f64),
    Linear(f64),
}

/// Law of `X_T` for a reinforced walk on the integers, enumerated over
/// labels with conductances keyed by the lower endpoint.
fn reinforced_line_law(rule: Reinforce, horizon: usize) -> BTreeMap<i64, f64> {
    fn go(
        x: i64,
        c: &HashMap<i64, f64>,
        p: f64,
        left: usize,
        rule: Reinforce,
        out: &mut BTreeMap<i64, f64>,
    ) {
        if left == 0 {
            *out.entry(x).or_insert(0.0) += p;
            return;
        }
        let get = |k: i64| c.get(&k).copied().unwrap_or(1.0);
        let (cl, cr) = (get(x - 1), get(x));
        for (y, edge, w) in [(x - 1, x - 1, cl), (x + 1, x, cr)] {
            let mut next = c.clone();
            let new = match rule {
                Reinforce::Once(delta) => delta,
                Reinforce::Linear(inc) => get(edge) + inc,
            };
            next.insert(edge, new);
            go(y, &next, p * w / (cl + cr), left - 1, rule, out);
        }
    }
    let mut out = BTreeMap::new();
    go(0, &HashMap::new(), 1.0, horizon, rule, &mut out);
    out
}

fn label_marginal(law: &rwce_core::walker::ExactLaw, t: usize) -> BTreeMap<i64, f64> {
    law.marginal(t)
        .into_iter()
        .map(|(x, p)| (law.ball.label(x).0[0], p))
        .collect()
}

#[test]
fn exact_law_matches_brute_force_on_reinforced_lines() {
    for (rule, kind) in [
        (Reinforce::Once(3.0), EnvKind::OnceReinforced { delta: 3.0 }),
        (Reinforce::Linear(1.0), EnvKind::LinearReinforced { increment: 1.0 }),
    ] {
        let env = Environment::new(kind, WeightRule::Unit).unwrap();
        let law = exact_law(&GraphFamily::line(), &env, 6, None, 100_000).unwrap();
        assert!((law.total_probability() - 1.0).abs() < 1e-12);
        let got = label_marginal(&law, 6);
        let want = reinforced_line_law(rule, 6);
        assert_eq!(got.keys().collect::<Vec<_>>(), want.keys().collect::<Vec<_>>());
        for (k, p) in &want {
            assert!((got[k] - p).abs() < 1e-14, "x={k}");
        }
    }
}

#[test]
fn monte_carlo_agrees_with_exact_law() {
    let (_, fam, env) = common::fixture("grid_orrw");
    let horizon = 4;
    let law = exact_law(&fam, &env, horizon, None, 100_000).unwrap();
    let trials = 20_000;
    let sim = simulate(
        &fam,
        &env,
        &SimulationOptions {
            horizon,
            trials,
            seed: 5,
            record_paths: true,
            ..SimulationOptions::default()
        },
    )
    .unwrap();
    let mut counts: HashMap<Label, f64> = HashMap::new();
    for t in &sim.trajectories {
        *counts.entry(sim.ball.label(t.positions[horizon]).clone()).or_insert(0.0) += 1.0;
    }
    for (x, p) in law.marginal(horizon) {
        let freq = counts.get(law.ball.label(x)).copied().unwrap_or(0.0) / trials as f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((freq - p).abs() <= 4.0 * sigma + 1e-12, "{}: {freq} vs {p}", law.ball.label(x));
    }
}

#[test]
fn return_times_follow_the_positive_convention() {
    let env = Environment::static_env(WeightRule::Unit);
    let sim = simulate(
        &GraphFamily::grid2d(),
        &env,
        &SimulationOptions {
            horizon: 300,
            trials: 50,
            seed: 3,
            record_paths: true,
            ..SimulationOptions::default()
        },
    )
    .unwrap();
    for t in &sim.trajectories {
        assert_eq!(t.positions.len(), t.steps + 1);
        assert_eq!(t.positions[0], 0);
        let first = hitting_time(&t.positions[1..], &[0]).map(|s| s + 1);
        assert_eq!(t.return_time, first);
        let returns = t.positions[1..].iter().filter(|&&x| x == 0).count() as u64;
        assert_eq!(t.returns, returns);
        for w in t.positions.windows(2) {
            assert!(sim.ball.edge_between(w[0], w[1]).is_some());
        }
    }
}

#[test]
fn seeds_determine_trajectories() {
    let (_, fam, env) = common::fixture("tree_scheduled");
    let opts = SimulationOptions {
        horizon: 100,
        trials: 8,
        seed: 42,
        record_paths: true,
        max_radius: 14,
        truncation: TruncationPolicy::Stop,
        ..SimulationOptions::default()
    };
    let a = simulate(&fam, &env, &opts).unwrap();
    let b = simulate(&fam, &env, &opts).unwrap();
    let c = simulate(&fam, &env, &SimulationOptions { seed: 43, ..opts.clone() }).unwrap();
    let paths = |s: &rwce_core::walker::Simulation| -> Vec<Vec<Label>> {
        s.trajectories
            .iter()
            .map(|t| t.positions.iter().map(|&x| s.ball.label(x).clone()).collect())
            .collect()
    };
    assert_eq!(paths(&a), paths(&b));
    assert_ne!(paths(&a), paths(&c));
}

#[test]
fn truncation_is_reported() {
    let env = Environment::static_env(WeightRule::Geometric { ratio: 3.0 });
    let opts = SimulationOptions {
        horizon: 5000,
        trials: 4,
        seed: 2,
        initial_radius: 4,
        max_radius: 12,
        ..SimulationOptions::default()
    };
    match simulate(&GraphFamily::line(), &env, &opts) {
        Err(Error::TruncationExceeded { max_radius, partial }) => {
            assert_eq!(max_radius, 12);
            assert!(partial.trajectories.iter().any(|t| t.truncated));
        }
        other => panic!("expected truncation, got {other:?}"),
    }
    let sim = simulate(
        &GraphFamily::line(),
        &env,
        &SimulationOptions {
            truncation: TruncationPolicy::Stop,
            ..opts
        },
    )
    .unwrap();
    for t in sim.trajectories.iter().filter(|t| t.truncated) {
        assert!(t.steps < 5000);
        assert!(t.max_distance >= 12);
    }
}

#[test]
fn oversized_balls_truncate_instead_of_growing() {
    let env = Environment::static_env(WeightRule::Unit);
    let sim = simulate(
        &GraphFamily::tree(3).unwrap(),
        &env,
        &SimulationOptions {
            horizon: 100,
            trials: 2,
            seed: 1,
            initial_radius: 4,
            truncation: TruncationPolicy::Stop,
            ..SimulationOptions::default()
        },
    )
    .unwrap();
    assert!(sim.trajectories.iter().all(|t| t.truncated));
    assert!(sim.ball.len() <= rwce_core::graph::MAX_BALL_VERTICES);
}

#[test]
fn martingale_steps_hold_exactly() {
    for name in ["line_scheduled", "grid_scheduled", "line_orrw", "grid5x5_scheduled"] {
        let (_, fam, env) = common::fixture(name);
        let split = split_at_origin(&fam, 4).unwrap();
        let n = split.d_max.max(3);
        let rep = martingale_suite(&fam, &env, n, 2, 1e-10).unwrap();
        assert!(rep.holds, "{name}: {rep:?}");
        assert!(rep.states > 0);
    }
    let (_, fam, env) = common::fixture("line_static");
    let rep = martingale_suite(&fam, &env, 5, 2, 1e-10).unwrap();
    assert!(rep.max_abs_gap < 1e-12);
}

#[test]
fn static_martingale_trace_is_the_voltage_gap() {
    let fam = GraphFamily::grid2d();
    let b = ball(&fam, 4).unwrap();
    let split = split_at_origin(&fam, 4).unwrap();
    let env = Environment::static_env(WeightRule::Unit);
    let trace = trace_nonadaptive(&env, &b, 30, &mut common::rng(0)).unwrap();
    let cert = ratio_certificate(&trace, &b, &split, 0, &[4]).unwrap();
    let sim = simulate(
        &fam,
        &env,
        &SimulationOptions {
            horizon: 30,
            trials: 20,
            seed: 8,
            start: Some(Label(vec![1, 0])),
            record_paths: true,
            ..SimulationOptions::default()
        },
    )
    .unwrap();
    for t in &sim.trajectories {
        let positions: Vec<usize> = t
            .positions
            .iter()
            .map(|&x| b.index_of(sim.ball.label(x)).unwrap_or(usize::MAX))
            .take_while(|&x| x != usize::MAX)
            .collect();
        let mt = martingale_trace(&positions, &cert, &b, 4).unwrap();
        let stop = mt.tau.unwrap_or(positions.len() - 1);
        for (s, &a) in mt.a_values.iter().enumerate() {
            let x = positions[s.min(stop)];
            assert!((a - (1.0 - cert.voltages[0][0][x])).abs() < 1e-15);
            assert_eq!(a, mt.b_values[s]);
        }
    }
}

#[test]
fn nonadaptive_laws_agree() {
    for name in ["line_scheduled", "tree_scheduled", "grid_scheduled"] {
        let (_, fam, env) = common::fixture(name);
        let tv = nonadaptive_equivalence(&fam, &env, 3, None).unwrap();
        assert!(tv < 1e-12, "{name}: {tv}");
    }
    let (_, fam, env) = common::fixture("line_orrw");
    assert!(matches!(
        nonadaptive_equivalence(&fam, &env, 3, None),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn frozen_walk_is_markov_given_its_history() {
    let (cfg, fam, env) = common::fixture("triangle_orrw");
    let start = cfg.start_label();
    let chk = frozen_process_check(&fam, &env, cfg.checks.freeze_level, 4, start.as_ref(), 0).unwrap();
    assert!(chk.holds, "{chk:?}");
    assert!((chk.total_probability - 1.0).abs() < 1e-12);
    assert!(chk.gamma_counts.get("2").copied().unwrap_or(0.0) > 0.0, "{:?}", chk.gamma_counts);
}

#[test]
fn verdicts_on_fixtures() {
    let cases = [
        ("line_scheduled", Verdict::RecurrentByTheorem),
        ("line_geometric_scheduled", Verdict::TransientByTheorem),
        ("tree_static", Verdict::TransientByTheorem),
        ("line_orrw", Verdict::HypothesisFails),
        ("grid_lrrw", Verdict::HypothesisFails),
    ];
    for (name, want) in cases {
        let (cfg, fam, env) = common::fixture(name);
        let opts = ClassifyOptions {
            horizon: 500,
            trials: 20,
            seed: cfg.seed,
            start: cfg.start_label(),
            radii: cfg.radii.clone(),
            trace_horizon: cfg.trace.horizon,
            trace_radius: cfg.trace.radius,
            probe_radius: cfg.probe_radius,
            max_radius: cfg.max_radius,
            truncation: TruncationPolicy::Stop,
            visit_radius: 2,
        };
        let rep = classify(&fam, &env, &opts).unwrap();
        assert_eq!(rep.verdict, want, "{name}");
        assert!(rep.ellipticity.iter().flat_map(|e| e.min_probability).all(|p| p > 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transition_probabilities_are_normalized(seed in any::<u64>(), r in 1usize..4) {
        let mut rng = common::rng(seed);
        let b = ball(&GraphFamily::grid2d(), r).unwrap();
        let c: Vec<f64> = (0..b.edges().len()).map(|_| rng.random_range(0.01..100.0)).collect();
        for x in 0..b.vertices_within(r - 1) {
            let p = transition_distribution(&b, x, &c).unwrap();
            let total: f64 = b.incident(x).iter().map(|&(_, e)| c[e]).sum();
            prop_assert!((p.iter().map(|q| q.1).sum::<f64>() - 1.0).abs() < 1e-14);
            for (&(y, e), &(z, q)) in b.incident(x).iter().zip(&p) {
                prop_assert_eq!(y, z);
                prop_assert!((q - c[e] / total).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn exact_laws_are_normalized(seed in any::<u64>(), horizon in 1usize..5) {
        let mut rng = common::rng(seed);
        let delta = rng.random_range(0.1..5.0);
        let env = Environment::new(EnvKind::OnceReinforced { delta }, WeightRule::Unit).unwrap();
        let law = exact_law(&GraphFamily::grid2d(), &env, horizon, None, 100_000).unwrap();
        prop_assert!((law.total_probability() - 1.0).abs() < 1e-12);
        for t in 0..=horizon {
            let m: f64 = law.marginal(t).values().sum();
            prop_assert!((m - 1.0).abs() < 1e-12);
        }
    }
}
