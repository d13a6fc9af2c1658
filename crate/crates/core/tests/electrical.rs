mod common;

use common::{collapse, Net};
use proptest::prelude::*;
use rand::Rng;
use rwce_core::electrical::{
    ball_resistance, effective_resistance, flow_energy, fundamental_cycles, harmonic_residual,
    kirchhoff_defect, net_crossings_estimate, node_balance_defect, ohm_defect,
    perturbation_check, resistance_profile, return_probability, separator_bound_check,
    solve_voltage, unit_current, voltage_difference_identity, ProfileVerdict,
};
use rwce_core::environment::WeightRule;
use rwce_core::graph::{ball, collapse_boundary_at, Ball, GraphFamily};
use rwce_core::network::Network;
use rwce_core::verify::{random_conductances, random_connected_graph};
use rwce_core::Error;

fn to_network(net: &Net) -> Network {
    Network::new(net.n, net.edges.clone(), net.c.clone()).unwrap()
}

#[test]
fn series_and_parallel() {
    let series = Network::new(3, vec![(0, 1), (1, 2)], vec![1.0, 0.5]).unwrap();
    assert!((effective_resistance(&series, 0, &[2]).unwrap() - 3.0).abs() < 1e-12);
    let parallel = Network::unit(4, vec![(0, 1), (1, 3), (0, 2), (2, 3)]).unwrap();
    assert!((effective_resistance(&parallel, 0, &[3]).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn multiple_sinks_are_grounded_together() {
    // path 0-1-2 with source 1: the two unit edges are in parallel
    let net = Network::unit(3, vec![(0, 1), (1, 2)]).unwrap();
    assert!((effective_resistance(&net, 1, &[0, 2]).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn disconnected_terminals_are_rejected() {
    let net = Network::unit(4, vec![(0, 1), (2, 3)]).unwrap();
    assert!(matches!(solve_voltage(&net, 0, &[3]), Err(Error::Connectivity(_))));
    assert!(matches!(solve_voltage(&net, 0, &[0]), Err(Error::Precondition(_))));
}

#[test]
fn improper_weights_are_rejected() {
    assert!(matches!(
        Network::new(2, vec![(0, 1)], vec![0.0]),
        Err(Error::Domain(_))
    ));
    assert!(Network::new(2, vec![(0, 1)], vec![f64::INFINITY]).is_err());
}

#[test]
fn line_resistance_is_half_the_radius() {
    let b = ball(&GraphFamily::line(), 25).unwrap();
    let w = vec![1.0; b.edges().len()];
    for n in 1..=25 {
        let r = ball_resistance(&b, n, &w).unwrap();
        assert!((r - n as f64 / 2.0).abs() < 1e-10);
    }
}

#[test]
fn geometric_line_matches_series_formula() {
    // right side: sum_{k<n} 2^-k; left side: sum_{k<n} 2^(k+1); in parallel
    let fam = GraphFamily::line();
    let rule = WeightRule::Geometric { ratio: 2.0 };
    let b = ball(&fam, 20).unwrap();
    let w = rule.weights(&b).unwrap();
    for n in 1..=20 {
        let right: f64 = (0..n).map(|k| 0.5f64.powi(k as i32)).sum();
        let left: f64 = (0..n).map(|k| 2f64.powi(k as i32 + 1)).sum();
        let oracle = 1.0 / (1.0 / right + 1.0 / left);
        let r = ball_resistance(&b, n, &w).unwrap();
        assert!((r - oracle).abs() < 1e-10 * oracle, "n={n}");
    }
}

#[test]
fn voltages_agree_with_gaussian_elimination() {
    let mut rng = common::rng(1);
    for fam in [GraphFamily::grid2d(), GraphFamily::tree(2).unwrap()] {
        let b = ball(&fam, 4).unwrap();
        let w = random_conductances(&mut rng, b.edges().len());
        let cn = collapse_boundary_at(&b, 4, &w).unwrap();
        let (net, a, z, inside) = collapse(&b, 4, &w, |_| true);
        let oracle = net.voltage(a, &[z]);
        let field = solve_voltage(&cn.network, cn.origin(), &[cn.sink]).unwrap();
        for (i, &x) in inside.iter().enumerate() {
            let node = cn.node_of(x).unwrap();
            assert!((field.value(node) - oracle[i]).abs() < 1e-12);
        }
        let r = effective_resistance(&cn.network, cn.origin(), &[cn.sink]).unwrap();
        assert!((r - net.resistance(a, &[z])).abs() < 1e-11 * r);
    }
}

#[test]
fn fixtures_are_harmonic() {
    for name in common::FIXTURES {
        let (cfg, fam, env) = common::fixture(name);
        let b = Ball::build(&fam, *cfg.radii.last().unwrap()).unwrap();
        let w = env.base.weights(&b).unwrap();
        for &n in &cfg.radii {
            let cn = collapse_boundary_at(&b, n, &w).unwrap();
            let f = solve_voltage(&cn.network, cn.origin(), &[cn.sink]).unwrap();
            let res = harmonic_residual(&cn.network, &f.values, &[cn.origin(), cn.sink]);
            assert!(res <= 1e-10, "{name} n={n}: {res}");
        }
    }
}

#[test]
fn unit_current_obeys_kirchhoff_and_ohm() {
    let mut rng = common::rng(2);
    let b = ball(&GraphFamily::grid2d(), 5).unwrap();
    let w = random_conductances(&mut rng, b.edges().len());
    let cn = collapse_boundary_at(&b, 5, &w).unwrap();
    let net = &cn.network;
    let f = solve_voltage(net, cn.origin(), &[cn.sink]).unwrap();
    let i = unit_current(net, cn.origin(), &[cn.sink]).unwrap();
    assert!(node_balance_defect(net, &i) < 1e-12);
    assert!(kirchhoff_defect(net, &i) < 1e-12);
    assert!(ohm_defect(net, &f, &i) < 1e-12);
    assert!((i.divergence(net, cn.origin()) - 1.0).abs() < 1e-12);
    let r = effective_resistance(net, cn.origin(), &[cn.sink]).unwrap();
    assert!((flow_energy(&i.flow, &net.resistances()) - r).abs() < 1e-12 * r);
}

#[test]
fn fundamental_cycles_span_the_cycle_space() {
    let b = ball(&GraphFamily::grid2d(), 3).unwrap();
    let net = Network::from_ball(&b, 3, &vec![1.0; b.edges().len()]).unwrap();
    let cycles = fundamental_cycles(&net);
    assert_eq!(cycles.len(), net.edge_count() - net.vertex_count() + 1);
    for cycle in &cycles {
        let mut flow = vec![0.0; net.edge_count()];
        for &(e, s) in cycle {
            flow[e] += s;
        }
        for x in 0..net.vertex_count() {
            let div: f64 = net
                .incident(x)
                .iter()
                .map(|&(_, e)| if net.edges()[e].0 == x { flow[e] } else { -flow[e] })
                .sum();
            assert_eq!(div, 0.0);
        }
    }
}

#[test]
fn return_probability_on_the_line() {
    let b = ball(&GraphFamily::line(), 20).unwrap();
    let w = vec![1.0; b.edges().len()];
    for n in 2..=20 {
        let cn = collapse_boundary_at(&b, n, &w).unwrap();
        let p = return_probability(&cn).unwrap();
        assert!((p - (1.0 - 1.0 / n as f64)).abs() < 1e-12);
    }
}

#[test]
fn profile_verdicts() {
    let unit = |b: &Ball| WeightRule::Unit.weights(b);
    let radii: Vec<usize> = (2..=20).collect();
    let line = resistance_profile(&GraphFamily::line(), &unit, &radii).unwrap();
    assert_eq!(line.verdict, ProfileVerdict::Divergent);
    assert!(line.monotone);
    let geo = |b: &Ball| WeightRule::Geometric { ratio: 2.0 }.weights(b);
    let radii: Vec<usize> = (2..=30).collect();
    let p = resistance_profile(&GraphFamily::line(), &geo, &radii).unwrap();
    assert_eq!(p.verdict, ProfileVerdict::Convergent);
    assert!((p.limit_estimate.unwrap() - 2.0).abs() < 1e-6);
    let tree = resistance_profile(&GraphFamily::tree(2).unwrap(), &unit, &[2, 4, 6, 8, 10]).unwrap();
    assert_eq!(tree.verdict, ProfileVerdict::Convergent);
    // binary tree with a degree-2 root: R_inf = sum_k 1 / 2^(k+1) = 1
    assert!((tree.limit_estimate.unwrap() - 1.0).abs() < 1e-3);
}

#[test]
fn crossings_estimate_the_unit_current() {
    let net = Network::unit(5, vec![(0, 1), (1, 2), (0, 3), (3, 2), (1, 3), (2, 4)]).unwrap();
    let i = unit_current(&net, 0, &[4]).unwrap();
    let est = net_crossings_estimate(&net, 0, &[4], 4000, 9, 100_000).unwrap();
    assert!(est.max_z(&i.flow) < 4.5);
    assert!(matches!(
        net_crossings_estimate(&net, 0, &[4], 10, 9, 1),
        Err(Error::AbsorptionFailure { .. })
    ));
}

#[test]
fn separator_bounds_the_far_side() {
    let net = Network::unit(5, vec![(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
    let chk = separator_bound_check(&net, 0, &[2], &[4], 3).unwrap();
    assert!(chk.holds);
    assert!(chk.max_on_separator >= chk.value_at_target);
    assert!(matches!(
        separator_bound_check(&net, 0, &[3], &[4], 2),
        Err(Error::Precondition(_))
    ));
}

fn random_net(rng: &mut impl Rng) -> Net {
    let n = rng.random_range(3..=12);
    let edges = random_connected_graph(rng, n, 0.3);
    let c = random_conductances(rng, edges.len());
    Net { n, edges, c }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn resistance_matches_oracle(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let net = random_net(&mut rng);
        let z = net.n - 1;
        let lib = effective_resistance(&to_network(&net), 0, &[z]).unwrap();
        let oracle = net.resistance(0, &[z]);
        prop_assert!((lib - oracle).abs() <= 1e-10 * oracle);
    }

    #[test]
    fn raising_a_resistance_never_lowers_effective_resistance(seed in any::<u64>(), factor in 1.0f64..10.0) {
        let mut rng = common::rng(seed);
        let net = random_net(&mut rng);
        let z = net.n - 1;
        let e = rng.random_range(0..net.edges.len());
        let mut bumped = net.clone();
        bumped.c[e] /= factor;
        let before = effective_resistance(&to_network(&net), 0, &[z]).unwrap();
        let after = effective_resistance(&to_network(&bumped), 0, &[z]).unwrap();
        prop_assert!(after >= before * (1.0 - 1e-12));
    }

    #[test]
    fn unit_current_minimizes_energy(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let net = random_net(&mut rng);
        let z = net.n - 1;
        let lib = to_network(&net);
        let i = unit_current(&lib, 0, &[z]).unwrap();
        let oracle = net.unit_current(0, &[z]);
        for (a, b) in i.flow.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        let res = lib.resistances();
        let base = flow_energy(&i.flow, &res);
        for cycle in fundamental_cycles(&lib) {
            let w = rng.random_range(-1.0..1.0);
            let mut flow = i.flow.clone();
            for (e, s) in cycle {
                flow[e] += w * s;
            }
            prop_assert!(flow_energy(&flow, &res) >= base - 1e-12);
        }
    }

    #[test]
    fn perturbation_bound_holds(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let net = random_net(&mut rng);
        let other = Net { c: random_conductances(&mut rng, net.edges.len()), ..net.clone() };
        let chk = perturbation_check(&to_network(&net), &to_network(&other), 0, &[net.n - 1]).unwrap();
        prop_assert!(chk.holds);
        prop_assert!(chk.difference <= chk.bound + 1e-12);
    }

    #[test]
    fn voltage_difference_identity_holds(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let net = random_net(&mut rng);
        prop_assume!(net.n >= 3);
        let next = Net { c: random_conductances(&mut rng, net.edges.len()), ..net.clone() };
        let (a, b, x) = (0, net.n - 1, rng.random_range(1..net.n - 1));
        let sides = voltage_difference_identity(&to_network(&net), &to_network(&next), a, b, x).unwrap();
        let lhs = net.voltage(a, &[b])[x] - next.voltage(a, &[b])[x];
        prop_assert!((sides.lhs - lhs).abs() < 1e-10);
        prop_assert!(sides.discrepancy() < 1e-8);
    }
}
