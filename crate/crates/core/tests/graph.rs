mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use rwce_core::graph::{
    ball, collapse_boundary, collapse_restricted, split_at_origin, Ball, Finiteness, GraphFamily,
    Label,
};
use rwce_core::Error;

fn families() -> Vec<GraphFamily> {
    vec![
        GraphFamily::line(),
        GraphFamily::grid2d(),
        GraphFamily::tree(2).unwrap(),
        GraphFamily::tree_with_root_degree(2, 3).unwrap(),
        common::fixture("grid5x5_scheduled").1,
        common::fixture("triangle_orrw").1,
    ]
}

#[test]
fn line_ball_sizes() {
    for n in 1..30 {
        let b = ball(&GraphFamily::line(), n).unwrap();
        assert_eq!(b.len(), 2 * n + 1);
        assert_eq!(b.edges().len(), 2 * n);
        assert_eq!(b.boundary().len(), 2);
    }
}

#[test]
fn grid_ball_is_the_l1_diamond() {
    for n in 1..10 {
        let b = ball(&GraphFamily::grid2d(), n).unwrap();
        assert_eq!(b.len(), 2 * n * n + 2 * n + 1);
        for (x, label) in b.labels().iter().enumerate() {
            let l1 = (label.0[0].abs() + label.0[1].abs()) as usize;
            assert_eq!(b.dist(x), l1);
        }
        // every lattice edge with both ends inside
        let inside: HashSet<&Label> = b.labels().iter().collect();
        let mut count = 0;
        for label in &inside {
            let right = Label(vec![label.0[0] + 1, label.0[1]]);
            let up = Label(vec![label.0[0], label.0[1] + 1]);
            count += inside.contains(&right) as usize + inside.contains(&up) as usize;
        }
        assert_eq!(b.edges().len(), count);
    }
}

#[test]
fn tree_ball_counts() {
    let b = ball(&GraphFamily::tree(2).unwrap(), 5).unwrap();
    assert_eq!(b.len(), (1 << 6) - 1);
    let r = ball(&GraphFamily::tree_with_root_degree(2, 3).unwrap(), 4).unwrap();
    assert_eq!(r.len(), 1 + 3 * ((1 << 4) - 1));
    assert_eq!(r.degree(0), 3);
    assert!((1..r.len()).all(|x| r.degree(x) == 3));
}

#[test]
fn edge_list_fixture_parses() {
    let (_, fam, _) = common::fixture("grid5x5_scheduled");
    let b = ball(&fam, 4).unwrap();
    assert_eq!(b.len(), 25);
    assert_eq!(b.edges().len(), 40);
    assert_eq!(fam.origin(), &Label::scalar(12));
    assert_eq!(b.boundary().len(), 4);
    assert!((0..b.len()).all(|x| b.is_complete(x)));
}

#[test]
fn edge_list_rejections() {
    assert!(matches!(
        GraphFamily::parse_edge_list("0 1\n1 1\n"),
        Err(Error::StructuralGraph(_))
    ));
    assert!(GraphFamily::parse_edge_list("0 1\n2 3\n").is_err());
    assert!(matches!(GraphFamily::parse_edge_list("0 x\n"), Err(Error::Config(_))));
    assert!(GraphFamily::parse_edge_list("# nothing\n\n").is_err());
}

#[test]
fn collapse_of_the_line() {
    let b = ball(&GraphFamily::line(), 3).unwrap();
    let w: Vec<f64> = (0..b.edges().len()).map(|e| 1.0 + e as f64).collect();
    let cn = collapse_boundary(&b, &w).unwrap();
    assert_eq!(cn.network.vertex_count(), 6);
    assert_eq!(cn.network.edge_count(), 6);
    // both boundary edges end in the sink and keep their weights
    let sink_total = cn.network.total_conductance(cn.sink);
    let expected: f64 = b
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, &(u, v))| b.dist(u) == 3 || b.dist(v) == 3)
        .map(|(e, _)| w[e])
        .sum();
    assert_eq!(sink_total, expected);
}

#[test]
fn collapse_rejects_short_weights() {
    let b = ball(&GraphFamily::grid2d(), 2).unwrap();
    assert!(matches!(
        collapse_boundary(&b, &[1.0; 3]),
        Err(Error::IncompleteConfig(_))
    ));
}

#[test]
fn collapse_matches_test_side_construction() {
    for fam in families() {
        let b = ball(&fam, 4).unwrap();
        if b.boundary().is_empty() {
            continue;
        }
        let w: Vec<f64> = (0..b.edges().len()).map(|e| 0.5 + (e % 7) as f64).collect();
        let cn = collapse_boundary(&b, &w).unwrap();
        let (net, _, _, inside) = common::collapse(&b, 4, &w, |_| true);
        assert_eq!(cn.network.vertex_count(), net.n, "{}", fam.name());
        let total: f64 = cn.network.conductances().iter().sum();
        let oracle: f64 = net.c.iter().sum();
        assert!((total - oracle).abs() < 1e-12);
        for (i, &x) in inside.iter().enumerate() {
            let node = cn.node_of(x).unwrap();
            let got = cn.network.total_conductance(node);
            let want: f64 = net
                .edges
                .iter()
                .zip(&net.c)
                .filter(|(&(u, v), _)| u == i || v == i)
                .map(|(_, c)| c)
                .sum();
            assert!((got - want).abs() < 1e-12);
        }
    }
}

#[test]
fn restricted_collapse_keeps_one_side() {
    let fam = GraphFamily::line();
    let b = ball(&fam, 5).unwrap();
    let split = split_at_origin(&fam, 4).unwrap();
    let w = vec![1.0; b.edges().len()];
    for k in 0..2 {
        let cn = collapse_restricted(&b, 5, &w, |x| split.component_of(&b, x) == Some(k)).unwrap();
        // the half line 0..5 with its end as sink
        assert_eq!(cn.network.vertex_count(), 6);
        assert_eq!(cn.network.edge_count(), 5);
    }
}

#[test]
fn component_splits() {
    let line = split_at_origin(&GraphFamily::line(), 4).unwrap();
    assert_eq!(line.components.len(), 2);
    assert_eq!(line.d_max, 1);
    assert!(line
        .components
        .iter()
        .all(|c| c.finiteness == Finiteness::PresumedInfinite));

    let grid = split_at_origin(&GraphFamily::grid2d(), 4).unwrap();
    assert_eq!(grid.components.len(), 1);
    // the four neighbors of the origin first meet through (±1, ±1) at radius 2
    assert_eq!(grid.d_max, 3);

    let tree = split_at_origin(&GraphFamily::tree(3).unwrap(), 3).unwrap();
    assert_eq!(tree.components.len(), 3);
    assert_eq!(tree.d_max, 1);

    let (_, tri, _) = common::fixture("triangle_orrw");
    let s = split_at_origin(&tri, 4).unwrap();
    assert_eq!(s.components.len(), 1);
    assert_eq!(s.d_max, 2);
}

#[test]
fn finite_component_is_tagged() {
    // origin 2 of the triangle-with-tail splits into the triangle side and the tail
    let (_, fam, _) = common::fixture("triangle_orrw");
    let fam = fam.with_origin(Label::scalar(2)).unwrap();
    let s = split_at_origin(&fam, 3).unwrap();
    assert_eq!(s.components.len(), 2);
    let finite = s
        .components
        .iter()
        .filter(|c| c.finiteness == Finiteness::Finite)
        .count();
    assert_eq!(finite, 1);
}

fn check_prefix(a: &Ball, b: &Ball) {
    assert_eq!(a.labels(), &b.labels()[..a.len()]);
    assert_eq!(a.edges(), &b.edges()[..a.edges().len()]);
    for l in 0..=a.radius() {
        assert_eq!(a.vertices_within(l), b.vertices_within(l));
        assert_eq!(a.edges_within(l), b.edges_within(l));
    }
    for x in 0..a.len() {
        assert_eq!(a.dist(x), b.dist(x));
        assert_eq!(a.first_hop(x), b.first_hop(x));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn balls_are_prefix_stable(fam_idx in 0usize..4, r in 1usize..6, extra in 1usize..4) {
        let fam = &families()[fam_idx];
        let small = ball(fam, r).unwrap();
        let big = ball(fam, r + extra).unwrap();
        check_prefix(&small, &big);
    }

    #[test]
    fn edges_are_numbered_by_outer_endpoint(fam_idx in 0usize..4, r in 1usize..6) {
        let b = ball(&families()[fam_idx], r).unwrap();
        for l in 0..=r {
            for (e, &(u, v)) in b.edges().iter().enumerate() {
                let outer = b.dist(u).max(b.dist(v));
                prop_assert_eq!(e < b.edges_within(l), outer <= l);
            }
        }
    }

    #[test]
    fn adjacency_is_symmetric(fam_idx in 0usize..6, r in 1usize..5) {
        let b = ball(&families()[fam_idx], r).unwrap();
        for x in 0..b.len() {
            for &(y, e) in b.incident(x) {
                prop_assert!(b.incident(y).iter().any(|&(z, f)| z == x && f == e));
                prop_assert!(b.dist(x).abs_diff(b.dist(y)) <= 1);
            }
        }
    }
}
