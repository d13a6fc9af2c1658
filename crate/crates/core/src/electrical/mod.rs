//! Voltages, currents, energies and effective resistances on finite networks.

pub mod linalg;

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{collapse_boundary_at, Ball, CollapsedNetwork, GraphFamily};
use crate::network::Network;

/// Harmonic potential with `v(source) = 1` and `v = 0` on the sinks.
#[derive(Clone, Debug, Serialize)]
pub struct VoltageField {
    pub values: Vec<f64>,
    pub source: usize,
    pub sinks: Vec<usize>,
    /// Largest harmonicity defect over free vertices.
    pub residual: f64,
}

impl VoltageField {
    pub fn value(&self, x: usize) -> f64 {
        self.values[x]
    }
}

/// Flow along each network edge in its stored orientation `(u, v)`.
#[derive(Clone, Debug, Serialize)]
pub struct EdgeFlow {
    pub flow: Vec<f64>,
    pub source: usize,
    pub sinks: Vec<usize>,
    pub strength: f64,
}

impl EdgeFlow {
    /// Net flow from `x` to `y` summed over all edges joining them.
    pub fn between(&self, net: &Network, x: usize, y: usize) -> f64 {
        net.incident(x)
            .iter()
            .filter(|&&(z, _)| z == y)
            .map(|&(_, e)| self.oriented(net, e, x))
            .sum()
    }

    /// Flow on edge `e` leaving `from`.
    pub fn oriented(&self, net: &Network, e: usize, from: usize) -> f64 {
        if net.edges()[e].0 == from {
            self.flow[e]
        } else {
            -self.flow[e]
        }
    }

    /// Divergence `J_x`: net flow out of `x`.
    pub fn divergence(&self, net: &Network, x: usize) -> f64 {
        net.incident(x)
            .iter()
            .map(|&(_, e)| self.oriented(net, e, x))
            .sum()
    }
}

fn check_terminals(net: &Network, source: usize, sinks: &[usize]) -> Result<()> {
    let n = net.vertex_count();
    if source >= n || sinks.iter().any(|&s| s >= n) {
        return Err(Error::Precondition("terminal outside the network".into()));
    }
    if sinks.is_empty() {
        return Err(Error::Precondition("sink set is empty".into()));
    }
    if sinks.contains(&source) {
        return Err(Error::Precondition("source lies in the sink set".into()));
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([source]);
    seen[source] = true;
    while let Some(x) = queue.pop_front() {
        for &(y, _) in net.incident(x) {
            if !seen[y] {
                seen[y] = true;
                queue.push_back(y);
            }
        }
    }
    if let Some(x) = seen.iter().position(|s| !s) {
        return Err(Error::Connectivity(format!(
            "vertex {x} is not reachable from the source"
        )));
    }
    Ok(())
}

/// `max_x |v(x) - sum_y P(x, y) v(y)|` over vertices not in `fixed`.
pub fn harmonic_residual(net: &Network, values: &[f64], fixed: &[usize]) -> f64 {
    (0..net.vertex_count())
        .filter(|x| !fixed.contains(x))
        .map(|x| {
            let total = net.total_conductance(x);
            let mean: f64 = net
                .incident(x)
                .iter()
                .map(|&(y, e)| net.conductance(e) * values[y])
                .sum::<f64>()
                / total;
            (values[x] - mean).abs()
        })
        .fold(0.0, f64::max)
}

pub fn solve_voltage(net: &Network, source: usize, sinks: &[usize]) -> Result<VoltageField> {
    check_terminals(net, source, sinks)?;
    let mut fixed: Vec<(usize, f64)> = vec![(source, 1.0)];
    fixed.extend(sinks.iter().map(|&s| (s, 0.0)));
    let values = linalg::solve_dirichlet(net, &fixed)?;
    let mut terminals = sinks.to_vec();
    terminals.push(source);
    let residual = harmonic_residual(net, &values, &terminals);
    Ok(VoltageField {
        values,
        source,
        sinks: sinks.to_vec(),
        residual,
    })
}

/// Current `C(e) (v(u) - v(w))` induced by a voltage; its strength is `1 / R_eff`.
pub fn induced_current(net: &Network, field: &VoltageField) -> EdgeFlow {
    let flow: Vec<f64> = net
        .edges()
        .iter()
        .zip(net.conductances())
        .map(|(&(u, w), &c)| c * (field.values[u] - field.values[w]))
        .collect();
    let strength = net
        .incident(field.source)
        .iter()
        .map(|&(y, e)| net.conductance(e) * (1.0 - field.values[y]))
        .sum();
    EdgeFlow {
        flow,
        source: field.source,
        sinks: field.sinks.clone(),
        strength,
    }
}

/// The unit current flow from `source` to `sinks`.
pub fn unit_current(net: &Network, source: usize, sinks: &[usize]) -> Result<EdgeFlow> {
    let field = solve_voltage(net, source, sinks)?;
    Ok(normalize(induced_current(net, &field)))
}

fn normalize(mut flow: EdgeFlow) -> EdgeFlow {
    let s = flow.strength;
    for f in &mut flow.flow {
        *f /= s;
    }
    flow.strength = 1.0;
    flow
}

/// `E(j) = sum_e j(e)^2 R(e)`.
pub fn flow_energy(flow: &[f64], resistances: &[f64]) -> f64 {
    flow.iter().zip(resistances).map(|(j, r)| j * j * r).sum()
}

pub fn effective_resistance(net: &Network, source: usize, sinks: &[usize]) -> Result<f64> {
    let field = solve_voltage(net, source, sinks)?;
    Ok(1.0 / induced_current(net, &field).strength)
}

/// Largest violation of node balance: `J_x = 0` off the terminals and `J_source = strength`.
pub fn node_balance_defect(net: &Network, flow: &EdgeFlow) -> f64 {
    (0..net.vertex_count())
        .filter(|x| !flow.sinks.contains(x))
        .map(|x| {
            let target = if x == flow.source { flow.strength } else { 0.0 };
            (flow.divergence(net, x) - target).abs()
        })
        .fold(0.0, f64::max)
}

/// Fundamental cycles of a BFS spanning tree as `(edge, orientation sign)` lists.
pub fn fundamental_cycles(net: &Network) -> Vec<Vec<(usize, f64)>> {
    let n = net.vertex_count();
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut depth = vec![usize::MAX; n];
    let mut in_tree = vec![false; net.edge_count()];
    for root in 0..n {
        if depth[root] != usize::MAX {
            continue;
        }
        depth[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(x) = queue.pop_front() {
            for &(y, e) in net.incident(x) {
                if depth[y] == usize::MAX {
                    depth[y] = depth[x] + 1;
                    parent[y] = Some((x, e));
                    in_tree[e] = true;
                    queue.push_back(y);
                }
            }
        }
    }
    let sign = |e: usize, from: usize| if net.edges()[e].0 == from { 1.0 } else { -1.0 };
    let mut cycles = Vec::new();
    for (e, &(u, w)) in net.edges().iter().enumerate() {
        if in_tree[e] {
            continue;
        }
        // u -> w along e, then back from w to u through the tree
        let mut forward = vec![(e, 1.0)];
        let mut back = Vec::new();
        let (mut x, mut y) = (w, u);
        while x != y {
            if depth[x] >= depth[y] {
                let (p, pe) = parent[x].expect("tree parent");
                forward.push((pe, sign(pe, x)));
                x = p;
            } else {
                let (p, pe) = parent[y].expect("tree parent");
                back.push((pe, sign(pe, p)));
                y = p;
            }
        }
        forward.extend(back.into_iter().rev());
        cycles.push(forward);
    }
    cycles
}

/// Largest `|sum_cycle ±j(e) R(e)|` over the fundamental cycles.
pub fn kirchhoff_defect(net: &Network, flow: &EdgeFlow) -> f64 {
    fundamental_cycles(net)
        .iter()
        .map(|cyc| {
            cyc.iter()
                .map(|&(e, s)| s * flow.flow[e] * net.resistance(e))
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max)
}

/// Largest `|v(u) - v(w) - i(e) R(e) strength(v)|` over edges, for the unit current `i`.
pub fn ohm_defect(net: &Network, field: &VoltageField, unit: &EdgeFlow) -> f64 {
    let strength = induced_current(net, field).strength;
    net.edges()
        .iter()
        .enumerate()
        .map(|(e, &(u, w))| {
            let drop = field.values[u] - field.values[w];
            (drop - unit.flow[e] * net.resistance(e) * strength).abs()
        })
        .fold(0.0, f64::max)
}

/// `1 - 1/(C(a) R_n)` for the collapsed ball, the probability of returning to
/// the origin before reaching the boundary.
pub fn return_probability(cn: &CollapsedNetwork) -> Result<f64> {
    let a = cn.origin();
    let r = effective_resistance(&cn.network, a, &[cn.sink])?;
    let ca = cn.network.total_conductance(a);
    let product = ca * r;
    if product < 1.0 - 1e-9 {
        return Err(Error::InternalConsistency(format!(
            "C(a) * R = {product} is below 1"
        )));
    }
    Ok((1.0 - 1.0 / product).clamp(0.0, 1.0))
}

/// `R_n` between the origin and the collapsed boundary of the radius-`n` sub-ball.
pub fn ball_resistance(ball: &Ball, n: usize, weights: &[f64]) -> Result<f64> {
    let cn = collapse_boundary_at(ball, n, weights)?;
    effective_resistance(&cn.network, cn.origin(), &[cn.sink])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileVerdict {
    Divergent,
    Convergent,
}

/// Growth per radius step above which the tail counts as divergent.
pub const DIVERGENCE_SLOPE: f64 = 1e-6;
const TAIL_STEPS: usize = 5;
/// Tail increments shrinking at least this fast per step are read as a
/// convergent geometric series even while still above the slope threshold.
pub const GEOMETRIC_DECAY: f64 = 0.75;

#[derive(Clone, Debug, Serialize)]
pub struct ResistanceProfile {
    pub radii: Vec<usize>,
    pub values: Vec<f64>,
    pub monotone: bool,
    pub verdict: ProfileVerdict,
    /// Extrapolated limit when convergent.
    pub limit_estimate: Option<f64>,
    /// Largest radius solved; the verdict is a heuristic at this truncation.
    pub truncation_radius: usize,
    pub tail_radii: Vec<usize>,
    pub tail_values: Vec<f64>,
}

/// Effective resistance at each radius, with a divergence verdict read off
/// the last few radius steps below the largest requested radius.
pub fn resistance_profile(
    family: &GraphFamily,
    weights_fn: &(dyn Fn(&Ball) -> Result<Vec<f64>> + Sync),
    radii: &[usize],
) -> Result<ResistanceProfile> {
    let max_r = *radii
        .iter()
        .max()
        .ok_or_else(|| Error::Precondition("no radii requested".into()))?;
    if radii.contains(&0) {
        return Err(Error::Precondition("radii must be positive".into()));
    }
    let ball = Ball::build(family, max_r)?;
    let weights = weights_fn(&ball)?;
    let tail_radii: Vec<usize> = (max_r.saturating_sub(TAIL_STEPS).max(1)..=max_r).collect();
    let mut all: Vec<usize> = radii.iter().chain(&tail_radii).copied().collect();
    all.sort_unstable();
    all.dedup();
    let solved: Vec<(usize, f64)> = all
        .par_iter()
        .map(|&n| ball_resistance(&ball, n, &weights).map(|r| (n, r)))
        .collect::<Result<_>>()?;
    let lookup = |n: usize| solved.iter().find(|(m, _)| *m == n).map(|(_, r)| *r).unwrap();

    let values: Vec<f64> = radii.iter().map(|&n| lookup(n)).collect();
    let sorted_values: Vec<f64> = solved.iter().map(|(_, r)| *r).collect();
    let monotone = sorted_values
        .windows(2)
        .all(|w| w[1] >= w[0] * (1.0 - 1e-12));
    let tail_values: Vec<f64> = tail_radii.iter().map(|&n| lookup(n)).collect();
    let increments: Vec<f64> = tail_values.windows(2).map(|w| w[1] - w[0]).collect();
    let geometric = increments.len() >= 2
        && increments.windows(2).all(|w| w[1] <= GEOMETRIC_DECAY * w[0]);
    let divergent = !increments.is_empty()
        && increments.iter().all(|&d| d > DIVERGENCE_SLOPE)
        && !geometric;
    let limit_estimate = if divergent {
        None
    } else {
        let k = tail_values.len();
        let last = tail_values[k - 1];
        if k >= 3 {
            let (x0, x1, x2) = (tail_values[k - 3], tail_values[k - 2], last);
            let d1 = x2 - x1;
            let d2 = x2 - 2.0 * x1 + x0;
            if d2 < 0.0 && d1 > 0.0 {
                Some(x2 - d1 * d1 / d2)
            } else {
                Some(last)
            }
        } else {
            Some(last)
        }
    };
    Ok(ResistanceProfile {
        radii: radii.to_vec(),
        values,
        monotone,
        verdict: if divergent {
            ProfileVerdict::Divergent
        } else {
            ProfileVerdict::Convergent
        },
        limit_estimate,
        truncation_radius: max_r,
        tail_radii,
        tail_values,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PerturbationCheck {
    pub bound: f64,
    pub difference: f64,
    pub holds: bool,
}

/// Compares `|R_eff(C1) - R_eff(C2)|` with `sum_e |R1(e) - R2(e)|`.
pub fn perturbation_check(
    net1: &Network,
    net2: &Network,
    source: usize,
    sinks: &[usize],
) -> Result<PerturbationCheck> {
    if net1.edges() != net2.edges() {
        return Err(Error::Precondition(
            "configurations live on different edge sets".into(),
        ));
    }
    let bound: f64 = net1
        .resistances()
        .iter()
        .zip(net2.resistances())
        .map(|(a, b)| (a - b).abs())
        .sum();
    let r1 = effective_resistance(net1, source, sinks)?;
    let r2 = effective_resistance(net2, source, sinks)?;
    let difference = (r1 - r2).abs();
    Ok(PerturbationCheck {
        bound,
        difference,
        holds: difference <= bound + 1e-12 * r1.max(r2),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossingEstimate {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub trials: usize,
}

impl CrossingEstimate {
    /// Largest `|mean - target| / std_err` over edges, skipping exact agreements.
    pub fn max_z(&self, target: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.std_err)
            .zip(target)
            .map(|((m, s), t)| {
                let d = (m - t).abs();
                if d <= 1e-12 {
                    0.0
                } else if *s == 0.0 {
                    f64::INFINITY
                } else {
                    d / s
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Monte Carlo mean of signed edge crossings of the walk from `source` until it hits a sink.
pub fn net_crossings_estimate(
    net: &Network,
    source: usize,
    sinks: &[usize],
    trials: usize,
    seed: u64,
    max_steps: usize,
) -> Result<CrossingEstimate> {
    check_terminals(net, source, sinks)?;
    if trials == 0 {
        return Err(Error::Precondition("trials must be at least 1".into()));
    }
    let m = net.edge_count();
    let mut is_sink = vec![false; net.vertex_count()];
    for &s in sinks {
        is_sink[s] = true;
    }
    let totals: Vec<f64> = (0..net.vertex_count())
        .map(|x| net.total_conductance(x))
        .collect();
    let per_trial: Vec<Vec<(usize, i64)>> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut counts: Vec<(usize, i64)> = Vec::new();
            let mut x = source;
            for _ in 0..max_steps {
                if is_sink[x] {
                    counts.sort_unstable();
                    let mut merged: Vec<(usize, i64)> = Vec::new();
                    for (e, c) in counts {
                        match merged.last_mut() {
                            Some(last) if last.0 == e => last.1 += c,
                            _ => merged.push((e, c)),
                        }
                    }
                    return Ok(merged);
                }
                let mut u = rng.random::<f64>() * totals[x];
                let inc = net.incident(x);
                let mut pick = inc[inc.len() - 1];
                for &(y, e) in inc {
                    u -= net.conductance(e);
                    if u < 0.0 {
                        pick = (y, e);
                        break;
                    }
                }
                let (y, e) = pick;
                counts.push((e, if net.edges()[e].0 == x { 1 } else { -1 }));
                x = y;
            }
            Err(Error::AbsorptionFailure { max_steps })
        })
        .collect::<Result<_>>()?;
    let mut sum = vec![0.0; m];
    let mut sum_sq = vec![0.0; m];
    for trial in &per_trial {
        for &(e, c) in trial {
            sum[e] += c as f64;
            sum_sq[e] += (c * c) as f64;
        }
    }
    let t = trials as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / t).collect();
    let std_err = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, mu)| {
            let var = if trials > 1 {
                ((sq - t * mu * mu) / (t - 1.0)).max(0.0)
            } else {
                0.0
            };
            (var / t).sqrt()
        })
        .collect();
    Ok(CrossingEstimate {
        mean,
        std_err,
        trials,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct IdentitySides {
    pub lhs: f64,
    pub rhs: f64,
}

impl IdentitySides {
    pub fn discrepancy(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

/// Both sides of the voltage-change identity: `v_t(x) - v_{t+1}(x)` against
/// `(1/R_t) sum_e (R_t - R_{t+1})(e) i_{t+1}[x -> {a, b}](e) i_t[a -> b](e)`.
pub fn voltage_difference_identity(
    net_t: &Network,
    net_next: &Network,
    a: usize,
    b: usize,
    x: usize,
) -> Result<IdentitySides> {
    if net_t.edges() != net_next.edges() {
        return Err(Error::Precondition(
            "configurations live on different edge sets".into(),
        ));
    }
    if x == a || x == b {
        return Err(Error::Precondition("x must differ from a and b".into()));
    }
    let v_t = solve_voltage(net_t, a, &[b])?;
    let v_next = solve_voltage(net_next, a, &[b])?;
    let lhs = v_t.value(x) - v_next.value(x);

    let i0 = unit_current(net_t, a, &[b])?;
    let r_t = effective_resistance(net_t, a, &[b])?;
    let i1 = unit_current(net_next, x, &[a, b])?;
    let sum: f64 = (0..net_t.edge_count())
        .map(|e| (net_t.resistance(e) - net_next.resistance(e)) * i1.flow[e] * i0.flow[e])
        .sum();
    Ok(IdentitySides {
        lhs,
        rhs: sum / r_t,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SeparatorCheck {
    pub max_on_separator: f64,
    pub value_at_target: f64,
    pub holds: bool,
}

/// With `u` held at 1 and `A` grounded, checks `max_S v >= v(y)` when `S` separates `u` from `y`.
pub fn separator_bound_check(
    net: &Network,
    u: usize,
    separator: &[usize],
    grounded: &[usize],
    y: usize,
) -> Result<SeparatorCheck> {
    if separator.is_empty() || grounded.is_empty() {
        return Err(Error::Precondition("S and A must be non-empty".into()));
    }
    if separator.contains(&u)
        || grounded.contains(&u)
        || separator.iter().any(|s| grounded.contains(s))
    {
        return Err(Error::Precondition("{u}, S and A must be disjoint".into()));
    }
    let n = net.vertex_count();
    let mut seen = vec![false; n];
    for &s in separator {
        seen[s] = true;
    }
    let mut queue = VecDeque::from([u]);
    seen[u] = true;
    while let Some(z) = queue.pop_front() {
        if z == y {
            return Err(Error::Precondition(format!(
                "vertex {y} is reachable from {u} without meeting S"
            )));
        }
        for &(w, _) in net.incident(z) {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    let field = solve_voltage(net, u, grounded)?;
    let max_on_separator = separator
        .iter()
        .map(|&s| field.value(s))
        .fold(f64::NEG_INFINITY, f64::max);
    let value_at_target = field.value(y);
    Ok(SeparatorCheck {
        max_on_separator,
        value_at_target,
        holds: max_on_separator >= value_at_target - 1e-12,
    })
}
