//! The invariant suite run by `rwce verify`: every module's checks on one
//! experiment, as a ledger of measured values against thresholds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::electrical::{
    effective_resistance, flow_energy, fundamental_cycles, harmonic_residual, kirchhoff_defect,
    net_crossings_estimate, node_balance_defect, ohm_defect, perturbation_check,
    return_probability, solve_voltage, unit_current, voltage_difference_identity,
};
use crate::environment::{
    freeze_time, lower_bound_check, monotone_identity, ratio_bound_check, ratio_certificate,
    slowness_report, EnvKind, Environment, Monotonicity, SlownessReport,
};
use crate::error::{Error, Result};
use crate::graph::{collapse_boundary_at, split_at_origin, Ball, CollapsedNetwork, FamilyKind, GraphFamily};
use crate::network::Network;
use crate::walker::{
    environment_trace, exact_law, frozen_process_check, martingale_suite, nonadaptive_equivalence,
    simulate, SimulationOptions, TruncationPolicy, DEFAULT_ATOM_CAP,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    AtMost,
    AtLeast,
}

/// One ledger row. `passed` is exactly `measured` compared with `threshold`.
#[derive(Clone, Debug, Serialize)]
pub struct CheckRow {
    pub check: String,
    pub paper_anchor: String,
    pub measured: f64,
    pub comparison: Comparison,
    pub threshold: f64,
    pub samples: usize,
    pub passed: bool,
}

impl CheckRow {
    pub fn at_most(check: &str, anchor: &str, measured: f64, threshold: f64, samples: usize) -> Self {
        CheckRow {
            check: check.into(),
            paper_anchor: anchor.into(),
            measured,
            comparison: Comparison::AtMost,
            threshold,
            samples,
            passed: measured <= threshold,
        }
    }

    pub fn at_least(check: &str, anchor: &str, measured: f64, threshold: f64, samples: usize) -> Self {
        CheckRow {
            check: check.into(),
            paper_anchor: anchor.into(),
            measured,
            comparison: Comparison::AtLeast,
            threshold,
            samples,
            passed: measured >= threshold,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SkippedCheck {
    pub check: String,
    pub reason: String,
}

/// Summary of the voltage-ratio certificate for one component star.
#[derive(Clone, Debug, Serialize)]
pub struct CertificateSummary {
    pub component: usize,
    pub radii: Vec<usize>,
    pub d_max: usize,
    /// `prod_{s<T} α*_{n,s}` per radius.
    pub alpha_product: Vec<f64>,
    /// `prod_{s<T} β*_{n,s}` per radius.
    pub beta_product: Vec<f64>,
    pub lambda_final: f64,
    /// First `t` with `Λ_t <= 1/m` or `max(Γ_t, Γ*_t) >= m`, if within the trace.
    pub freeze_time: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteOutput {
    pub rows: Vec<CheckRow>,
    pub skipped: Vec<SkippedCheck>,
    pub slowness: Option<SlownessReport>,
    pub certificates: Vec<CertificateSummary>,
}

impl SuiteOutput {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }
}

/// Log-uniform conductances in `[e^-2, e^2]`.
pub fn random_conductances(rng: &mut impl Rng, edges: usize) -> Vec<f64> {
    (0..edges).map(|_| rng.random_range(-2.0f64..2.0).exp()).collect()
}

/// Random connected simple graph on `n` vertices: a random tree plus extra edges.
pub fn random_connected_graph(rng: &mut impl Rng, n: usize, extra_prob: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.random_range(0..v), v));
    }
    for u in 0..n {
        for v in u + 1..n {
            if !edges.contains(&(u, v)) && rng.random::<f64>() < extra_prob {
                edges.push((u, v));
            }
        }
    }
    edges
}

fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Suite<'a> {
    cfg: &'a ExperimentConfig,
    family: &'a GraphFamily,
    env: &'a Environment,
    seed: u64,
    out: SuiteOutput,
}

impl Suite<'_> {
    fn record(&mut self, check: &str, result: Result<Vec<CheckRow>>) -> Result<()> {
        match result {
            Ok(rows) => {
                self.out.rows.extend(rows);
                Ok(())
            }
            Err(
                e @ (Error::Precondition(_)
                | Error::OracleUnsupported(_)
                | Error::DegenerateVoltage { .. }
                | Error::AtomCapExceeded { .. }),
            ) => {
                self.out.skipped.push(SkippedCheck {
                    check: check.into(),
                    reason: e.to_string(),
                });
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    fn random_radius(&self) -> usize {
        let r = self.cfg.checks.random_radius.max(1);
        match self.family.kind() {
            FamilyKind::Tree { .. } => r.min(5),
            _ => r,
        }
    }

    fn collapsed(&self, ball: &Ball, n: usize) -> Result<CollapsedNetwork> {
        let w = self.env.base.weights(ball)?;
        collapse_boundary_at(ball, n, &w)
    }

    fn ball_prefix(&self) -> Result<Vec<CheckRow>> {
        let r = self.random_radius();
        let small = Ball::build(self.family, r)?;
        let big = Ball::build(self.family, r + 1)?;
        let mut mismatches = 0usize;
        mismatches += small
            .labels()
            .iter()
            .zip(big.labels())
            .filter(|(a, b)| a != b)
            .count();
        mismatches += small
            .edges()
            .iter()
            .zip(big.edges())
            .filter(|(a, b)| a != b)
            .count();
        mismatches += (0..=r)
            .filter(|&l| {
                small.vertices_within(l) != big.vertices_within(l)
                    || small.edges_within(l) != big.edges_within(l)
            })
            .count();
        Ok(vec![CheckRow::at_most(
            "ball_prefix_stability",
            "Exhaustion by balls",
            mismatches as f64,
            0.0,
            small.len(),
        )])
    }

    fn per_radius(&self) -> Result<Vec<CheckRow>> {
        let tol = self.cfg.tolerances.solver;
        let radii = &self.cfg.radii;
        let ball = Ball::build(self.family, *radii.last().unwrap())?;
        let (mut harm, mut node, mut cyc, mut ohm, mut ret) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut resistances = Vec::new();
        for &n in radii {
            let cn = self.collapsed(&ball, n)?;
            let net = &cn.network;
            let field = solve_voltage(net, cn.origin(), &[cn.sink])?;
            harm = harm.max(harmonic_residual(net, &field.values, &[cn.origin(), cn.sink]));
            let unit = unit_current(net, cn.origin(), &[cn.sink])?;
            node = node.max(node_balance_defect(net, &unit));
            cyc = cyc.max(kirchhoff_defect(net, &unit));
            ohm = ohm.max(ohm_defect(net, &field, &unit));
            let r = 1.0 / unit.strength;
            // escape probability through the one-step decomposition
            let a = cn.origin();
            let escape: f64 = net
                .incident(a)
                .iter()
                .map(|&(y, e)| net.conductance(e) * (1.0 - field.value(y)))
                .sum::<f64>()
                / net.total_conductance(a);
            let p = return_probability(&cn)?;
            ret = ret.max((1.0 - escape - p).abs());
            resistances.push(r);
        }
        let scale = resistances.iter().copied().fold(1.0, f64::max);
        let drop = resistances
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(0.0f64, f64::max);
        let k = radii.len();
        Ok(vec![
            CheckRow::at_most("harmonic_voltage", "Harmonic voltage", harm, tol, k),
            CheckRow::at_most("kirchhoff_node_law", "Kirchhoff node law", node, tol, k),
            CheckRow::at_most("kirchhoff_cycle_law", "Kirchhoff cycle law", cyc, tol, k),
            CheckRow::at_most("ohm_law", "Ohm's law", ohm, tol, k),
            CheckRow::at_most(
                "return_probability_formula",
                "Return probability from effective resistance",
                ret,
                tol,
                k,
            ),
            CheckRow::at_most(
                "resistance_monotone_in_radius",
                "Rayleigh monotonicity",
                drop,
                1e-12 * scale,
                k,
            ),
        ])
    }

    fn random_network(&self, rng: &mut ChaCha20Rng, n: usize) -> Result<(Network, usize, usize)> {
        let ball = Ball::build(self.family, n)?;
        let cn = self.collapsed(&ball, n)?;
        let c = random_conductances(rng, cn.network.edge_count());
        Ok((cn.network.with_conductances(c)?, cn.origin(), cn.sink))
    }

    fn thomson_rayleigh(&self) -> Result<Vec<CheckRow>> {
        let checks = &self.cfg.checks;
        let mut rng = rng_for(self.seed, 101);
        let (net, a, z) = self.random_network(&mut rng, self.random_radius())?;
        let unit = unit_current(&net, a, &[z])?;
        let res = net.resistances();
        let base = flow_energy(&unit.flow, &res);
        let cycles = fundamental_cycles(&net);
        let mut thomson = f64::NEG_INFINITY;
        for _ in 0..checks.thomson_flows {
            let scale = 10f64.powf(rng.random_range(-6.0..0.0));
            let mut flow = unit.flow.clone();
            for cycle in &cycles {
                let w = scale * rng.random_range(-1.0..1.0);
                for &(e, sign) in cycle {
                    flow[e] += w * sign;
                }
            }
            thomson = thomson.max(base - flow_energy(&flow, &res));
        }
        let mut rayleigh = f64::NEG_INFINITY;
        for _ in 0..checks.rayleigh_bumps {
            let c = random_conductances(&mut rng, net.edge_count());
            let before = net.with_conductances(c.clone())?;
            let mut bumped = c;
            let e = rng.random_range(0..bumped.len());
            bumped[e] /= 1.0 + rng.random_range(0.0..3.0);
            let after = net.with_conductances(bumped)?;
            let r0 = effective_resistance(&before, a, &[z])?;
            let r1 = effective_resistance(&after, a, &[z])?;
            rayleigh = rayleigh.max((r0 - r1) / r0);
        }
        Ok(vec![
            CheckRow::at_most(
                "thomson_energy",
                "Thomson principle",
                thomson,
                1e-12,
                checks.thomson_flows,
            ),
            CheckRow::at_most(
                "rayleigh_single_edge",
                "Rayleigh monotonicity",
                rayleigh,
                1e-12,
                checks.rayleigh_bumps,
            ),
        ])
    }

    fn perturbation(&self) -> Result<Vec<CheckRow>> {
        let mut rng = rng_for(self.seed, 102);
        let cap = self.random_radius();
        let mut radii: Vec<usize> = self.cfg.radii.iter().copied().filter(|&n| n <= cap).collect();
        if radii.is_empty() {
            radii.push(cap);
        }
        let ball = Ball::build(self.family, *radii.last().unwrap())?;
        let mut worst = f64::NEG_INFINITY;
        let mut samples = 0;
        for _ in 0..self.cfg.checks.perturbation_pairs {
            let c1 = random_conductances(&mut rng, ball.edges().len());
            let mut c2 = c1.clone();
            for c in c2.iter_mut() {
                if rng.random::<f64>() < 0.3 {
                    *c *= rng.random_range(-1.5f64..1.5).exp();
                }
            }
            for &n in &radii {
                let n1 = collapse_boundary_at(&ball, n, &c1)?;
                let n2 = n1.reweighted(&c2)?;
                let chk = perturbation_check(&n1.network, &n2.network, n1.origin(), &[n1.sink])?;
                worst = worst.max(chk.difference - chk.bound);
                samples += 1;
            }
        }
        Ok(vec![CheckRow::at_most(
            "resistance_perturbation_bound",
            "Effective resistance perturbation bound",
            worst,
            1e-12,
            samples,
        )])
    }

    fn identity(&self) -> Result<Vec<CheckRow>> {
        let mut rng = rng_for(self.seed, 103);
        let mut worst = 0.0f64;
        let count = self.cfg.checks.identity_networks;
        for _ in 0..count {
            let n = rng.random_range(4..=12);
            let edges = random_connected_graph(&mut rng, n, 0.3);
            let c0 = random_conductances(&mut rng, edges.len());
            let c1 = random_conductances(&mut rng, edges.len());
            let net0 = Network::new(n, edges.clone(), c0)?;
            let net1 = Network::new(n, edges, c1)?;
            let a = 0;
            let b = rng.random_range(1..n);
            let mut x = rng.random_range(1..n);
            while x == b {
                x = rng.random_range(1..n);
            }
            let sides = voltage_difference_identity(&net0, &net1, a, b, x)?;
            worst = worst.max(sides.discrepancy());
        }
        Ok(vec![CheckRow::at_most(
            "voltage_difference_identity",
            "Voltage difference identity",
            worst,
            1e-8,
            count,
        )])
    }

    fn monte_carlo(&self) -> Result<Vec<CheckRow>> {
        let trials = self.cfg.checks.crossing_trials;
        if trials < 2 {
            return Err(Error::Precondition("crossing_trials must be at least 2".into()));
        }
        let n = (*self.cfg.radii.last().unwrap()).min(3);
        let ball = Ball::build(self.family, n)?;
        let cn = self.collapsed(&ball, n)?;
        let net = &cn.network;
        let unit = unit_current(net, cn.origin(), &[cn.sink])?;
        let est = net_crossings_estimate(net, cn.origin(), &[cn.sink], trials, self.seed, 10_000_000)?;
        let z = est.max_z(&unit.flow);

        // returns before absorption, from the walk's first step
        let p = return_probability(&cn)?;
        let a = cn.origin();
        let mut returned = 0usize;
        for k in 0..trials {
            let mut rng = rng_for(self.seed, 1000 + k as u64);
            let mut x = a;
            loop {
                let total = net.total_conductance(x);
                let mut u = rng.random::<f64>() * total;
                let inc = net.incident(x);
                let mut y = inc[inc.len() - 1].0;
                for &(w, e) in inc {
                    u -= net.conductance(e);
                    if u < 0.0 {
                        y = w;
                        break;
                    }
                }
                x = y;
                if x == a {
                    returned += 1;
                    break;
                }
                if x == cn.sink {
                    break;
                }
            }
        }
        let freq = returned as f64 / trials as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        let z_ret = if se == 0.0 {
            if freq == p { 0.0 } else { f64::INFINITY }
        } else {
            (freq - p).abs() / se
        };
        let sigma = self.cfg.tolerances.mc_sigma;
        Ok(vec![
            CheckRow::at_most(
                "net_crossings_match_unit_current",
                "Unit current as expected net crossings",
                z,
                sigma,
                trials,
            ),
            CheckRow::at_most(
                "return_frequency_matches_formula",
                "Return probability from effective resistance",
                z_ret,
                sigma,
                trials,
            ),
        ])
    }

    fn environment_checks(&mut self) -> Result<Vec<CheckRow>> {
        let cfg = self.cfg;
        let split = split_at_origin(self.family, cfg.probe_radius)?;
        let radius = cfg.trace.radius.max(split.d_max);
        let ball = Ball::build(self.family, radius)?;
        let trace = environment_trace(
            self.family,
            self.env,
            &ball,
            cfg.trace.horizon,
            self.seed,
            cfg.start_label(),
            cfg.max_radius,
        )?;
        let infinite = !matches!(self.family.kind(), FamilyKind::Explicit { .. });
        let meta = self.env.metadata(infinite);
        let slowness = slowness_report(&trace, &ball, split.d_max, meta)?;
        let mut rows = Vec::new();
        let lb = lower_bound_check(&trace);
        rows.push(CheckRow::at_least(
            "conductance_lower_bound",
            "Conductance lower bound from the slowness sum",
            lb.worst_margin,
            -1e-12,
            lb.observed_min.len(),
        ));
        if meta.monotone != Monotonicity::None {
            let (total, net) = monotone_identity(&trace);
            rows.push(CheckRow::at_most(
                "monotone_resistance_telescoping",
                "Telescoping of monotone resistance changes",
                (total - net).abs(),
                cfg.tolerances.solver * (1.0 + total),
                trace.horizon(),
            ));
        }

        let top = radius.min(split.d_max + 5);
        let mut worst = f64::NEG_INFINITY;
        let mut samples = 0;
        for k in 0..split.components.len() {
            let radii: Vec<usize> = (split.d_max.max(1)..=top)
                .filter(|&n| ball.sphere(n).any(|x| split.component_of(&ball, x) == Some(k)))
                .collect();
            if radii.is_empty() {
                continue;
            }
            let cert = ratio_certificate(&trace, &ball, &split, k, &radii)?;
            let report = ratio_bound_check(&cert, &trace, &ball, &split);
            for row in &report.rows {
                worst = worst.max(row.lhs - row.rhs);
                samples += 1;
            }
            let last = trace.horizon();
            self.out.certificates.push(CertificateSummary {
                component: k,
                radii: cert.radii.clone(),
                d_max: cert.d_max,
                alpha_product: cert.alpha_products.iter().map(|p| p[last]).collect(),
                beta_product: cert.beta_products.iter().map(|p| p[last]).collect(),
                lambda_final: cert.lambda[last],
                freeze_time: freeze_time(&slowness, &cert, cfg.checks.freeze_level),
            });
        }
        if samples > 0 {
            rows.push(CheckRow::at_most(
                "voltage_ratio_bound",
                "Voltage ratio bound from resistance changes",
                worst,
                1e-12,
                samples,
            ));
        }
        self.out.slowness = Some(slowness);
        Ok(rows)
    }

    fn martingales(&self) -> Result<Vec<CheckRow>> {
        if matches!(self.env.kind, EnvKind::Custom(_)) {
            return Err(Error::OracleUnsupported("custom rules cannot be enumerated".into()));
        }
        let split = split_at_origin(self.family, self.cfg.probe_radius)?;
        let n = self
            .cfg
            .checks
            .martingale_radius
            .unwrap_or(split.d_max.max(2));
        let report = martingale_suite(self.family, self.env, n, self.cfg.checks.martingale_depth, 1e-10)?;
        let mut rows = vec![
            CheckRow::at_most(
                "stopped_voltage_supermartingale",
                "Optional stopping for the upper voltage process",
                report.max_super_excess,
                1e-10,
                report.states,
            ),
            CheckRow::at_most(
                "stopped_voltage_submartingale",
                "Optional stopping for the lower voltage process",
                report.max_sub_deficit,
                1e-10,
                report.states,
            ),
        ];
        if matches!(self.env.kind, EnvKind::Static) {
            rows.push(CheckRow::at_most(
                "static_voltage_martingale",
                "Harmonic voltage",
                report.max_abs_gap,
                1e-12,
                report.states,
            ));
        }
        Ok(rows)
    }

    fn exact_laws(&self) -> Result<Vec<CheckRow>> {
        if matches!(self.env.kind, EnvKind::Custom(_)) {
            return Err(Error::OracleUnsupported("custom rules cannot be enumerated".into()));
        }
        let t = self.cfg.checks.exact_horizon;
        let start = self.cfg.start_label();
        let law = exact_law(self.family, self.env, t, start.as_ref(), DEFAULT_ATOM_CAP)?;
        let mut rows = vec![CheckRow::at_most(
            "exact_law_normalization",
            "Walk in a changing environment",
            (law.total_probability() - 1.0).abs(),
            1e-12,
            law.atoms.len(),
        )];
        if self.env.is_adaptive() {
            let chk = frozen_process_check(
                self.family,
                self.env,
                self.cfg.checks.freeze_level,
                t,
                start.as_ref(),
                0,
            )?;
            rows.push(CheckRow::at_most(
                "frozen_process_law",
                "Frozen process is a walk in a changing environment",
                chk.max_discrepancy,
                1e-10,
                chk.histories,
            ));
        } else {
            let tv = nonadaptive_equivalence(self.family, self.env, t, start.as_ref())?;
            rows.push(CheckRow::at_most(
                "nonadaptive_law_equivalence",
                "Non-adaptive environments can be drawn first",
                tv,
                1e-10,
                law.atoms.len(),
            ));
        }
        Ok(rows)
    }

    fn ellipticity(&self) -> Result<Vec<CheckRow>> {
        let trials = self.cfg.checks.ellipticity_trials.max(1);
        let sim = simulate(
            self.family,
            self.env,
            &SimulationOptions {
                horizon: self.cfg.horizon.min(1000),
                trials,
                seed: self.seed,
                start: self.cfg.start_label(),
                max_radius: self.cfg.max_radius,
                truncation: TruncationPolicy::Stop,
                visit_radius: self.cfg.visit_radius,
                ..SimulationOptions::default()
            },
        )?;
        let min = sim
            .trajectories
            .iter()
            .flat_map(|t| t.min_step_probability.iter().flatten())
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !min.is_finite() {
            return Err(Error::Precondition("no steps observed near the origin".into()));
        }
        Ok(vec![CheckRow::at_least(
            "observed_ellipticity",
            "Uniform ellipticity",
            min,
            f64::MIN_POSITIVE,
            trials,
        )])
    }
}

/// Harmonicity, Kirchhoff, Ohm and monotonicity checks on the `C_0` networks
/// at every configured radius.
pub fn electrical_checks(
    cfg: &ExperimentConfig,
    family: &GraphFamily,
    env: &Environment,
) -> Result<Vec<CheckRow>> {
    Suite {
        cfg,
        family,
        env,
        seed: cfg.seed,
        out: SuiteOutput {
            rows: Vec::new(),
            skipped: Vec::new(),
            slowness: None,
            certificates: Vec::new(),
        },
    }
    .per_radius()
}

/// Runs every applicable check. Checks whose preconditions do not hold for
/// this experiment are listed as skipped rather than failed.
pub fn run_suite(
    cfg: &ExperimentConfig,
    family: &GraphFamily,
    env: &Environment,
    seed: u64,
) -> Result<SuiteOutput> {
    let mut suite = Suite {
        cfg,
        family,
        env,
        seed,
        out: SuiteOutput {
            rows: Vec::new(),
            skipped: Vec::new(),
            slowness: None,
            certificates: Vec::new(),
        },
    };
    let r = suite.ball_prefix();
    suite.record("ball_prefix_stability", r)?;
    let r = suite.per_radius();
    suite.record("electrical_laws", r)?;
    let r = suite.thomson_rayleigh();
    suite.record("thomson_rayleigh", r)?;
    let r = suite.perturbation();
    suite.record("resistance_perturbation_bound", r)?;
    let r = suite.identity();
    suite.record("voltage_difference_identity", r)?;
    let r = suite.monte_carlo();
    suite.record("monte_carlo", r)?;
    let r = suite.environment_checks();
    suite.record("environment", r)?;
    let r = suite.martingales();
    suite.record("martingales", r)?;
    let r = suite.exact_laws();
    suite.record("exact_laws", r)?;
    let r = suite.ellipticity();
    suite.record("ellipticity", r)?;
    Ok(suite.out)
}
