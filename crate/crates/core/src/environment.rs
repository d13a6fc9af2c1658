//! Environment processes `C_0, C_1, ...` and the certificates computed from
//! their traces: slowness sums, Π and Γ* factors, voltage-ratio bounds and
//! freezing.
//!
//! An [`EnvState`] holds the conductances of one trajectory's environment at
//! its current time. Edge ids are those of the walk's working ball, which are
//! prefix-stable, so the state can be extended when the ball grows.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::electrical::solve_voltage;
use crate::error::{Error, Result};
use crate::graph::{collapse_restricted, Ball, ComponentSplit};
use crate::network::check_proper;

/// Initial conductances `C_0` as a function of the edge.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum WeightRule {
    #[default]
    Unit,
    Constant { value: f64 },
    /// `C(k, k+1) = ratio^k` on the line.
    Geometric { ratio: f64 },
}

impl WeightRule {
    pub fn weight(&self, ball: &Ball, e: usize) -> Result<f64> {
        let c = match *self {
            WeightRule::Unit => 1.0,
            WeightRule::Constant { value } => value,
            WeightRule::Geometric { ratio } => {
                let (u, w) = ball.edges()[e];
                let (lu, lw) = (ball.label(u), ball.label(w));
                if lu.0.len() != 1 || lw.0.len() != 1 {
                    return Err(Error::Config(
                        "geometric weights are defined on the line only".into(),
                    ));
                }
                ratio.powi(lu.0[0].min(lw.0[0]) as i32)
            }
        };
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Domain(format!("edge {e} gets conductance {c}")));
        }
        Ok(c)
    }

    pub fn weights(&self, ball: &Ball) -> Result<Vec<f64>> {
        (0..ball.edges().len()).map(|e| self.weight(ball, e)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleFormula {
    /// `R_t(e) = R_0'(e) + amplitude * rate^t * w_e`: resistances fall toward the base.
    Decay,
    /// `R_t(e) = R_0'(e) + amplitude * (1 - rate^t) * w_e`: resistances rise from the base.
    Approach,
}

/// Random choice of the schedule amplitude, drawn once on the first step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coin {
    pub probability: f64,
    pub alt_amplitude: f64,
}

/// Deterministic (or single-coin) resistance schedule with per-edge weights
/// `w_e = (e + 1)^(-exponent)` for edge id `e`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub formula: ScheduleFormula,
    pub rate: f64,
    pub amplitude: f64,
    pub exponent: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coin: Option<Coin>,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate < 1.0) {
            return Err(Error::Config(format!(
                "schedule rate {} must lie in (0, 1)",
                self.rate
            )));
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::Config("schedule amplitude must be finite and >= 0".into()));
        }
        if !self.exponent.is_finite() || self.exponent < 0.0 {
            return Err(Error::Config("schedule exponent must be finite and >= 0".into()));
        }
        if let Some(coin) = &self.coin {
            if self.formula != ScheduleFormula::Approach {
                return Err(Error::Config(
                    "a coin needs the approach formula, which keeps C_0 deterministic".into(),
                ));
            }
            if !(0.0..=1.0).contains(&coin.probability)
                || !(coin.alt_amplitude.is_finite() && coin.alt_amplitude >= 0.0)
            {
                return Err(Error::Config("invalid coin parameters".into()));
            }
        }
        Ok(())
    }

    pub fn edge_weight(&self, e: usize) -> f64 {
        ((e + 1) as f64).powf(-self.exponent)
    }

    fn profile(&self, t: usize, amplitude: f64) -> f64 {
        let decay = self.rate.powi(t as i32);
        match self.formula {
            ScheduleFormula::Decay => amplitude * decay,
            ScheduleFormula::Approach => amplitude * (1.0 - decay),
        }
    }
}

/// User-supplied environment dynamics.
pub trait CustomRule: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn adaptive(&self) -> bool;
    fn bounded_above(&self) -> bool {
        true
    }
    /// Rewrites `conductances` from `C_t` to `C_{t+1}`.
    fn evolve(
        &self,
        t: usize,
        conductances: &mut [f64],
        traversed: Option<usize>,
        rng: &mut dyn RngCore,
    ) -> Result<()>;
}

#[derive(Clone, Debug)]
pub enum EnvKind {
    Static,
    Scheduled(Schedule),
    /// Explicit `C_0, ..., C_T` over ball edge ids; missing edges use the base rule.
    Tabulated { configs: Vec<Vec<f64>> },
    /// An edge's conductance becomes `delta` the first time it is traversed.
    OnceReinforced { delta: f64 },
    /// An edge's conductance grows by `increment` on every traversal.
    LinearReinforced { increment: f64 },
    Custom(Arc<dyn CustomRule>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaDeclaration {
    Finite,
    Divergent,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    Constant,
    None,
}

/// Properties of an environment known from its definition rather than observed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnvMetadata {
    pub adaptive: bool,
    pub bounded_above: bool,
    pub bounded_below: bool,
    pub gamma: GammaDeclaration,
    pub monotone: Monotonicity,
}

#[derive(Clone, Debug)]
pub struct Environment {
    pub kind: EnvKind,
    pub base: WeightRule,
    /// Hold the environment at `C_{freeze}` from time `freeze` on.
    pub freeze_time: Option<usize>,
}

impl Environment {
    pub fn new(kind: EnvKind, base: WeightRule) -> Result<Self> {
        match &kind {
            EnvKind::Scheduled(s) => s.validate()?,
            EnvKind::Tabulated { configs } => {
                if configs.is_empty() {
                    return Err(Error::Config("tabulated environment needs C_0".into()));
                }
                for c in configs {
                    check_proper(c)?;
                }
            }
            EnvKind::OnceReinforced { delta } => {
                if !(delta.is_finite() && *delta > 0.0) {
                    return Err(Error::Domain(format!("reinforced value {delta} must be positive")));
                }
            }
            EnvKind::LinearReinforced { increment } => {
                if !(increment.is_finite() && *increment >= 0.0) {
                    return Err(Error::Domain(format!("increment {increment} must be >= 0")));
                }
            }
            EnvKind::Static | EnvKind::Custom(_) => {}
        }
        Ok(Environment {
            kind,
            base,
            freeze_time: None,
        })
    }

    pub fn static_env(base: WeightRule) -> Self {
        Environment {
            kind: EnvKind::Static,
            base,
            freeze_time: None,
        }
    }

    pub fn frozen_at(&self, freeze_time: usize) -> Self {
        let mut env = self.clone();
        env.freeze_time = Some(self.freeze_time.map_or(freeze_time, |f| f.min(freeze_time)));
        env
    }

    pub fn name(&self) -> String {
        match &self.kind {
            EnvKind::Static => "static".into(),
            EnvKind::Scheduled(_) => "scheduled".into(),
            EnvKind::Tabulated { .. } => "tabulated".into(),
            EnvKind::OnceReinforced { .. } => "once_reinforced".into(),
            EnvKind::LinearReinforced { .. } => "linear_reinforced".into(),
            EnvKind::Custom(rule) => rule.name().to_string(),
        }
    }

    pub fn is_adaptive(&self) -> bool {
        match &self.kind {
            EnvKind::OnceReinforced { .. } | EnvKind::LinearReinforced { .. } => true,
            EnvKind::Custom(rule) => rule.adaptive(),
            _ => false,
        }
    }

    /// Declared properties; `infinite_graph` says whether infinitely many edges exist.
    pub fn metadata(&self, infinite_graph: bool) -> EnvMetadata {
        let mut meta = match &self.kind {
            EnvKind::Static => EnvMetadata {
                adaptive: false,
                bounded_above: true,
                bounded_below: true,
                gamma: GammaDeclaration::Finite,
                monotone: Monotonicity::Constant,
            },
            EnvKind::Scheduled(s) => EnvMetadata {
                adaptive: false,
                bounded_above: true,
                bounded_below: true,
                gamma: if !infinite_graph || s.exponent > 1.0 || s.amplitude == 0.0 {
                    GammaDeclaration::Finite
                } else {
                    GammaDeclaration::Divergent
                },
                monotone: match (s.amplitude == 0.0, s.formula) {
                    (true, _) => Monotonicity::Constant,
                    (false, ScheduleFormula::Decay) => Monotonicity::Increasing,
                    (false, ScheduleFormula::Approach) => Monotonicity::Decreasing,
                },
            },
            EnvKind::Tabulated { .. } => EnvMetadata {
                adaptive: false,
                bounded_above: true,
                bounded_below: true,
                gamma: GammaDeclaration::Finite,
                monotone: Monotonicity::None,
            },
            EnvKind::OnceReinforced { delta } => {
                let changes = match &self.base {
                    WeightRule::Unit => *delta != 1.0,
                    WeightRule::Constant { value } => delta != value,
                    WeightRule::Geometric { .. } => true,
                };
                EnvMetadata {
                    adaptive: true,
                    bounded_above: true,
                    bounded_below: true,
                    gamma: if infinite_graph && changes {
                        GammaDeclaration::Divergent
                    } else {
                        GammaDeclaration::Finite
                    },
                    monotone: Monotonicity::None,
                }
            }
            EnvKind::LinearReinforced { increment } => EnvMetadata {
                adaptive: true,
                bounded_above: *increment == 0.0,
                bounded_below: true,
                gamma: if *increment == 0.0 {
                    GammaDeclaration::Finite
                } else {
                    GammaDeclaration::Unknown
                },
                monotone: Monotonicity::Increasing,
            },
            EnvKind::Custom(rule) => EnvMetadata {
                adaptive: rule.adaptive(),
                bounded_above: rule.bounded_above(),
                bounded_below: false,
                gamma: GammaDeclaration::Unknown,
                monotone: Monotonicity::None,
            },
        };
        if self.freeze_time.is_some() {
            meta.gamma = GammaDeclaration::Finite;
            meta.bounded_above = true;
        }
        meta
    }

    /// Environment state at time 0 on the edges of `ball`.
    pub fn start(&self, ball: &Ball) -> Result<EnvState> {
        let mut state = EnvState {
            env: Arc::new(self.clone()),
            t: 0,
            base: Vec::new(),
            amplitude: match &self.kind {
                EnvKind::Scheduled(s) => s.amplitude,
                _ => 0.0,
            },
            explicit: Vec::new(),
            weight_prefix: vec![0.0],
            edge_weights: Vec::new(),
            level: 0.0,
        };
        state.level = state.schedule_level();
        state.ensure(ball)?;
        Ok(state)
    }
}

/// One trajectory's environment at its current time `t`.
#[derive(Clone, Debug)]
pub struct EnvState {
    env: Arc<Environment>,
    t: usize,
    base: Vec<f64>,
    amplitude: f64,
    /// Conductances of adaptive or custom environments.
    explicit: Vec<f64>,
    /// Prefix sums of schedule edge weights.
    weight_prefix: Vec<f64>,
    edge_weights: Vec<f64>,
    /// Schedule profile at the effective time, kept in step with `t`.
    level: f64,
}

impl EnvState {
    pub fn time(&self) -> usize {
        self.t
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn edge_count(&self) -> usize {
        self.base.len()
    }

    fn uses_explicit(&self) -> bool {
        matches!(
            self.env.kind,
            EnvKind::OnceReinforced { .. } | EnvKind::LinearReinforced { .. } | EnvKind::Custom(_)
        )
    }

    /// Extends the state to every edge of `ball`.
    pub fn ensure(&mut self, ball: &Ball) -> Result<()> {
        let known = self.base.len();
        let total = ball.edges().len();
        if total <= known {
            return Ok(());
        }
        for e in known..total {
            let c = self.env.base.weight(ball, e)?;
            self.base.push(c);
            if self.uses_explicit() {
                self.explicit.push(c);
            }
            if let EnvKind::Scheduled(s) = &self.env.kind {
                let last = *self.weight_prefix.last().unwrap();
                let w = s.edge_weight(e);
                self.weight_prefix.push(last + w);
                self.edge_weights.push(w);
            }
        }
        Ok(())
    }

    fn schedule_level(&self) -> f64 {
        match &self.env.kind {
            EnvKind::Scheduled(s) => s.profile(self.effective_time(), self.amplitude),
            _ => 0.0,
        }
    }

    fn effective_time(&self) -> usize {
        self.env.freeze_time.map_or(self.t, |f| self.t.min(f))
    }

    fn frozen_now(&self) -> bool {
        self.env.freeze_time.is_some_and(|f| self.t >= f)
    }

    pub fn conductance(&self, e: usize) -> f64 {
        let t = self.effective_time();
        match &self.env.kind {
            EnvKind::Static => self.base[e],
            EnvKind::Scheduled(_) => 1.0 / (1.0 / self.base[e] + self.level * self.edge_weights[e]),
            EnvKind::Tabulated { configs } => {
                let row = &configs[t.min(configs.len() - 1)];
                row.get(e).copied().unwrap_or(self.base[e])
            }
            _ => self.explicit[e],
        }
    }

    /// `C_t` on the first `edges` edge ids.
    pub fn config(&self, edges: usize) -> Vec<f64> {
        (0..edges).map(|e| self.conductance(e)).collect()
    }

    /// Moves to `C_{t+1}` after the walk traversed `traversed` and returns
    /// `sum_e |R_t(e) - R_{t+1}(e)|` over edge ids below `edges`.
    pub fn advance(
        &mut self,
        traversed: Option<usize>,
        edges: usize,
        rng: &mut dyn RngCore,
    ) -> Result<f64> {
        if self.frozen_now() {
            self.t += 1;
            return Ok(0.0);
        }
        let t = self.t;
        let delta = match &self.env.kind {
            EnvKind::Static => 0.0,
            EnvKind::Scheduled(s) => {
                let before = self.level;
                if t == 0 {
                    if let Some(coin) = &s.coin {
                        if rng.random::<f64>() < coin.probability {
                            self.amplitude = coin.alt_amplitude;
                        }
                    }
                }
                let after = s.profile(t + 1, self.amplitude);
                self.level = after;
                (before - after).abs() * self.weight_prefix[edges.min(self.base.len())]
            }
            EnvKind::Tabulated { configs } => {
                if t + 1 >= configs.len() {
                    return Err(Error::ScheduleLength {
                        step: t + 1,
                        len: configs.len(),
                    });
                }
                let now = self.config(edges);
                self.t += 1;
                let next = self.config(edges);
                self.t -= 1;
                now.iter()
                    .zip(&next)
                    .map(|(a, b)| (1.0 / a - 1.0 / b).abs())
                    .sum()
            }
            EnvKind::OnceReinforced { delta } => {
                let e = self.require_edge(traversed)?;
                let old = self.explicit[e];
                if old == self.base[e] {
                    self.explicit[e] = *delta;
                }
                if e < edges {
                    (1.0 / old - 1.0 / self.explicit[e]).abs()
                } else {
                    0.0
                }
            }
            EnvKind::LinearReinforced { increment } => {
                let e = self.require_edge(traversed)?;
                let old = self.explicit[e];
                self.explicit[e] = old + increment;
                if e < edges {
                    (1.0 / old - 1.0 / self.explicit[e]).abs()
                } else {
                    0.0
                }
            }
            EnvKind::Custom(rule) => {
                let rule = Arc::clone(rule);
                let before: Vec<f64> = self.explicit[..edges.min(self.explicit.len())].to_vec();
                rule.evolve(t, &mut self.explicit, traversed, rng)?;
                check_proper(&self.explicit)?;
                before
                    .iter()
                    .zip(&self.explicit)
                    .map(|(a, b)| (1.0 / a - 1.0 / b).abs())
                    .sum()
            }
        };
        self.t += 1;
        Ok(delta)
    }

    fn require_edge(&self, traversed: Option<usize>) -> Result<usize> {
        let e = traversed.ok_or_else(|| {
            Error::Precondition("adaptive environments need the traversed edge".into())
        })?;
        if e >= self.explicit.len() {
            return Err(Error::IncompleteConfig(e));
        }
        Ok(e)
    }

    /// All possible next states with their probabilities.
    pub fn branches(&self, traversed: Option<usize>) -> Result<Vec<(f64, EnvState)>> {
        struct NoRng;
        impl RngCore for NoRng {
            fn next_u32(&mut self) -> u32 {
                unreachable!("deterministic branch drew randomness")
            }
            fn next_u64(&mut self) -> u64 {
                unreachable!("deterministic branch drew randomness")
            }
            fn fill_bytes(&mut self, _: &mut [u8]) {
                unreachable!("deterministic branch drew randomness")
            }
        }
        if let EnvKind::Custom(rule) = &self.env.kind {
            if !self.frozen_now() {
                return Err(Error::OracleUnsupported(format!(
                    "custom rule `{}` has no enumerable branching",
                    rule.name()
                )));
            }
        }
        let edges = self.base.len();
        if let EnvKind::Scheduled(Schedule {
            coin: Some(coin), ..
        }) = &self.env.kind
        {
            if self.t == 0 && !self.frozen_now() {
                let mut out = Vec::new();
                for (p, amp) in [
                    (1.0 - coin.probability, self.amplitude),
                    (coin.probability, coin.alt_amplitude),
                ] {
                    if p > 0.0 {
                        let mut next = self.clone();
                        next.amplitude = amp;
                        next.t += 1;
                        next.level = next.schedule_level();
                        out.push((p, next));
                    }
                }
                return Ok(out);
            }
        }
        let mut next = self.clone();
        next.advance(traversed, edges, &mut NoRng)?;
        Ok(vec![(1.0, next)])
    }
}

/// Conductances `C_0..C_T` on a fixed ball, the traversed edges, and the
/// per-step resistance changes.
#[derive(Clone, Debug, Serialize)]
pub struct EnvTrace {
    pub radius: usize,
    pub configs: Vec<Vec<f64>>,
    pub traversed: Vec<Option<usize>>,
    /// `sum_e |R_t(e) - R_{t+1}(e)|` over the ball, for `t < T`.
    pub delta_sums: Vec<f64>,
}

impl EnvTrace {
    pub fn new(radius: usize, configs: Vec<Vec<f64>>, traversed: Vec<Option<usize>>) -> Result<Self> {
        for c in &configs {
            check_proper(c)?;
        }
        if configs.is_empty() || traversed.len() + 1 != configs.len() {
            return Err(Error::Precondition(
                "a trace needs T + 1 configurations and T traversals".into(),
            ));
        }
        let delta_sums = configs
            .windows(2)
            .map(|w| {
                w[0].iter()
                    .zip(&w[1])
                    .map(|(a, b)| (1.0 / a - 1.0 / b).abs())
                    .sum()
            })
            .collect();
        Ok(EnvTrace {
            radius,
            configs,
            traversed,
            delta_sums,
        })
    }

    pub fn horizon(&self) -> usize {
        self.traversed.len()
    }
}

/// Trace of a non-adaptive environment over `horizon` steps on `ball`.
pub fn trace_nonadaptive(
    env: &Environment,
    ball: &Ball,
    horizon: usize,
    rng: &mut dyn RngCore,
) -> Result<EnvTrace> {
    if env.is_adaptive() {
        return Err(Error::Precondition(
            "adaptive environments need a walk to produce a trace".into(),
        ));
    }
    let edges = ball.edges().len();
    let mut state = env.start(ball)?;
    let mut configs = vec![state.config(edges)];
    for _ in 0..horizon {
        state.advance(None, edges, rng)?;
        configs.push(state.config(edges));
    }
    EnvTrace::new(ball.radius(), configs, vec![None; horizon])
}

/// `Π_{t,l} = inf_{E_(l)} C_t / (sup_{V_(l)} deg * sup_{E_(l)} C_t)`.
pub fn pi_factor(ball: &Ball, config: &[f64], l: usize) -> f64 {
    let ne = ball.edges_within(l);
    let (lo, hi) = min_max(&config[..ne]);
    lo / (ball.max_degree_within(l) as f64 * hi)
}

/// `Γ*_t = |∂V_(1)| sup_{V_(D)} deg * sup_{E_(1)} C_t * sup_{E_(D)} C_t / inf_{E_(D)} C_t`.
pub fn gamma_star(ball: &Ball, config: &[f64], d_max: usize) -> f64 {
    let first = ball.sphere(1).len() as f64;
    let (_, hi1) = min_max(&config[..ball.edges_within(1)]);
    let (lo, hi) = min_max(&config[..ball.edges_within(d_max)]);
    first * ball.max_degree_within(d_max) as f64 * hi1 * hi / lo
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| {
            (lo.min(c), hi.max(c))
        })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SlownessVerdict {
    Plausible,
    NotPlausible,
}

/// Increment of `Γ_T` over the final steps below which the sum counts as settled.
pub const PLATEAU_TOL: f64 = 1e-9;
const PLATEAU_STEPS: usize = 10;

#[derive(Clone, Debug, Serialize)]
pub struct SlownessReport {
    pub radius: usize,
    pub horizon: usize,
    pub d_max: usize,
    /// `Γ_T` for `T = 0..=horizon`.
    pub gamma_partial: Vec<f64>,
    pub gamma: f64,
    pub plateaued: bool,
    /// `Π_{t,D_max}` for `t = 0..=horizon`.
    pub pi: Vec<f64>,
    /// `Γ*_t` for `t = 0..=horizon`.
    pub gamma_star: Vec<f64>,
    pub gamma_star_sup: f64,
    pub max_conductance: f64,
    /// `1 / (Γ_T + 1 / C_0(e))` per edge.
    pub lower_bounds: Vec<f64>,
    /// `min_t C_t(e)` per edge.
    pub observed_min: Vec<f64>,
    pub lower_bound_holds: bool,
    pub declared: EnvMetadata,
    pub verdict: SlownessVerdict,
}

pub fn slowness_report(
    trace: &EnvTrace,
    ball: &Ball,
    d_max: usize,
    declared: EnvMetadata,
) -> Result<SlownessReport> {
    if trace.configs.len() < 2 {
        return Err(Error::Precondition("trace needs at least two configurations".into()));
    }
    if d_max > ball.radius() || ball.edges().len() > trace.configs[0].len() {
        return Err(Error::Precondition(
            "trace does not cover the ball up to D_max".into(),
        ));
    }
    let mut gamma_partial = vec![0.0];
    for d in &trace.delta_sums {
        gamma_partial.push(gamma_partial.last().unwrap() + d);
    }
    let gamma = *gamma_partial.last().unwrap();
    let k = gamma_partial.len();
    let from = k.saturating_sub(PLATEAU_STEPS + 1);
    let plateaued = gamma - gamma_partial[from] < PLATEAU_TOL;
    let pi: Vec<f64> = trace
        .configs
        .iter()
        .map(|c| pi_factor(ball, c, d_max))
        .collect();
    let gamma_star_t: Vec<f64> = trace
        .configs
        .iter()
        .map(|c| gamma_star(ball, c, d_max))
        .collect();
    let gamma_star_sup = gamma_star_t.iter().copied().fold(0.0, f64::max);
    let max_conductance = trace
        .configs
        .iter()
        .flat_map(|c| c.iter().copied())
        .fold(0.0, f64::max);
    let check = lower_bound_check(trace);
    let verdict = if declared.gamma != GammaDeclaration::Divergent
        && declared.bounded_above
        && plateaued
    {
        SlownessVerdict::Plausible
    } else {
        SlownessVerdict::NotPlausible
    };
    Ok(SlownessReport {
        radius: trace.radius,
        horizon: trace.horizon(),
        d_max,
        gamma_partial,
        gamma,
        plateaued,
        pi,
        gamma_star: gamma_star_t,
        gamma_star_sup,
        max_conductance,
        lower_bounds: check.lower_bounds,
        observed_min: check.observed_min,
        lower_bound_holds: check.holds,
        declared,
        verdict,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LowerBoundCheck {
    pub lower_bounds: Vec<f64>,
    pub observed_min: Vec<f64>,
    pub worst_margin: f64,
    pub holds: bool,
}

/// Checks `C_t(e) >= 1 / (Γ_T + 1 / C_0(e))` for every edge and `t <= T`.
pub fn lower_bound_check(trace: &EnvTrace) -> LowerBoundCheck {
    let gamma: f64 = trace.delta_sums.iter().sum();
    let c0 = &trace.configs[0];
    let lower_bounds: Vec<f64> = c0.iter().map(|c| 1.0 / (gamma + 1.0 / c)).collect();
    let mut observed_min = c0.clone();
    for c in &trace.configs[1..] {
        for (m, v) in observed_min.iter_mut().zip(c) {
            *m = m.min(*v);
        }
    }
    let worst_margin = observed_min
        .iter()
        .zip(&lower_bounds)
        .map(|(o, l)| (o - l) / l)
        .fold(f64::INFINITY, f64::min);
    LowerBoundCheck {
        holds: worst_margin >= -1e-12,
        lower_bounds,
        observed_min,
        worst_margin,
    }
}

/// `(sum_{t,e} |R_t - R_{t+1}|, sum_e |R_0 - R_T|)`; equal for edgewise-monotone traces.
pub fn monotone_identity(trace: &EnvTrace) -> (f64, f64) {
    let total: f64 = trace.delta_sums.iter().sum();
    let first = &trace.configs[0];
    let last = trace.configs.last().unwrap();
    let net: f64 = first
        .iter()
        .zip(last)
        .map(|(a, b)| (1.0 / a - 1.0 / b).abs())
        .sum();
    (total, net)
}

/// Per-radius voltage-ratio extremes `α*_{n,t}`, `β*_{n,t}` over one component star.
#[derive(Clone, Debug, Serialize)]
pub struct RatioCertificate {
    pub component: usize,
    pub radii: Vec<usize>,
    pub d_max: usize,
    /// `[radius index][t]` for `t < T`.
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    /// `prod_{s<t}` for `t = 0..=T`.
    pub alpha_products: Vec<Vec<f64>>,
    pub beta_products: Vec<Vec<f64>>,
    /// `Λ_{D_max,t}` for `t = 0..=T`, the infimum over the listed radii.
    pub lambda: Vec<f64>,
    /// `R_{n,t,k}` for `t = 0..=T`.
    pub star_resistance: Vec<Vec<f64>>,
    /// `v_{n,t}` indexed by ball vertex (NaN off the star), `[radius index][t]`.
    #[serde(skip)]
    pub voltages: Vec<Vec<Vec<f64>>>,
}

/// Voltages `v_{n,t}` of the star of component `k` at radius `n`, by ball vertex.
pub fn star_voltage(
    ball: &Ball,
    split: &ComponentSplit,
    k: usize,
    n: usize,
    config: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let cn = collapse_restricted(ball, n, config, |x| split.component_of(ball, x) == Some(k))?;
    let field = solve_voltage(&cn.network, cn.origin(), &[cn.sink])?;
    let strength = crate::electrical::induced_current(&cn.network, &field).strength;
    let mut v = vec![f64::NAN; ball.vertices_within(n)];
    for (i, &x) in cn.vertices.iter().enumerate() {
        v[x] = field.value(i);
    }
    for x in ball.sphere(n) {
        if split.component_of(ball, x) == Some(k) {
            v[x] = 0.0;
        }
    }
    Ok((v, 1.0 / strength))
}

/// Gap `1 - v` below which a non-origin vertex counts as degenerate.
const DEGENERATE_GAP: f64 = 1e-14;

pub fn ratio_certificate(
    trace: &EnvTrace,
    ball: &Ball,
    split: &ComponentSplit,
    k: usize,
    radii: &[usize],
) -> Result<RatioCertificate> {
    let d_max = split.d_max;
    if k >= split.components.len() {
        return Err(Error::Precondition(format!("no component {k}")));
    }
    if radii.is_empty() || radii.iter().any(|&n| n < d_max || n > ball.radius()) {
        return Err(Error::Precondition(format!(
            "radii must lie in {d_max}..={}",
            ball.radius()
        )));
    }
    let horizon = trace.horizon();
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut voltages = Vec::new();
    let mut star_resistance = Vec::new();
    for &n in radii {
        let mut per_t = Vec::with_capacity(horizon + 1);
        let mut res = Vec::with_capacity(horizon + 1);
        for c in &trace.configs {
            let (v, r) = star_voltage(ball, split, k, n, c)?;
            per_t.push(v);
            res.push(r);
        }
        let members: Vec<usize> = (1..ball.vertices_within(n))
            .filter(|&x| split.component_of(ball, x) == Some(k))
            .collect();
        let mut a_row = Vec::with_capacity(horizon);
        let mut b_row = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let (mut hi, mut lo) = (1.0f64, 1.0f64);
            for &x in &members {
                let (g0, g1) = (1.0 - per_t[t][x], 1.0 - per_t[t + 1][x]);
                if g0 < DEGENERATE_GAP || g1 < DEGENERATE_GAP {
                    return Err(Error::DegenerateVoltage { gap: g0.min(g1) });
                }
                let ratio = g1 / g0;
                hi = hi.max(ratio);
                lo = lo.min(ratio);
            }
            a_row.push(hi);
            b_row.push(lo);
        }
        alpha.push(a_row);
        beta.push(b_row);
        voltages.push(per_t);
        star_resistance.push(res);
    }
    let products = |rows: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|row| {
                let mut p = vec![1.0];
                for f in row {
                    p.push(p.last().unwrap() * f);
                }
                p
            })
            .collect()
    };
    let alpha_products = products(&alpha);
    let beta_products = products(&beta);
    let lambda = (0..=horizon)
        .map(|t| {
            beta_products
                .iter()
                .map(|p| p[t])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(RatioCertificate {
        component: k,
        radii: radii.to_vec(),
        d_max,
        alpha,
        beta,
        alpha_products,
        beta_products,
        lambda,
        star_resistance,
        voltages,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioBoundRow {
    pub radius: usize,
    pub t: usize,
    /// `max_x |(1 - v_{n,t+1}(x)) / (1 - v_{n,t}(x)) - 1|` over the star.
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioBoundReport {
    pub rows: Vec<RatioBoundRow>,
    pub all_hold: bool,
}

/// Checks the voltage-ratio bound
/// `|ratio - 1| <= |∂V_(1)| sup_{E_(1)} C_t / Π_{t,D_max} * sum_{E*_k} |R_t - R_{t+1}|`.
pub fn ratio_bound_check(
    cert: &RatioCertificate,
    trace: &EnvTrace,
    ball: &Ball,
    split: &ComponentSplit,
) -> RatioBoundReport {
    let d_max = cert.d_max;
    let first = ball.sphere(1).len() as f64;
    let mut rows = Vec::new();
    for (i, &n) in cert.radii.iter().enumerate() {
        let star_edges: Vec<usize> = (0..ball.edges_within(n))
            .filter(|&e| {
                let (u, w) = ball.edges()[e];
                [u, w]
                    .iter()
                    .all(|&x| x == 0 || split.component_of(ball, x) == Some(cert.component))
            })
            .collect();
        for t in 0..trace.horizon() {
            let (c0, c1) = (&trace.configs[t], &trace.configs[t + 1]);
            let change: f64 = star_edges
                .iter()
                .map(|&e| (1.0 / c0[e] - 1.0 / c1[e]).abs())
                .sum();
            let (_, sup1) = min_max(&c0[..ball.edges_within(1)]);
            let rhs = first * sup1 / pi_factor(ball, c0, d_max) * change;
            let lhs = (cert.alpha[i][t] - 1.0).max(1.0 - cert.beta[i][t]);
            rows.push(RatioBoundRow {
                radius: n,
                t,
                lhs,
                rhs,
                holds: lhs <= rhs + 1e-12,
            });
        }
    }
    RatioBoundReport {
        all_hold: rows.iter().all(|r| r.holds),
        rows,
    }
}

/// First `t >= 1` with `Λ_{D_max,t} <= 1/m` or `max(Γ_t, Γ*_t) >= m`.
pub fn freeze_time(
    slowness: &SlownessReport,
    cert: &RatioCertificate,
    m: f64,
) -> Option<usize> {
    let horizon = slowness.horizon.min(cert.lambda.len() - 1);
    (1..=horizon).find(|&t| {
        cert.lambda[t] <= 1.0 / m
            || slowness.gamma_partial[t].max(slowness.gamma_star[t]) >= m
    })
}

#[derive(Clone, Debug)]
pub struct FreezeOutcome {
    /// `γ_m`, or `None` when it exceeds the horizon.
    pub gamma_m: Option<usize>,
    /// Equal to the original until `γ_m - 1`, constant afterwards.
    pub environment: Environment,
}

pub fn freeze_at(
    env: &Environment,
    slowness: &SlownessReport,
    cert: &RatioCertificate,
    m: f64,
) -> Result<FreezeOutcome> {
    if m < 1.0 {
        return Err(Error::Precondition("freeze level must be at least 1".into()));
    }
    let gamma_m = freeze_time(slowness, cert, m);
    let environment = match gamma_m {
        Some(g) => env.frozen_at(g - 1),
        None => env.clone(),
    };
    Ok(FreezeOutcome {
        gamma_m,
        environment,
    })
}
