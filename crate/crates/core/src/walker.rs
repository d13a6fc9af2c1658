//! Trajectories of walks in changing environments, the stopped voltage
//! martingales built from them, and exact finite-horizon path laws.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::electrical::{resistance_profile, ProfileVerdict, ResistanceProfile};
use crate::environment::{
    gamma_star, slowness_report, star_voltage, trace_nonadaptive, EnvState, EnvTrace,
    Environment, RatioCertificate, SlownessReport, SlownessVerdict,
};
use crate::error::{Error, Result};
use crate::graph::{split_at_origin, Ball, ComponentSplit, FamilyKind, GraphFamily, Label};

/// `P(x, y; C)` for the in-ball neighbors of a complete vertex `x`, in neighbor order.
pub fn transition_distribution(ball: &Ball, x: usize, config: &[f64]) -> Result<Vec<(usize, f64)>> {
    if !ball.is_complete(x) {
        return Err(Error::Precondition(format!(
            "vertex {} has neighbors outside the ball",
            ball.label(x)
        )));
    }
    let total: f64 = ball.incident(x).iter().map(|&(_, e)| config[e]).sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Domain(format!(
            "total conductance {total} at {} is improper",
            ball.label(x)
        )));
    }
    Ok(ball
        .incident(x)
        .iter()
        .map(|&(y, e)| (y, config[e] / total))
        .collect())
}

fn transition_probabilities(ball: &Ball, x: usize, state: &EnvState) -> Vec<(usize, usize, f64)> {
    let inc = ball.incident(x);
    let total: f64 = inc.iter().map(|&(_, e)| state.conductance(e)).sum();
    inc.iter()
        .map(|&(y, e)| (y, e, state.conductance(e) / total))
        .collect()
}

/// First `t` with `positions[t]` in `targets`.
pub fn hitting_time(positions: &[usize], targets: &[usize]) -> Option<usize> {
    positions.iter().position(|x| targets.contains(x))
}

/// What to do when a walk outgrows the largest allowed working ball.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationPolicy {
    /// Fail with the trajectories simulated so far.
    Error,
    /// End that trajectory early and flag it as truncated.
    Stop,
}

#[derive(Clone, Debug)]
pub struct SimulationOptions {
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub start: Option<Label>,
    pub initial_radius: usize,
    pub max_radius: usize,
    pub truncation: TruncationPolicy,
    pub record_paths: bool,
    /// Record `C_0..C_T` on the ball of this radius.
    pub record_env: Option<usize>,
    /// Visit counts and step probabilities are kept for vertices within this radius.
    pub visit_radius: usize,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            horizon: 100,
            trials: 1,
            seed: 0,
            start: None,
            initial_radius: 16,
            max_radius: 1000,
            truncation: TruncationPolicy::Error,
            record_paths: false,
            record_env: None,
            visit_radius: 4,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub trial: usize,
    pub start: usize,
    /// `X_0..X_T` as ball ids; empty unless paths were recorded.
    pub positions: Vec<usize>,
    pub steps: usize,
    /// First `t >= 1` with `X_t` at the origin.
    pub return_time: Option<usize>,
    pub returns: u64,
    pub truncated: bool,
    pub final_position: usize,
    pub max_distance: usize,
    /// Visits (including `t = 0`) per ball vertex within the visit radius.
    pub visits: Vec<u64>,
    /// Smallest observed `P(x, y)` per vertex within the visit radius and incident slot.
    #[serde(skip)]
    pub min_step_probability: Vec<Vec<f64>>,
    pub env_trace: Option<EnvTrace>,
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub trajectories: Vec<Trajectory>,
    /// Largest working ball built; labels for all recorded ball ids.
    pub ball: Arc<Ball>,
    pub horizon: usize,
    pub seed: u64,
    pub visit_radius: usize,
}

impl Simulation {
    pub fn return_frequency(&self) -> f64 {
        let returned = self
            .trajectories
            .iter()
            .filter(|t| t.return_time.is_some())
            .count();
        returned as f64 / self.trajectories.len() as f64
    }

    pub fn truncated(&self) -> usize {
        self.trajectories.iter().filter(|t| t.truncated).count()
    }
}

/// Working ball shared by all trajectories; grows on demand. Ball numbering is
/// prefix-stable, so a trajectory's ids stay valid across growth.
struct BallCache {
    family: GraphFamily,
    max_radius: usize,
    /// Smallest radius whose ball exceeded the vertex budget.
    too_large: AtomicUsize,
    current: RwLock<Arc<Ball>>,
}

impl BallCache {
    fn new(family: &GraphFamily, radius: usize, max_radius: usize) -> Result<Self> {
        let ball = Ball::build(family, radius.min(max_radius))?;
        Ok(BallCache {
            family: family.clone(),
            max_radius,
            too_large: AtomicUsize::new(usize::MAX),
            current: RwLock::new(Arc::new(ball)),
        })
    }

    fn current(&self) -> Arc<Ball> {
        Arc::clone(&self.current.read().expect("ball cache poisoned"))
    }

    /// A ball of radius at least `radius`, or `None` beyond the cap or the
    /// vertex budget.
    fn covering(&self, radius: usize) -> Result<Option<Arc<Ball>>> {
        if radius > self.max_radius || radius >= self.too_large.load(Ordering::Relaxed) {
            return Ok(None);
        }
        {
            let cur = self.current.read().expect("ball cache poisoned");
            if cur.radius() >= radius {
                return Ok(Some(Arc::clone(&cur)));
            }
        }
        let mut cur = self.current.write().expect("ball cache poisoned");
        if cur.radius() < radius {
            let grown = (radius + 4).max(cur.radius() * 3 / 2).min(self.max_radius);
            for r in [grown, radius] {
                if r >= self.too_large.load(Ordering::Relaxed) {
                    continue;
                }
                match Ball::build(&self.family, r) {
                    Ok(b) => {
                        *cur = Arc::new(b);
                        return Ok(Some(Arc::clone(&cur)));
                    }
                    Err(Error::BallTooLarge { .. }) => {
                        self.too_large.fetch_min(r, Ordering::Relaxed);
                    }
                    Err(e) => return Err(e),
                }
            }
            return Ok(None);
        }
        Ok(Some(Arc::clone(&cur)))
    }
}

fn trial_rngs(seed: u64, trial: usize) -> (ChaCha20Rng, ChaCha20Rng) {
    let mut walk = ChaCha20Rng::seed_from_u64(seed);
    walk.set_stream(2 * trial as u64);
    let mut env = ChaCha20Rng::seed_from_u64(seed);
    env.set_stream(2 * trial as u64 + 1);
    (walk, env)
}

fn resolve_start(cache: &BallCache, family: &GraphFamily, start: Option<&Label>) -> Result<usize> {
    let Some(label) = start else { return Ok(0) };
    let mut ball = cache.current();
    loop {
        if let Some(x) = ball.index_of(label) {
            return Ok(x);
        }
        let next = ball.radius() + 1;
        ball = cache.covering(next)?.ok_or_else(|| {
            Error::Precondition(format!(
                "start {label} is not within radius {} of {}",
                cache.max_radius,
                family.origin()
            ))
        })?;
        if ball.radius() < next {
            return Err(Error::Precondition(format!("start {label} is not a vertex")));
        }
    }
}

/// Runs `trials` independent trajectories. Trial `k` draws the walk from
/// stream `2k` and the environment from stream `2k + 1` of the root seed.
pub fn simulate(family: &GraphFamily, env: &Environment, opts: &SimulationOptions) -> Result<Simulation> {
    if opts.horizon == 0 || opts.trials == 0 {
        return Err(Error::Precondition("horizon and trials must be at least 1".into()));
    }
    let initial = opts
        .initial_radius
        .max(opts.record_env.unwrap_or(0))
        .max(opts.visit_radius + 1)
        .max(1);
    let cache = BallCache::new(family, initial, opts.max_radius.max(initial))?;
    let start = resolve_start(&cache, family, opts.start.as_ref())?;
    let record_ball = match opts.record_env {
        Some(r) => Some(Arc::new(Ball::build(family, r)?)),
        None => None,
    };
    let trajectories: Vec<Trajectory> = (0..opts.trials)
        .into_par_iter()
        .map(|k| run_trial(&cache, env, opts, start, record_ball.as_deref(), k))
        .collect::<Result<_>>()?;
    let sim = Simulation {
        trajectories,
        ball: cache.current(),
        horizon: opts.horizon,
        seed: opts.seed,
        visit_radius: opts.visit_radius,
    };
    if opts.truncation == TruncationPolicy::Error && sim.truncated() > 0 {
        return Err(Error::TruncationExceeded {
            max_radius: opts.max_radius,
            partial: Box::new(sim),
        });
    }
    Ok(sim)
}

fn run_trial(
    cache: &BallCache,
    env: &Environment,
    opts: &SimulationOptions,
    start: usize,
    record_ball: Option<&Ball>,
    trial: usize,
) -> Result<Trajectory> {
    let (mut walk_rng, mut env_rng) = trial_rngs(opts.seed, trial);
    let mut ball = cache.current();
    let mut state = env.start(&ball)?;
    let record_edges = record_ball.map_or(0, |b| b.edges().len());
    if let Some(rb) = record_ball {
        state.ensure(rb)?;
    }
    let tracked = ball.vertices_within(opts.visit_radius);
    let mut visits = vec![0u64; tracked];
    let mut min_prob: Vec<Vec<f64>> = (0..tracked)
        .map(|x| vec![f64::INFINITY; ball.degree(x)])
        .collect();
    let mut positions = Vec::new();
    let mut configs = Vec::new();
    let mut traversed = Vec::new();
    if opts.record_paths {
        positions.reserve(opts.horizon + 1);
        positions.push(start);
    }
    if record_ball.is_some() {
        configs.push(state.config(record_edges));
    }

    let mut x = start;
    if x < tracked {
        visits[x] += 1;
    }
    let mut return_time = None;
    let mut returns = 0u64;
    let mut truncated = false;
    let mut max_distance = ball.dist(x);
    let mut steps = 0;
    for t in 0..opts.horizon {
        if ball.dist(x) >= ball.radius() {
            match cache.covering(ball.dist(x) + 1)? {
                Some(b) => {
                    ball = b;
                    state.ensure(&ball)?;
                }
                None => {
                    truncated = true;
                    break;
                }
            }
        }
        let inc = ball.incident(x);
        let total: f64 = inc.iter().map(|&(_, e)| state.conductance(e)).sum();
        let mut u = walk_rng.random::<f64>() * total;
        let mut slot = inc.len() - 1;
        for (i, &(_, e)) in inc.iter().enumerate() {
            u -= state.conductance(e);
            if u < 0.0 {
                slot = i;
                break;
            }
        }
        if x < tracked {
            for (i, &(_, e)) in inc.iter().enumerate() {
                let p = state.conductance(e) / total;
                if p < min_prob[x][i] {
                    min_prob[x][i] = p;
                }
            }
        }
        let (y, e) = inc[slot];
        state.advance(Some(e), record_edges, &mut env_rng)?;
        if record_ball.is_some() {
            configs.push(state.config(record_edges));
            traversed.push(if e < record_edges { Some(e) } else { None });
        }
        x = y;
        steps = t + 1;
        if opts.record_paths {
            positions.push(x);
        }
        if x < tracked {
            visits[x] += 1;
        }
        if x == 0 {
            returns += 1;
            if return_time.is_none() {
                return_time = Some(t + 1);
            }
        }
        max_distance = max_distance.max(ball.dist(x));
    }
    let env_trace = match record_ball {
        Some(rb) => Some(EnvTrace::new(rb.radius(), configs, traversed)?),
        None => None,
    };
    Ok(Trajectory {
        trial,
        start,
        positions,
        steps,
        return_time,
        returns,
        truncated,
        final_position: x,
        max_distance,
        visits,
        min_step_probability: min_prob,
        env_trace,
    })
}

/// Environment trace on `ball` over `horizon` steps. Adaptive environments
/// are driven by trial 0 of a walk seeded with `seed`; if that walk is
/// truncated, the environment stays constant for the remaining steps.
pub fn environment_trace(
    family: &GraphFamily,
    env: &Environment,
    ball: &Ball,
    horizon: usize,
    seed: u64,
    start: Option<Label>,
    max_radius: usize,
) -> Result<EnvTrace> {
    if !env.is_adaptive() {
        let (_, mut rng) = trial_rngs(seed, 0);
        return trace_nonadaptive(env, ball, horizon, &mut rng as &mut dyn RngCore);
    }
    let sim = simulate(
        family,
        env,
        &SimulationOptions {
            horizon,
            trials: 1,
            seed,
            start,
            record_env: Some(ball.radius()),
            max_radius: max_radius.max(ball.radius() + 1),
            truncation: TruncationPolicy::Stop,
            ..SimulationOptions::default()
        },
    )?;
    let trace = sim.trajectories[0].env_trace.clone().expect("trace recorded");
    let mut configs = trace.configs;
    let mut traversed = trace.traversed;
    while configs.len() < horizon + 1 {
        configs.push(configs.last().unwrap().clone());
        traversed.push(None);
    }
    EnvTrace::new(ball.radius(), configs, traversed)
}

/// Values of the stopped processes `A_{τ_n ∧ t}` and `B_{τ_n ∧ t}` along one path.
#[derive(Clone, Debug, Serialize)]
pub struct MartingaleTrace {
    pub radius: usize,
    /// Exit time from `V_(n-1) \ {a}`, if it happened within the path.
    pub tau: Option<usize>,
    pub a_values: Vec<f64>,
    pub b_values: Vec<f64>,
    pub alpha_products: Vec<f64>,
    pub beta_products: Vec<f64>,
}

/// `A_t = (1 - v_{n,t}(X_t)) / prod_{s<t} α*_{n,s}` and `B_t` likewise with
/// `β*`, frozen after `τ_n`. `positions` must start in the certificate's star
/// and have at most `T + 1` entries.
pub fn martingale_trace(
    positions: &[usize],
    cert: &RatioCertificate,
    ball: &Ball,
    n: usize,
) -> Result<MartingaleTrace> {
    let i = cert
        .radii
        .iter()
        .position(|&r| r == n)
        .ok_or_else(|| Error::Precondition(format!("radius {n} is not in the certificate")))?;
    if positions.is_empty() || positions.len() > cert.voltages[i].len() {
        return Err(Error::Precondition("path is longer than the certificate".into()));
    }
    if cert.voltages[i][0]
        .get(positions[0])
        .is_none_or(|v| v.is_nan())
    {
        return Err(Error::Precondition("path does not start in the star".into()));
    }
    let inside = |x: usize| x != 0 && ball.dist(x) < n;
    let mut tau = None;
    let mut a_values = Vec::with_capacity(positions.len());
    let mut b_values = Vec::with_capacity(positions.len());
    let mut alpha_products = Vec::new();
    let mut beta_products = Vec::new();
    for (t, &x) in positions.iter().enumerate() {
        let s = tau.unwrap_or(t);
        let pa = cert.alpha_products[i][s];
        let pb = cert.beta_products[i][s];
        let xs = positions[s];
        let gap = 1.0 - cert.voltages[i][s][xs];
        a_values.push(gap / pa);
        b_values.push(gap / pb);
        alpha_products.push(pa);
        beta_products.push(pb);
        if tau.is_none() && !inside(x) {
            tau = Some(t);
        }
    }
    Ok(MartingaleTrace {
        radius: n,
        tau,
        a_values,
        b_values,
        alpha_products,
        beta_products,
    })
}

/// One `(path, environment branch)` atom of an exact law.
#[derive(Clone, Debug)]
pub struct Atom {
    pub path: Vec<usize>,
    /// `C_0..C_T` over the law's ball edges.
    pub configs: Vec<Vec<f64>>,
    pub prob: f64,
    pub env: EnvState,
}

#[derive(Clone, Debug)]
pub struct ExactLaw {
    pub horizon: usize,
    pub ball: Arc<Ball>,
    pub atoms: Vec<Atom>,
}

/// Default cap on the number of atoms in an exact enumeration.
pub const DEFAULT_ATOM_CAP: usize = 200_000;

impl ExactLaw {
    pub fn total_probability(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob).sum()
    }

    /// Law of `X_t`.
    pub fn marginal(&self, t: usize) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for a in &self.atoms {
            *out.entry(a.path[t]).or_insert(0.0) += a.prob;
        }
        out
    }

    /// Joint law of paths and environment sequences, keyed by exact bit patterns.
    pub fn joint(&self) -> BTreeMap<(Vec<usize>, Vec<u64>), f64> {
        let mut out = BTreeMap::new();
        for a in &self.atoms {
            let bits = a.configs.iter().flatten().map(|c| c.to_bits()).collect();
            *out.entry((a.path.clone(), bits)).or_insert(0.0) += a.prob;
        }
        out
    }

    /// Probability that the walk visits `y` at some time `<= t`.
    pub fn reach_probability(&self, y: usize, t: usize) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.path[..=t].contains(&y))
            .map(|a| a.prob)
            .sum()
    }
}

fn law_ball(family: &GraphFamily, start: Option<&Label>, horizon: usize) -> Result<(Arc<Ball>, usize)> {
    let start_dist = match start {
        None => 0,
        Some(label) => {
            let mut r = 1;
            loop {
                let b = Ball::build(family, r)?;
                if let Some(x) = b.index_of(label) {
                    break b.dist(x);
                }
                if b.sphere(r).is_empty() || r > 10_000 {
                    return Err(Error::Precondition(format!("start {label} is not a vertex")));
                }
                r *= 2;
            }
        }
    };
    let ball = Arc::new(Ball::build(family, start_dist + horizon.max(1))?);
    let x = start.map_or(Some(0), |l| ball.index_of(l)).expect("start within ball");
    Ok((ball, x))
}

/// Enumerates every `(path, environment branch)` of the walk up to `horizon`.
pub fn exact_law(
    family: &GraphFamily,
    env: &Environment,
    horizon: usize,
    start: Option<&Label>,
    atom_cap: usize,
) -> Result<ExactLaw> {
    let (ball, x0) = law_ball(family, start, horizon)?;
    let edges = ball.edges().len();
    let state = env.start(&ball)?;
    let mut atoms = vec![Atom {
        path: vec![x0],
        configs: vec![state.config(edges)],
        prob: 1.0,
        env: state,
    }];
    for _ in 0..horizon {
        let mut next = Vec::new();
        for atom in &atoms {
            let x = *atom.path.last().unwrap();
            for (y, e, p) in transition_probabilities(&ball, x, &atom.env) {
                if p == 0.0 {
                    continue;
                }
                for (q, env_next) in atom.env.branches(Some(e))? {
                    let mut path = atom.path.clone();
                    path.push(y);
                    let mut configs = atom.configs.clone();
                    configs.push(env_next.config(edges));
                    next.push(Atom {
                        path,
                        configs,
                        prob: atom.prob * p * q,
                        env: env_next,
                    });
                    if next.len() > atom_cap {
                        return Err(Error::AtomCapExceeded { cap: atom_cap });
                    }
                }
            }
        }
        atoms = next;
    }
    Ok(ExactLaw {
        horizon,
        ball,
        atoms,
    })
}

/// Law of the construction that first draws the whole environment and then
/// walks against it.
pub fn hierarchical_law(
    family: &GraphFamily,
    env: &Environment,
    horizon: usize,
    start: Option<&Label>,
    atom_cap: usize,
) -> Result<ExactLaw> {
    if env.is_adaptive() {
        return Err(Error::Precondition(
            "the hierarchical construction needs a non-adaptive environment".into(),
        ));
    }
    let (ball, x0) = law_ball(family, start, horizon)?;
    let edges = ball.edges().len();
    let mut envs = vec![(1.0, vec![env.start(&ball)?])];
    for _ in 0..horizon {
        let mut next = Vec::new();
        for (p, hist) in &envs {
            for (q, s) in hist.last().unwrap().branches(None)? {
                let mut h = hist.clone();
                h.push(s);
                next.push((p * q, h));
            }
        }
        envs = next;
    }
    let mut atoms = Vec::new();
    for (p_env, hist) in envs {
        let configs: Vec<Vec<f64>> = hist.iter().map(|s| s.config(edges)).collect();
        let mut paths = vec![(vec![x0], p_env)];
        for s in hist.iter().take(horizon) {
            let mut next = Vec::new();
            for (path, p) in &paths {
                let x = *path.last().unwrap();
                for (y, _, q) in transition_probabilities(&ball, x, s) {
                    if q > 0.0 {
                        let mut np = path.clone();
                        np.push(y);
                        next.push((np, p * q));
                    }
                }
            }
            paths = next;
        }
        for (path, prob) in paths {
            atoms.push(Atom {
                path,
                configs: configs.clone(),
                prob,
                env: hist.last().unwrap().clone(),
            });
            if atoms.len() > atom_cap {
                return Err(Error::AtomCapExceeded { cap: atom_cap });
            }
        }
    }
    Ok(ExactLaw {
        horizon,
        ball,
        atoms,
    })
}

pub fn total_variation(a: &ExactLaw, b: &ExactLaw) -> f64 {
    let ja = a.joint();
    let jb = b.joint();
    let mut tv = 0.0;
    for (k, p) in &ja {
        tv += (p - jb.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, q) in &jb {
        if !ja.contains_key(k) {
            tv += q.abs();
        }
    }
    tv / 2.0
}

/// Total-variation distance between the step-by-step walk and the
/// environment-first construction over `horizon` steps.
pub fn nonadaptive_equivalence(
    family: &GraphFamily,
    env: &Environment,
    horizon: usize,
    start: Option<&Label>,
) -> Result<f64> {
    let hier = hierarchical_law(family, env, horizon, start, DEFAULT_ATOM_CAP)?;
    let inter = exact_law(family, env, horizon, start, DEFAULT_ATOM_CAP)?;
    Ok(total_variation(&hier, &inter))
}

/// Exact-expectation checks of the super/sub-martingale step at every state
/// reachable within `depth` steps from each vertex of `V_(n-1) \ {a}`.
#[derive(Clone, Debug, Serialize)]
pub struct OneStepReport {
    pub radius: usize,
    pub depth: usize,
    pub states: usize,
    /// `max (E[A_{t+1} | state] - A_t)`.
    pub max_super_excess: f64,
    /// `max (B_t - E[B_{t+1} | state])`.
    pub max_sub_deficit: f64,
    /// `max |E[A_{t+1} | state] - A_t|`.
    pub max_abs_gap: f64,
    pub holds: bool,
}

/// State of the stopped processes at one history.
#[derive(Clone, Debug)]
pub struct MartingaleState {
    pub position: usize,
    pub env: EnvState,
    pub alpha_product: f64,
    pub beta_product: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct OneStepResult {
    pub a_now: f64,
    pub a_next: f64,
    pub b_now: f64,
    pub b_next: f64,
}

type VoltageCache = HashMap<(usize, Vec<u64>), Arc<Vec<f64>>>;

struct StarSolver<'a> {
    ball: &'a Ball,
    split: &'a ComponentSplit,
    n: usize,
    cache: VoltageCache,
}

impl StarSolver<'_> {
    fn voltages(&mut self, k: usize, env: &EnvState) -> Result<Arc<Vec<f64>>> {
        let config = env.config(self.ball.edges_within(self.n));
        let key = (k, config.iter().map(|c| c.to_bits()).collect());
        if let Some(v) = self.cache.get(&key) {
            return Ok(Arc::clone(v));
        }
        let (v, _) = star_voltage(self.ball, self.split, k, self.n, &config)?;
        let v = Arc::new(v);
        self.cache.insert(key, Arc::clone(&v));
        Ok(v)
    }

    fn ratio_extremes(&self, k: usize, now: &[f64], next: &[f64]) -> Result<(f64, f64)> {
        let (mut hi, mut lo) = (1.0f64, 1.0f64);
        for x in 1..self.ball.vertices_within(self.n) {
            if self.split.component_of(self.ball, x) != Some(k) {
                continue;
            }
            let (g0, g1) = (1.0 - now[x], 1.0 - next[x]);
            if g0 < 1e-14 || g1 < 1e-14 {
                return Err(Error::DegenerateVoltage { gap: g0.min(g1) });
            }
            hi = hi.max(g1 / g0);
            lo = lo.min(g1 / g0);
        }
        Ok((hi, lo))
    }

    /// Exact conditional expectations of the next `A` and `B` values.
    fn check(&mut self, state: &MartingaleState) -> Result<(OneStepResult, Vec<(f64, MartingaleState)>)> {
        let x = state.position;
        let k = self
            .split
            .component_of(self.ball, x)
            .ok_or_else(|| Error::Precondition("state at the origin".into()))?;
        let v_now = self.voltages(k, &state.env)?;
        let a_now = (1.0 - v_now[x]) / state.alpha_product;
        let b_now = (1.0 - v_now[x]) / state.beta_product;
        let mut a_next = 0.0;
        let mut b_next = 0.0;
        let mut children = Vec::new();
        for (y, e, p) in transition_probabilities(self.ball, x, &state.env) {
            for (q, env_next) in state.env.branches(Some(e))? {
                let v_next = self.voltages(k, &env_next)?;
                let (alpha, beta) = self.ratio_extremes(k, &v_now, &v_next)?;
                let gap = if y == 0 { 0.0 } else { 1.0 - v_next[y] };
                let child = MartingaleState {
                    position: y,
                    env: env_next,
                    alpha_product: state.alpha_product * alpha,
                    beta_product: state.beta_product * beta,
                };
                a_next += p * q * gap / child.alpha_product;
                b_next += p * q * gap / child.beta_product;
                children.push((p * q, child));
            }
        }
        Ok((
            OneStepResult {
                a_now,
                a_next,
                b_now,
                b_next,
            },
            children,
        ))
    }
}

/// One-step check at a single interior state.
pub fn one_step_martingale_check(
    ball: &Ball,
    split: &ComponentSplit,
    n: usize,
    state: &MartingaleState,
) -> Result<OneStepResult> {
    let x = state.position;
    if x == 0 || ball.dist(x) >= n {
        return Err(Error::Precondition(
            "state must lie in V_(n-1) without the origin".into(),
        ));
    }
    let mut solver = StarSolver {
        ball,
        split,
        n,
        cache: HashMap::new(),
    };
    Ok(solver.check(state)?.0)
}

/// Runs [`one_step_martingale_check`] over every reachable unstopped state.
pub fn martingale_suite(
    family: &GraphFamily,
    env: &Environment,
    n: usize,
    depth: usize,
    tol: f64,
) -> Result<OneStepReport> {
    if n < 2 {
        return Err(Error::Precondition("radius must be at least 2".into()));
    }
    let ball = Ball::build(family, n)?;
    let split = split_at_origin(family, n)?;
    if n < split.d_max {
        return Err(Error::Precondition(format!(
            "radius {n} is below D_max = {}",
            split.d_max
        )));
    }
    let mut solver = StarSolver {
        ball: &ball,
        split: &split,
        n,
        cache: HashMap::new(),
    };
    let env0 = env.start(&ball)?;
    let mut report = OneStepReport {
        radius: n,
        depth,
        states: 0,
        max_super_excess: f64::NEG_INFINITY,
        max_sub_deficit: f64::NEG_INFINITY,
        max_abs_gap: 0.0,
        holds: true,
    };
    let mut frontier: Vec<MartingaleState> = (1..ball.vertices_within(n - 1))
        .map(|x| MartingaleState {
            position: x,
            env: env0.clone(),
            alpha_product: 1.0,
            beta_product: 1.0,
        })
        .collect();
    for _ in 0..depth {
        let mut next = Vec::new();
        for state in &frontier {
            let (res, children) = solver.check(state)?;
            report.states += 1;
            report.max_super_excess = report.max_super_excess.max(res.a_next - res.a_now);
            report.max_sub_deficit = report.max_sub_deficit.max(res.b_now - res.b_next);
            report.max_abs_gap = report.max_abs_gap.max((res.a_next - res.a_now).abs());
            next.extend(
                children
                    .into_iter()
                    .map(|(_, c)| c)
                    .filter(|c| c.position != 0 && ball.dist(c.position) < n),
            );
        }
        frontier = next;
    }
    report.holds = report.max_super_excess <= tol && report.max_sub_deficit <= tol;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct FrozenCheck {
    pub level: f64,
    pub horizon: usize,
    pub histories: usize,
    /// Probability of each freezing time; `none` when not frozen within the horizon.
    pub gamma_counts: BTreeMap<String, f64>,
    pub max_discrepancy: f64,
    pub total_probability: f64,
    pub holds: bool,
}

#[derive(Clone)]
struct FrozenAtom {
    path: Vec<usize>,
    shown: Vec<Vec<f64>>,
    prob: f64,
    env: EnvState,
    beta_products: Vec<f64>,
    gamma_sum: f64,
    gamma_m: Option<usize>,
}

/// Enumerates the frozen walk `X~` (the original walk until `γ_m`, then a
/// walk on `C_{γ_m - 1}`) and checks that, given its own history of
/// positions and environments, each step follows `P(X~_t, . ; C~_t)`.
/// `γ_m` is monitored online over the star of component `component` with
/// radii `D_max..` up to the ball radius.
pub fn frozen_process_check(
    family: &GraphFamily,
    env: &Environment,
    m: f64,
    horizon: usize,
    start: Option<&Label>,
    component: usize,
) -> Result<FrozenCheck> {
    if m < 1.0 {
        return Err(Error::Precondition("freeze level must be at least 1".into()));
    }
    let (ball, x0) = law_ball(family, start, horizon)?;
    let probe = ball.radius().max(2);
    let split = split_at_origin(family, probe)?;
    let d_max = split.d_max;
    let radii: Vec<usize> = (d_max..=ball.radius())
        .filter(|&r| {
            ball.sphere(r)
                .any(|x| split.component_of(&ball, x) == Some(component))
        })
        .collect();
    if radii.is_empty() {
        return Err(Error::Precondition("no radius carries a star boundary".into()));
    }
    let edges = ball.edges().len();
    let mut solvers: Vec<StarSolver> = radii
        .iter()
        .map(|&n| StarSolver {
            ball: &ball,
            split: &split,
            n,
            cache: HashMap::new(),
        })
        .collect();
    let env0 = env.start(&ball)?;
    let mut atoms = vec![FrozenAtom {
        path: vec![x0],
        shown: vec![env0.config(edges)],
        prob: 1.0,
        env: env0,
        beta_products: vec![1.0; radii.len()],
        gamma_sum: 0.0,
        gamma_m: None,
    }];
    for t in 0..horizon {
        let mut next = Vec::new();
        for atom in &atoms {
            let x = *atom.path.last().unwrap();
            if atom.gamma_m.is_some() {
                let frozen = atom.shown.last().unwrap();
                for (y, p) in transition_distribution(&ball, x, frozen)? {
                    let mut a = atom.clone();
                    a.path.push(y);
                    a.shown.push(frozen.clone());
                    a.prob *= p;
                    next.push(a);
                }
                continue;
            }
            let now = atom.env.config(edges);
            for (y, e, p) in transition_probabilities(&ball, x, &atom.env) {
                for (q, env_next) in atom.env.branches(Some(e))? {
                    let after = env_next.config(edges);
                    let mut betas = atom.beta_products.clone();
                    for (i, solver) in solvers.iter_mut().enumerate() {
                        let v0 = solver.voltages(component, &atom.env)?;
                        let v1 = solver.voltages(component, &env_next)?;
                        betas[i] *= solver.ratio_extremes(component, &v0, &v1)?.1;
                    }
                    let gamma_sum = atom.gamma_sum
                        + now
                            .iter()
                            .zip(&after)
                            .map(|(a, b)| (1.0 / a - 1.0 / b).abs())
                            .sum::<f64>();
                    let lambda = betas.iter().copied().fold(f64::INFINITY, f64::min);
                    let gstar = gamma_star(&ball, &after, d_max);
                    let triggered = lambda <= 1.0 / m || gamma_sum.max(gstar) >= m;
                    let mut path = atom.path.clone();
                    path.push(y);
                    let mut shown = atom.shown.clone();
                    shown.push(if triggered { now.clone() } else { after });
                    next.push(FrozenAtom {
                        path,
                        shown,
                        prob: atom.prob * p * q,
                        env: env_next,
                        beta_products: betas,
                        gamma_sum,
                        gamma_m: triggered.then_some(t + 1),
                    });
                }
            }
        }
        if next.len() > DEFAULT_ATOM_CAP {
            return Err(Error::AtomCapExceeded {
                cap: DEFAULT_ATOM_CAP,
            });
        }
        atoms = next;
    }

    // prefix probabilities of (positions, shown environments)
    type Key = (Vec<usize>, Vec<u64>);
    let key = |a: &FrozenAtom, t: usize| -> Key {
        (
            a.path[..=t].to_vec(),
            a.shown[..=t].iter().flatten().map(|c| c.to_bits()).collect(),
        )
    };
    let mut max_discrepancy: f64 = 0.0;
    let mut histories = 0;
    for t in 0..horizon {
        let mut prefix: BTreeMap<Key, (f64, BTreeMap<usize, f64>, usize)> = BTreeMap::new();
        for (i, a) in atoms.iter().enumerate() {
            let entry = prefix.entry(key(a, t)).or_insert((0.0, BTreeMap::new(), i));
            entry.0 += a.prob;
            *entry.1.entry(a.path[t + 1]).or_insert(0.0) += a.prob;
        }
        for ((path, _), (p, moves, rep)) in &prefix {
            histories += 1;
            let shown = &atoms[*rep].shown[t];
            for (y, q) in transition_distribution(&ball, path[t], shown)? {
                let observed = moves.get(&y).copied().unwrap_or(0.0) / p;
                max_discrepancy = max_discrepancy.max((observed - q).abs());
            }
        }
    }
    let mut gamma_counts = BTreeMap::new();
    for a in &atoms {
        let label = a.gamma_m.map_or("none".to_string(), |g| g.to_string());
        *gamma_counts.entry(label).or_insert(0.0) += a.prob;
    }
    let total_probability = atoms.iter().map(|a| a.prob).sum();
    Ok(FrozenCheck {
        level: m,
        horizon,
        histories,
        gamma_counts,
        max_discrepancy,
        total_probability,
        holds: max_discrepancy <= 1e-10,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    RecurrentByTheorem,
    TransientByTheorem,
    HypothesisFails,
    Inconclusive,
}

#[derive(Clone, Debug)]
pub struct ClassifyOptions {
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub start: Option<Label>,
    /// Radii for the `C_0` resistance profile.
    pub radii: Vec<usize>,
    /// Length and ball radius of the recorded environment trace.
    pub trace_horizon: usize,
    pub trace_radius: usize,
    pub probe_radius: usize,
    pub max_radius: usize,
    pub truncation: TruncationPolicy,
    pub visit_radius: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            horizon: 1000,
            trials: 100,
            seed: 0,
            start: None,
            radii: (2..=20).collect(),
            trace_horizon: 200,
            trace_radius: 16,
            probe_radius: 6,
            max_radius: 1000,
            truncation: TruncationPolicy::Stop,
            visit_radius: 4,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VisitStat {
    pub vertex: Label,
    pub mean_visits: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EllipticityEntry {
    pub from: Label,
    pub to: Label,
    /// `None` if the step from `from` was never taken.
    pub min_probability: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassificationReport {
    pub horizon: usize,
    pub trials: usize,
    /// Fraction of trials that came back to the origin within the horizon (empirical).
    pub return_frequency: f64,
    pub return_std_err: f64,
    pub truncated_trials: usize,
    pub visits: Vec<VisitStat>,
    pub ellipticity: Vec<EllipticityEntry>,
    pub profile: ResistanceProfile,
    pub slowness: SlownessReport,
    pub d_max: usize,
    pub verdict: Verdict,
}

impl ClassifyOptions {
    pub fn simulation_options(&self) -> SimulationOptions {
        SimulationOptions {
            horizon: self.horizon,
            trials: self.trials,
            seed: self.seed,
            start: self.start.clone(),
            max_radius: self.max_radius,
            truncation: self.truncation,
            visit_radius: self.visit_radius,
            ..SimulationOptions::default()
        }
    }
}

/// The deterministic inputs of a verdict: the `C_0` resistance profile and
/// the slowness report of one environment trace.
#[derive(Clone, Debug, Serialize)]
pub struct TheoremInputs {
    pub profile: ResistanceProfile,
    pub slowness: SlownessReport,
    pub d_max: usize,
}

pub fn theorem_inputs(family: &GraphFamily, env: &Environment, opts: &ClassifyOptions) -> Result<TheoremInputs> {
    let base = env.base.clone();
    let profile = resistance_profile(family, &|b: &Ball| base.weights(b), &opts.radii)?;
    let split = split_at_origin(family, opts.probe_radius)?;
    let trace_ball = Ball::build(family, opts.trace_radius.max(split.d_max))?;
    let trace = environment_trace(
        family,
        env,
        &trace_ball,
        opts.trace_horizon,
        opts.seed,
        opts.start.clone(),
        opts.max_radius,
    )?;
    let infinite = !matches!(family.kind(), FamilyKind::Explicit { .. });
    let slowness = slowness_report(&trace, &trace_ball, split.d_max, env.metadata(infinite))?;
    Ok(TheoremInputs {
        profile,
        slowness,
        d_max: split.d_max,
    })
}

pub fn classify(family: &GraphFamily, env: &Environment, opts: &ClassifyOptions) -> Result<ClassificationReport> {
    let inputs = theorem_inputs(family, env, opts)?;
    let sim = simulate(family, env, &opts.simulation_options())?;
    Ok(classify_simulation(opts, inputs, &sim))
}

/// Verdict from `inputs` with the empirical statistics of `sim` attached.
pub fn classify_simulation(opts: &ClassifyOptions, inputs: TheoremInputs, sim: &Simulation) -> ClassificationReport {
    let TheoremInputs {
        profile,
        slowness,
        d_max,
    } = inputs;
    let freq = sim.return_frequency();
    let trials = sim.trajectories.len() as f64;
    let ball = &sim.ball;
    let tracked = ball.vertices_within(opts.visit_radius);
    let visits = (0..tracked)
        .map(|x| VisitStat {
            vertex: ball.label(x).clone(),
            mean_visits: sim.trajectories.iter().map(|t| t.visits[x] as f64).sum::<f64>() / trials,
        })
        .collect();
    let mut ellipticity = Vec::new();
    for x in 0..tracked {
        for (i, &(y, _)) in ball.incident(x).iter().enumerate() {
            let m = sim
                .trajectories
                .iter()
                .map(|t| t.min_step_probability[x][i])
                .fold(f64::INFINITY, f64::min);
            ellipticity.push(EllipticityEntry {
                from: ball.label(x).clone(),
                to: ball.label(y).clone(),
                min_probability: m.is_finite().then_some(m),
            });
        }
    }
    let verdict = match (slowness.verdict, profile.verdict) {
        (SlownessVerdict::NotPlausible, _) => Verdict::HypothesisFails,
        (SlownessVerdict::Plausible, ProfileVerdict::Divergent) => Verdict::RecurrentByTheorem,
        (SlownessVerdict::Plausible, ProfileVerdict::Convergent) => Verdict::TransientByTheorem,
    };
    ClassificationReport {
        horizon: opts.horizon,
        trials: opts.trials,
        return_frequency: freq,
        return_std_err: (freq * (1.0 - freq) / trials).sqrt(),
        truncated_trials: sim.truncated(),
        visits,
        ellipticity,
        profile,
        slowness,
        d_max,
        verdict,
    }
}
