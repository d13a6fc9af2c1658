//! Test-side oracles: a plain Gaussian-elimination solver and a collapse of
//! balls into networks written without the library's network types.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rwce_core::config::{self, ExperimentConfig};
use rwce_core::environment::Environment;
use rwce_core::graph::{Ball, GraphFamily};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture(name: &str) -> (ExperimentConfig, GraphFamily, Environment) {
    let path = fixture_dir().join(format!("{name}.json"));
    let (cfg, _) = config::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
    let family = cfg.family(&fixture_dir()).unwrap();
    let env = cfg.environment().unwrap();
    (cfg, family, env)
}

pub const FIXTURES: &[&str] = &[
    "line_static",
    "line_scheduled",
    "line_orrw",
    "line_lrrw",
    "line_geometric_scheduled",
    "grid_static",
    "grid_scheduled",
    "grid_orrw",
    "grid_lrrw",
    "tree_static",
    "tree_scheduled",
    "tree_orrw",
    "tree_lrrw",
    "grid5x5_scheduled",
    "triangle_orrw",
];

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        assert!(d.abs() > 1e-300, "singular system");
        for row in col + 1..n {
            let f = a[row][col] / d;
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Edge list with conductances on vertices `0..n`.
#[derive(Clone, Debug)]
pub struct Net {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub c: Vec<f64>,
}

impl Net {
    /// Voltage with `v(source) = 1`, `v = 0` on `sinks`.
    pub fn voltage(&self, source: usize, sinks: &[usize]) -> Vec<f64> {
        let fixed = |x: usize| x == source || sinks.contains(&x);
        let free: Vec<usize> = (0..self.n).filter(|&x| !fixed(x)).collect();
        let mut slot = vec![usize::MAX; self.n];
        for (i, &x) in free.iter().enumerate() {
            slot[x] = i;
        }
        let m = free.len();
        let mut a = vec![vec![0.0; m]; m];
        let mut b = vec![0.0; m];
        for (e, &(u, w)) in self.edges.iter().enumerate() {
            let c = self.c[e];
            for (x, y) in [(u, w), (w, u)] {
                if slot[x] == usize::MAX {
                    continue;
                }
                a[slot[x]][slot[x]] += c;
                if slot[y] != usize::MAX {
                    a[slot[x]][slot[y]] -= c;
                } else if y == source {
                    b[slot[x]] += c;
                }
            }
        }
        let sol = gauss(a, b);
        let mut v = vec![0.0; self.n];
        v[source] = 1.0;
        for (i, &x) in free.iter().enumerate() {
            v[x] = sol[i];
        }
        v
    }

    /// Current leaving `source` for the voltage above.
    pub fn strength(&self, v: &[f64], source: usize) -> f64 {
        self.edges
            .iter()
            .enumerate()
            .map(|(e, &(u, w))| {
                if u == source {
                    self.c[e] * (v[u] - v[w])
                } else if w == source {
                    self.c[e] * (v[w] - v[u])
                } else {
                    0.0
                }
            })
            .sum()
    }

    pub fn resistance(&self, source: usize, sinks: &[usize]) -> f64 {
        let v = self.voltage(source, sinks);
        1.0 / self.strength(&v, source)
    }

    /// Unit current from `source` to `sinks`, edge orientation `(u, w)`.
    pub fn unit_current(&self, source: usize, sinks: &[usize]) -> Vec<f64> {
        let v = self.voltage(source, sinks);
        let s = self.strength(&v, source);
        self.edges
            .iter()
            .enumerate()
            .map(|(e, &(u, w))| self.c[e] * (v[u] - v[w]) / s)
            .collect()
    }
}

/// `G_(n)` with the sphere at `n` merged into one sink, written directly
/// from the ball's edge list. Optionally keeps only vertices accepted by
/// `keep` (the origin is always kept). Returns the network, the origin and
/// sink ids, and the ball id of each non-sink node.
pub fn collapse(
    ball: &Ball,
    n: usize,
    weights: &[f64],
    keep: impl Fn(usize) -> bool,
) -> (Net, usize, usize, Vec<usize>) {
    let inside: Vec<usize> = (0..ball.len())
        .filter(|&x| ball.dist(x) < n && (x == 0 || keep(x)))
        .collect();
    let mut id = vec![usize::MAX; ball.len()];
    for (i, &x) in inside.iter().enumerate() {
        id[x] = i;
    }
    let sink = inside.len();
    let mut edges = Vec::new();
    let mut c = Vec::new();
    for (e, &(u, w)) in ball.edges().iter().enumerate() {
        let (du, dw) = (ball.dist(u), ball.dist(w));
        if du > n || dw > n || (du == n && dw == n) {
            continue;
        }
        if (u != 0 && !keep(u)) || (w != 0 && !keep(w)) {
            continue;
        }
        let map = |x: usize| if ball.dist(x) == n { sink } else { id[x] };
        edges.push((map(u), map(w)));
        c.push(weights[e]);
    }
    (
        Net {
            n: sink + 1,
            edges,
            c,
        },
        0,
        sink,
        inside,
    )
}
