//! Finite weighted networks: the common currency of the electrical solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Ball;

/// A strictly positive conductance per edge. Resistances are reciprocals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightConfig(Vec<f64>);

impl WeightConfig {
    pub fn new(conductances: Vec<f64>) -> Result<Self> {
        check_proper(&conductances)?;
        Ok(WeightConfig(conductances))
    }

    pub fn unit(edges: usize) -> Self {
        WeightConfig(vec![1.0; edges])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn resistances(&self) -> Vec<f64> {
        self.0.iter().map(|c| 1.0 / c).collect()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub(crate) fn check_proper(conductances: &[f64]) -> Result<()> {
    for (e, &c) in conductances.iter().enumerate() {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Domain(format!(
                "edge {e} has conductance {c}; proper configurations need values in (0, inf)"
            )));
        }
    }
    Ok(())
}

/// Undirected multigraph on `0..n` with a conductance per edge.
#[derive(Clone, Debug)]
pub struct Network {
    n: usize,
    edges: Vec<(usize, usize)>,
    conductance: Vec<f64>,
    adj: Vec<Vec<(usize, usize)>>,
}

impl Network {
    pub fn new(n: usize, edges: Vec<(usize, usize)>, conductance: Vec<f64>) -> Result<Self> {
        if edges.len() != conductance.len() {
            return Err(Error::IncompleteConfig(edges.len().min(conductance.len())));
        }
        check_proper(&conductance)?;
        let mut adj = vec![Vec::new(); n];
        for (e, &(u, v)) in edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(Error::StructuralGraph(format!(
                    "edge {e} = ({u}, {v}) references a vertex outside 0..{n}"
                )));
            }
            if u == v {
                return Err(Error::StructuralGraph(format!("edge {e} is a self-loop at {u}")));
            }
            adj[u].push((v, e));
            adj[v].push((u, e));
        }
        Ok(Network {
            n,
            edges,
            conductance,
            adj,
        })
    }

    pub fn unit(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let c = vec![1.0; edges.len()];
        Network::new(n, edges, c)
    }

    /// The induced network on `V_(radius)` of `ball`, with conductances indexed by ball edge id.
    pub fn from_ball(ball: &Ball, radius: usize, conductances: &[f64]) -> Result<Self> {
        let nv = ball.vertices_within(radius);
        let ne = ball.edges_within(radius);
        if conductances.len() < ne {
            return Err(Error::IncompleteConfig(conductances.len()));
        }
        Network::new(nv, ball.edges()[..ne].to_vec(), conductances[..ne].to_vec())
    }

    /// Same topology, new conductances.
    pub fn with_conductances(&self, conductance: Vec<f64>) -> Result<Self> {
        if conductance.len() != self.edges.len() {
            return Err(Error::IncompleteConfig(conductance.len()));
        }
        check_proper(&conductance)?;
        Ok(Network {
            n: self.n,
            edges: self.edges.clone(),
            conductance,
            adj: self.adj.clone(),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn conductances(&self) -> &[f64] {
        &self.conductance
    }

    pub fn conductance(&self, e: usize) -> f64 {
        self.conductance[e]
    }

    pub fn resistance(&self, e: usize) -> f64 {
        1.0 / self.conductance[e]
    }

    pub fn resistances(&self) -> Vec<f64> {
        self.conductance.iter().map(|c| 1.0 / c).collect()
    }

    /// `(neighbor, edge id)` pairs incident to `x`.
    pub fn incident(&self, x: usize) -> &[(usize, usize)] {
        &self.adj[x]
    }

    /// `C(x) = sum of conductances at x`.
    pub fn total_conductance(&self, x: usize) -> f64 {
        self.adj[x].iter().map(|&(_, e)| self.conductance[e]).sum()
    }

    pub fn degree(&self, x: usize) -> usize {
        self.adj[x].len()
    }
}
