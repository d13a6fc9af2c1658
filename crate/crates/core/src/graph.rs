//! Infinite graphs as neighbor generators, their finite balls, boundary
//! collapse, and the decomposition of the graph after deleting the origin.
//!
//! Vertices of a ball are numbered densely in breadth-first order from the
//! origin, visiting neighbors in generator order. Because BFS processes whole
//! layers, the numbering of `ball(n)` is a prefix of the numbering of
//! `ball(n + 1)`; edges are numbered by their larger endpoint, so edge ids are
//! prefix-stable as well. Environments and walks rely on this: a quantity
//! indexed by vertex or edge id stays valid when the working ball grows.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;

/// Vertex label in a graph family: integer coordinates, a tree address, or an explicit id.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(pub Vec<i64>);

impl Label {
    pub fn scalar(k: i64) -> Self {
        Label(vec![k])
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FamilyKind {
    /// The integers with nearest-neighbor edges.
    Line,
    /// The square lattice.
    Grid2d,
    /// Rooted tree: the root has `root_degree` children, every other vertex `branching`.
    Tree { branching: usize, root_degree: usize },
    /// A finite graph on `0..n` given by sorted adjacency lists.
    Explicit { adjacency: Vec<Vec<usize>> },
}

/// A locally finite connected graph with a designated origin.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphFamily {
    kind: FamilyKind,
    origin: Label,
    name: String,
}

impl GraphFamily {
    pub fn line() -> Self {
        GraphFamily {
            kind: FamilyKind::Line,
            origin: Label::scalar(0),
            name: "line".into(),
        }
    }

    pub fn grid2d() -> Self {
        GraphFamily {
            kind: FamilyKind::Grid2d,
            origin: Label(vec![0, 0]),
            name: "grid2d".into(),
        }
    }

    /// Rooted tree in which every vertex has `branching` children.
    pub fn tree(branching: usize) -> Result<Self> {
        Self::tree_with_root_degree(branching, branching)
    }

    /// Tree whose root has `root_degree` children and every other vertex `branching`
    /// children; `(2, 3)` is the 3-regular tree.
    pub fn tree_with_root_degree(branching: usize, root_degree: usize) -> Result<Self> {
        if branching == 0 || root_degree == 0 {
            return Err(Error::Config(
                "tree branching and root degree must be at least 1".into(),
            ));
        }
        Ok(GraphFamily {
            kind: FamilyKind::Tree {
                branching,
                root_degree,
            },
            origin: Label(Vec::new()),
            name: "tree".into(),
        })
    }

    /// Finite graph from an edge list on `0..n`; origin defaults to vertex 0.
    pub fn explicit(edges: &[(usize, usize)]) -> Result<Self> {
        let n = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
        if n == 0 {
            return Err(Error::StructuralGraph("edge list is empty".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u == v {
                return Err(Error::StructuralGraph(format!("self-loop at vertex {u}")));
            }
            if adjacency[u].contains(&v) {
                return Err(Error::StructuralGraph(format!("duplicate edge {{{u}, {v}}}")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for (x, nbrs) in adjacency.iter_mut().enumerate() {
            if nbrs.is_empty() {
                return Err(Error::StructuralGraph(format!("vertex {x} is isolated")));
            }
            nbrs.sort_unstable();
        }
        // connectivity
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(x) = queue.pop_front() {
            for &y in &adjacency[x] {
                if !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
        if let Some(x) = seen.iter().position(|s| !s) {
            return Err(Error::StructuralGraph(format!(
                "vertex {x} is not connected to vertex 0"
            )));
        }
        Ok(GraphFamily {
            kind: FamilyKind::Explicit { adjacency },
            origin: Label::scalar(0),
            name: "explicit".into(),
        })
    }

    /// Parses the edge-list format: one whitespace-separated `u v` pair per line,
    /// 0-based labels. Blank lines and lines starting with `#` are skipped.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize> {
                tok.and_then(|t| t.parse::<usize>().ok()).ok_or_else(|| {
                    Error::Config(format!("edge list line {}: expected `u v`", lineno + 1))
                })
            };
            let u = parse(parts.next())?;
            let v = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(Error::Config(format!(
                    "edge list line {}: trailing tokens",
                    lineno + 1
                )));
            }
            edges.push((u, v));
        }
        Self::explicit(&edges)
    }

    pub fn from_edge_list_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_edge_list(&text)
    }

    pub fn with_origin(mut self, origin: Label) -> Result<Self> {
        self.validate_label(&origin)?;
        self.origin = origin;
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn origin(&self) -> &Label {
        &self.origin
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    fn validate_label(&self, x: &Label) -> Result<()> {
        let ok = match &self.kind {
            FamilyKind::Line => x.0.len() == 1,
            FamilyKind::Grid2d => x.0.len() == 2,
            FamilyKind::Tree {
                branching,
                root_degree,
            } => x.0.iter().enumerate().all(|(depth, &c)| {
                let width = if depth == 0 { *root_degree } else { *branching };
                c >= 0 && (c as usize) < width
            }),
            FamilyKind::Explicit { adjacency } => {
                x.0.len() == 1 && x.0[0] >= 0 && (x.0[0] as usize) < adjacency.len()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::StructuralGraph(format!(
                "label {x} is not a vertex of {}",
                self.name
            )))
        }
    }

    /// Ordered neighbor list of `x`.
    pub fn neighbors(&self, x: &Label) -> Result<Vec<Label>> {
        self.validate_label(x)?;
        let out = match &self.kind {
            FamilyKind::Line => {
                let k = x.0[0];
                vec![Label::scalar(k - 1), Label::scalar(k + 1)]
            }
            FamilyKind::Grid2d => {
                let (i, j) = (x.0[0], x.0[1]);
                vec![
                    Label(vec![i + 1, j]),
                    Label(vec![i - 1, j]),
                    Label(vec![i, j + 1]),
                    Label(vec![i, j - 1]),
                ]
            }
            FamilyKind::Tree {
                branching,
                root_degree,
            } => {
                let width = if x.0.is_empty() {
                    *root_degree
                } else {
                    *branching
                };
                let mut out = Vec::with_capacity(width + 1);
                if !x.0.is_empty() {
                    out.push(Label(x.0[..x.0.len() - 1].to_vec()));
                }
                for c in 0..width {
                    let mut child = x.0.clone();
                    child.push(c as i64);
                    out.push(Label(child));
                }
                out
            }
            FamilyKind::Explicit { adjacency } => adjacency[x.0[0] as usize]
                .iter()
                .map(|&y| Label::scalar(y as i64))
                .collect(),
        };
        Ok(out)
    }
}

/// Finite ball `V_(n)` around the origin with its induced edges `E_(n)`.
#[derive(Clone, Debug)]
pub struct Ball {
    radius: usize,
    labels: Vec<Label>,
    index: HashMap<Label, usize>,
    dist: Vec<usize>,
    parent: Vec<Option<usize>>,
    degree: Vec<usize>,
    edges: Vec<(usize, usize)>,
    edge_index: HashMap<(usize, usize), usize>,
    adj: Vec<Vec<(usize, usize)>>,
    layer_end: Vec<usize>,
    edges_before: Vec<usize>,
}

/// BFS-exact ball of radius `n` around the family's origin.
/// Largest number of vertices [`Ball::build`] will materialize.
pub const MAX_BALL_VERTICES: usize = 1_000_000;

pub fn ball(family: &GraphFamily, n: usize) -> Result<Ball> {
    Ball::build(family, n)
}

impl Ball {
    pub fn build(family: &GraphFamily, n: usize) -> Result<Ball> {
        let origin = family.origin().clone();
        let mut labels = vec![origin.clone()];
        let mut index = HashMap::from([(origin, 0usize)]);
        let mut dist = vec![0usize];
        let mut parent = vec![None];
        let mut nbr_lists: Vec<Vec<Label>> = Vec::new();

        let mut head = 0;
        while head < labels.len() {
            let x = labels[head].clone();
            let d = dist[head];
            let nbrs = family.neighbors(&x)?;
            if nbrs.is_empty() {
                return Err(Error::StructuralGraph(format!("vertex {x} has degree 0")));
            }
            for (i, y) in nbrs.iter().enumerate() {
                if *y == x {
                    return Err(Error::StructuralGraph(format!("self-loop at {x}")));
                }
                if nbrs[..i].contains(y) {
                    return Err(Error::StructuralGraph(format!(
                        "neighbor {y} listed twice at {x}"
                    )));
                }
            }
            if d < n {
                for y in &nbrs {
                    if !index.contains_key(y) {
                        index.insert(y.clone(), labels.len());
                        labels.push(y.clone());
                        if labels.len() > MAX_BALL_VERTICES {
                            return Err(Error::BallTooLarge {
                                radius: n,
                                limit: MAX_BALL_VERTICES,
                            });
                        }
                        dist.push(d + 1);
                        parent.push(Some(head));
                    }
                }
            }
            nbr_lists.push(nbrs);
            head += 1;
        }

        let nv = labels.len();
        let mut edges = Vec::new();
        let mut edge_index = HashMap::new();
        let mut edges_before = Vec::with_capacity(nv + 1);
        for u in 0..nv {
            edges_before.push(edges.len());
            for y in &nbr_lists[u] {
                if let Some(&w) = index.get(y) {
                    if !nbr_lists[w].contains(&labels[u]) {
                        return Err(Error::StructuralGraph(format!(
                            "asymmetric neighbor lists: {y} is a neighbor of {} but not conversely",
                            labels[u]
                        )));
                    }
                    if w < u {
                        edge_index.insert((w, u), edges.len());
                        edges.push((w, u));
                    }
                }
            }
        }
        edges_before.push(edges.len());

        let adj = (0..nv)
            .map(|u| {
                nbr_lists[u]
                    .iter()
                    .filter_map(|y| index.get(y))
                    .map(|&w| (w, edge_index[&(u.min(w), u.max(w))]))
                    .collect()
            })
            .collect();

        let max_d = dist.last().copied().unwrap_or(0);
        let mut layer_end = vec![0usize; max_d + 1];
        for &d in &dist {
            layer_end[d] += 1;
        }
        for d in 1..layer_end.len() {
            layer_end[d] += layer_end[d - 1];
        }

        Ok(Ball {
            radius: n,
            degree: nbr_lists.iter().map(Vec::len).collect(),
            labels,
            index,
            dist,
            parent,
            edges,
            edge_index,
            adj,
            layer_end,
            edges_before,
        })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label(&self, x: usize) -> &Label {
        &self.labels[x]
    }

    pub fn index_of(&self, label: &Label) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn dist(&self, x: usize) -> usize {
        self.dist[x]
    }

    /// Degree of `x` in the whole graph, not just inside the ball.
    pub fn degree(&self, x: usize) -> usize {
        self.degree[x]
    }

    pub fn parent(&self, x: usize) -> Option<usize> {
        self.parent[x]
    }

    /// The vertex at distance 1 on the BFS-tree path from the origin to `x`.
    pub fn first_hop(&self, x: usize) -> Option<usize> {
        if x == 0 {
            return None;
        }
        let mut y = x;
        while self.dist[y] > 1 {
            y = self.parent[y].expect("non-origin vertex has a parent");
        }
        Some(y)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_between(&self, x: usize, y: usize) -> Option<usize> {
        self.edge_index.get(&(x.min(y), x.max(y))).copied()
    }

    /// In-ball `(neighbor, edge id)` pairs of `x`, in generator order.
    pub fn incident(&self, x: usize) -> &[(usize, usize)] {
        &self.adj[x]
    }

    /// True when every neighbor of `x` in the graph lies in the ball.
    pub fn is_complete(&self, x: usize) -> bool {
        self.adj[x].len() == self.degree[x]
    }

    /// `|V_(l)|`; vertex ids below this are exactly `V_(l)`.
    pub fn vertices_within(&self, l: usize) -> usize {
        let l = l.min(self.layer_end.len() - 1);
        self.layer_end[l]
    }

    /// `|E_(l)|`; edge ids below this are exactly `E_(l)`.
    pub fn edges_within(&self, l: usize) -> usize {
        self.edges_before[self.vertices_within(l)]
    }

    /// Vertices at distance exactly `l`.
    pub fn sphere(&self, l: usize) -> std::ops::Range<usize> {
        if l >= self.layer_end.len() {
            return self.len()..self.len();
        }
        let start = if l == 0 { 0 } else { self.layer_end[l - 1] };
        start..self.layer_end[l]
    }

    /// `∂V_(n)` for the ball's own radius.
    pub fn boundary(&self) -> Vec<usize> {
        self.sphere(self.radius).collect()
    }

    pub fn max_degree_within(&self, l: usize) -> usize {
        self.degree[..self.vertices_within(l)]
            .iter()
            .copied()
            .max()
            .unwrap_or(0)
    }
}

/// `G_(n)` with `∂V_(n)` identified to a single sink `b_n`.
#[derive(Clone, Debug)]
pub struct CollapsedNetwork {
    pub radius: usize,
    /// Interior vertices `0..sink` followed by the sink `b_n`.
    pub network: Network,
    pub sink: usize,
    /// Ball id of each interior network vertex; the origin is always first.
    pub vertices: Vec<usize>,
    /// Original ball edge ids merged into each network edge.
    pub back_map: Vec<Vec<usize>>,
}

impl CollapsedNetwork {
    pub fn origin(&self) -> usize {
        0
    }

    /// Network index of a ball vertex, if it is interior.
    pub fn node_of(&self, ball_vertex: usize) -> Option<usize> {
        self.vertices.binary_search(&ball_vertex).ok()
    }

    /// Expands per-ball-edge values to per-network-edge conductances by merging.
    pub fn merge_weights(&self, weights: &[f64]) -> Vec<f64> {
        self.back_map
            .iter()
            .map(|es| es.iter().map(|&e| weights[e]).sum())
            .collect()
    }

    /// Same topology with conductances taken from another ball weight vector.
    pub fn reweighted(&self, weights: &[f64]) -> Result<CollapsedNetwork> {
        Ok(CollapsedNetwork {
            network: self.network.with_conductances(self.merge_weights(weights))?,
            ..self.clone()
        })
    }
}

/// Identifies `∂V_(n)` of `ball` into one vertex, merging parallel edges by
/// conductance addition and dropping boundary-to-boundary edges.
pub fn collapse_boundary(ball: &Ball, weights: &[f64]) -> Result<CollapsedNetwork> {
    collapse_boundary_at(ball, ball.radius(), weights)
}

/// [`collapse_boundary`] for the sub-ball of radius `n <= ball.radius()`.
pub fn collapse_boundary_at(ball: &Ball, n: usize, weights: &[f64]) -> Result<CollapsedNetwork> {
    collapse_restricted(ball, n, weights, |_| true)
}

/// Collapse of the subgraph induced on the ball vertices accepted by `keep`
/// (the origin is always kept), e.g. a component star `G*_k`.
pub fn collapse_restricted(
    ball: &Ball,
    n: usize,
    weights: &[f64],
    keep: impl Fn(usize) -> bool,
) -> Result<CollapsedNetwork> {
    if n == 0 || n > ball.radius() {
        return Err(Error::Precondition(format!(
            "collapse radius {n} must lie in 1..={}",
            ball.radius()
        )));
    }
    let ne = ball.edges_within(n);
    if weights.len() < ne {
        return Err(Error::IncompleteConfig(weights.len()));
    }
    let inner = ball.vertices_within(n - 1);
    let vertices: Vec<usize> = (0..inner).filter(|&x| x == 0 || keep(x)).collect();
    let sink = vertices.len();
    let mut node = HashMap::new();
    for (i, &x) in vertices.iter().enumerate() {
        node.insert(x, i);
    }
    let mut edges = Vec::new();
    let mut conductance = Vec::new();
    let mut back_map: Vec<Vec<usize>> = Vec::new();
    let mut to_sink: HashMap<usize, usize> = HashMap::new();
    for (e, &(u, w)) in ball.edges()[..ne].iter().enumerate() {
        let (lo, hi) = (u.min(w), u.max(w));
        if (lo != 0 && !keep(lo)) || !keep(hi) {
            continue;
        }
        if hi < inner {
            edges.push((node[&lo], node[&hi]));
            conductance.push(weights[e]);
            back_map.push(vec![e]);
        } else if lo < inner {
            let i = node[&lo];
            match to_sink.get(&i) {
                Some(&m) => {
                    conductance[m] += weights[e];
                    back_map[m].push(e);
                }
                None => {
                    to_sink.insert(i, edges.len());
                    edges.push((i, sink));
                    conductance.push(weights[e]);
                    back_map.push(vec![e]);
                }
            }
        }
    }
    let network = Network::new(sink + 1, edges, conductance)?;
    Ok(CollapsedNetwork {
        radius: n,
        network,
        sink,
        vertices,
        back_map,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Finiteness {
    Finite,
    /// Reaches the probe boundary with edges leaving it; a heuristic tag.
    PresumedInfinite,
}

/// One component `Ṽ_k` of the graph minus the origin, as seen in the probe ball.
#[derive(Clone, Debug, Serialize)]
pub struct Component {
    /// Members of `∂V_(1)` in this component (ball ids).
    pub first_layer: Vec<usize>,
    /// All members within the probe ball.
    pub vertices: Vec<usize>,
    pub finiteness: Finiteness,
    /// `D_k`: connecting paths between first-layer members lie in `V_(D_k - 1)`.
    pub connect_radius: usize,
    /// Explicit origin-avoiding paths from the first member to every other one.
    pub paths: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComponentSplit {
    pub probe_radius: usize,
    pub components: Vec<Component>,
    /// Max of `D_k` over all components, finite ones included.
    pub d_max: usize,
    #[serde(skip)]
    first_layer_component: HashMap<usize, usize>,
}

impl ComponentSplit {
    /// Component of a non-origin vertex of any ball of the same family.
    pub fn component_of(&self, ball: &Ball, x: usize) -> Option<usize> {
        ball.first_hop(x)
            .and_then(|y| self.first_layer_component.get(&y).copied())
    }

    /// `V*_k ∩ V_(radius)`: the origin followed by the component's vertices, in ball order.
    pub fn star_vertices(&self, ball: &Ball, k: usize, radius: usize) -> Vec<usize> {
        let mut out = vec![0];
        out.extend(
            (1..ball.vertices_within(radius)).filter(|&x| self.component_of(ball, x) == Some(k)),
        );
        out
    }

    pub fn infinite_components(&self) -> Vec<usize> {
        self.components
            .iter()
            .enumerate()
            .filter(|(_, c)| c.finiteness == Finiteness::PresumedInfinite)
            .map(|(k, _)| k)
            .collect()
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Components of `G ∖ {a}` inside the probe ball, with `D_max`.
pub fn split_at_origin(family: &GraphFamily, probe_radius: usize) -> Result<ComponentSplit> {
    if probe_radius < 2 {
        return Err(Error::Precondition("probe radius must be at least 2".into()));
    }
    let ball = Ball::build(family, probe_radius)?;
    let nv = ball.len();
    let mut uf = UnionFind::new(nv);
    for &(u, w) in ball.edges() {
        if u != 0 && w != 0 {
            uf.union(u, w);
        }
    }
    let mut root_to_k: HashMap<usize, usize> = HashMap::new();
    let mut components: Vec<Component> = Vec::new();
    for x in 1..nv {
        let r = uf.find(x);
        let k = *root_to_k.entry(r).or_insert_with(|| {
            components.push(Component {
                first_layer: Vec::new(),
                vertices: Vec::new(),
                finiteness: Finiteness::Finite,
                connect_radius: 1,
                paths: Vec::new(),
            });
            components.len() - 1
        });
        let c = &mut components[k];
        c.vertices.push(x);
        if ball.dist(x) == 1 {
            c.first_layer.push(x);
        }
        if ball.dist(x) == probe_radius && !ball.is_complete(x) {
            c.finiteness = Finiteness::PresumedInfinite;
        }
    }

    let mut first_layer_component = HashMap::new();
    for (k, c) in components.iter().enumerate() {
        for &y in &c.first_layer {
            first_layer_component.insert(y, k);
        }
    }

    // smallest l with all first-layer members of a component joined inside V_(l) \ {a}
    let mut layered = UnionFind::new(nv);
    let mut joined_at: Vec<Option<usize>> = components
        .iter()
        .map(|c| (c.first_layer.len() <= 1).then_some(0))
        .collect();
    for l in 1..=probe_radius {
        for &(u, w) in &ball.edges()[ball.edges_within(l - 1)..ball.edges_within(l)] {
            if u != 0 && w != 0 {
                layered.union(u, w);
            }
        }
        for (k, c) in components.iter().enumerate() {
            if joined_at[k].is_none() {
                let r = layered.find(c.first_layer[0]);
                if c.first_layer.iter().all(|&y| layered.find(y) == r) {
                    joined_at[k] = Some(l);
                }
            }
        }
    }
    for (k, c) in components.iter_mut().enumerate() {
        let l = joined_at[k].ok_or_else(|| Error::ProbeRadiusTooSmall {
            probe: probe_radius,
            reason: format!("first-layer vertices of component {k} are not joined"),
        })?;
        if l == 0 {
            c.connect_radius = 1;
            continue;
        }
        c.connect_radius = l + 1;
        let limit = ball.vertices_within(l);
        let src = c.first_layer[0];
        for &dst in &c.first_layer[1..] {
            c.paths.push(bfs_path(&ball, src, dst, limit).ok_or_else(|| {
                Error::ProbeRadiusTooSmall {
                    probe: probe_radius,
                    reason: format!("no origin-avoiding path between {src} and {dst}"),
                }
            })?);
        }
    }

    let d_max = components
        .iter()
        .map(|c| c.connect_radius)
        .max()
        .unwrap_or(1);
    if d_max > probe_radius {
        return Err(Error::ProbeRadiusTooSmall {
            probe: probe_radius,
            reason: format!("D_max = {d_max} exceeds the probe ball"),
        });
    }
    Ok(ComponentSplit {
        probe_radius,
        components,
        d_max,
        first_layer_component,
    })
}

/// Shortest path between `src` and `dst` using vertices `1..limit` only.
fn bfs_path(ball: &Ball, src: usize, dst: usize, limit: usize) -> Option<Vec<usize>> {
    let mut prev: HashMap<usize, usize> = HashMap::from([(src, src)]);
    let mut queue = VecDeque::from([src]);
    while let Some(x) = queue.pop_front() {
        if x == dst {
            let mut path = vec![dst];
            let mut y = dst;
            while y != src {
                y = prev[&y];
                path.push(y);
            }
            path.reverse();
            return Some(path);
        }
        for &(y, _) in ball.incident(x) {
            if y != 0 && y < limit && !prev.contains_key(&y) {
                prev.insert(y, x);
                queue.push_back(y);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels_of(ball: &Ball, ids: impl IntoIterator<Item = usize>) -> Vec<Label> {
        let mut v: Vec<Label> = ids.into_iter().map(|x| ball.label(x).clone()).collect();
        v.sort();
        v
    }

    #[test]
    fn line_ball() {
        let b = ball(&GraphFamily::line(), 2).unwrap();
        let mut ks: Vec<i64> = b.labels().iter().map(|l| l.0[0]).collect();
        ks.sort();
        assert_eq!(ks, vec![-2, -1, 0, 1, 2]);
        assert_eq!(
            labels_of(&b, b.boundary()),
            vec![Label::scalar(-2), Label::scalar(2)]
        );
        assert_eq!(b.edges().len(), 4);
    }

    #[test]
    fn regular_tree_ball_counts() {
        let t = GraphFamily::tree_with_root_degree(2, 3).unwrap();
        let b = ball(&t, 2).unwrap();
        assert_eq!(b.len(), 10);
        assert_eq!(b.boundary().len(), 6);
        assert!((0..b.len()).all(|x| b.degree(x) == 3));
    }

    #[test]
    fn grid_sphere_matches_l1_enumeration() {
        let b = ball(&GraphFamily::grid2d(), 3).unwrap();
        let mut oracle = Vec::new();
        for i in -3i64..=3 {
            for j in -3i64..=3 {
                if i.abs() + j.abs() == 3 {
                    oracle.push(Label(vec![i, j]));
                }
            }
        }
        oracle.sort();
        assert_eq!(oracle.len(), 12);
        assert_eq!(labels_of(&b, b.boundary()), oracle);
    }

    #[test]
    fn ball_numbering_is_prefix_stable() {
        for fam in [
            GraphFamily::line(),
            GraphFamily::grid2d(),
            GraphFamily::tree(2).unwrap(),
        ] {
            let small = ball(&fam, 3).unwrap();
            let big = ball(&fam, 5).unwrap();
            assert_eq!(&big.labels()[..small.len()], small.labels());
            assert_eq!(&big.edges()[..small.edges().len()], small.edges());
            assert_eq!(big.edges_within(3), small.edges().len());
            for x in 0..small.vertices_within(2) {
                assert_eq!(small.incident(x), big.incident(x));
            }
        }
    }

    #[test]
    fn asymmetric_generator_is_rejected() {
        let mut fam = GraphFamily::explicit(&[(0, 1), (1, 2)]).unwrap();
        fam.kind = FamilyKind::Explicit {
            adjacency: vec![vec![1], vec![0, 2], vec![0]],
        };
        assert!(matches!(ball(&fam, 2), Err(Error::StructuralGraph(_))));
    }

    #[test]
    fn explicit_rejects_bad_lists() {
        assert!(GraphFamily::explicit(&[(0, 0)]).is_err());
        assert!(GraphFamily::explicit(&[(0, 1), (1, 0)]).is_err());
        assert!(GraphFamily::explicit(&[(0, 1), (2, 3)]).is_err());
        assert!(GraphFamily::parse_edge_list("0 1\n1 x\n").is_err());
        let f = GraphFamily::parse_edge_list("# triangle\n0 1\n1 2\n\n2 0\n").unwrap();
        assert_eq!(f.neighbors(&Label::scalar(0)).unwrap().len(), 2);
    }

    #[test]
    fn collapse_line_unit() {
        let b = ball(&GraphFamily::line(), 2).unwrap();
        let c = collapse_boundary(&b, &vec![1.0; b.edges().len()]).unwrap();
        assert_eq!(c.network.vertex_count(), 4);
        let into_sink: Vec<f64> = c
            .network
            .incident(c.sink)
            .iter()
            .map(|&(_, e)| c.network.conductance(e))
            .collect();
        assert_eq!(into_sink, vec![1.0, 1.0]);
    }

    #[test]
    fn collapse_grid_radius_one() {
        let b = ball(&GraphFamily::grid2d(), 1).unwrap();
        let c = collapse_boundary(&b, &vec![1.0; b.edges().len()]).unwrap();
        assert_eq!(c.network.edge_count(), 1);
        assert_eq!(c.network.conductance(0), 4.0);
        assert_eq!(c.back_map[0].len(), 4);
    }

    #[test]
    fn collapse_drops_boundary_self_loops() {
        let tri = GraphFamily::explicit(&[(0, 1), (1, 2), (2, 0)]).unwrap();
        let b = ball(&tri, 1).unwrap();
        assert_eq!(b.edges().len(), 3);
        let c = collapse_boundary(&b, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(c.network.edge_count(), 1);
        let total: f64 = c.back_map[0].iter().map(|&e| [1.0, 2.0, 3.0][e]).sum();
        assert_eq!(c.network.conductance(0), total);
    }

    #[test]
    fn collapse_needs_complete_weights() {
        let b = ball(&GraphFamily::line(), 3).unwrap();
        assert!(matches!(
            collapse_boundary(&b, &[1.0, 1.0]),
            Err(Error::IncompleteConfig(_))
        ));
    }

    #[test]
    fn split_line() {
        let s = split_at_origin(&GraphFamily::line(), 5).unwrap();
        assert_eq!(s.components.len(), 2);
        assert!(s
            .components
            .iter()
            .all(|c| c.finiteness == Finiteness::PresumedInfinite));
        assert_eq!(s.d_max, 1);
        let b = ball(&GraphFamily::line(), 8).unwrap();
        let left = b.index_of(&Label::scalar(-7)).unwrap();
        let right = b.index_of(&Label::scalar(6)).unwrap();
        assert_ne!(s.component_of(&b, left), s.component_of(&b, right));
    }

    #[test]
    fn split_grid_single_component() {
        let s = split_at_origin(&GraphFamily::grid2d(), 6).unwrap();
        assert_eq!(s.components.len(), 1);
        assert_eq!(s.components[0].first_layer.len(), 4);
        // neighbors of the origin are joined through V_(2), so paths lie in V_(D-1) with D = 3
        assert_eq!(s.d_max, 3);
        for p in &s.components[0].paths {
            assert!(p.len() >= 3);
        }
    }

    #[test]
    fn split_star_graph() {
        let star = GraphFamily::explicit(&[(0, 1), (0, 2), (0, 3)]).unwrap();
        let s = split_at_origin(&star, 2).unwrap();
        assert_eq!(s.components.len(), 3);
        assert!(s.components.iter().all(|c| c.finiteness == Finiteness::Finite));
    }

    #[test]
    fn split_components_are_non_adjacent() {
        let s = split_at_origin(&GraphFamily::line(), 4).unwrap();
        let b = ball(&GraphFamily::line(), 4).unwrap();
        for &(u, w) in b.edges() {
            if u != 0 && w != 0 {
                assert_eq!(s.component_of(&b, u), s.component_of(&b, w));
            }
        }
    }
}
