//! The discrete parameter manifold: a weighted undirected graph with vertex
//! coordinates and parameter values, a diagonal per-edge metric, lazy random
//! walk measures and metric shortest-path distances.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected graph carrying per-vertex coordinates and parameters.
///
/// Edges are stored with the lower vertex id first. The adjacency lists are
/// kept sorted by neighbor id so that every traversal is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGraph {
    dim: usize,
    coords: Vec<f64>,
    theta: Vec<f64>,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<(usize, usize)>>,
    intrinsic_dim: usize,
}

impl ParameterGraph {
    /// Builds a graph from per-vertex coordinates, parameters and an edge list.
    pub fn new(
        coords: Vec<Vec<f64>>,
        theta: Vec<f64>,
        edges: &[(usize, usize)],
        intrinsic_dim: usize,
    ) -> Result<Self> {
        let n = coords.len();
        if n == 0 {
            return Err(Error::invalid("graph needs at least one vertex"));
        }
        let dim = coords[0].len();
        if dim == 0 {
            return Err(Error::invalid("coordinate dimension must be at least 1"));
        }
        if coords.iter().any(|c| c.len() != dim) {
            return Err(Error::invalid("all coordinates must share one dimension"));
        }
        if theta.len() != n {
            return Err(Error::invalid(format!(
                "expected {n} parameter values, got {}",
                theta.len()
            )));
        }
        if intrinsic_dim == 0 {
            return Err(Error::invalid("intrinsic dimension must be at least 1"));
        }
        let mut graph = ParameterGraph {
            dim,
            coords: coords.into_iter().flatten().collect(),
            theta,
            edges: Vec::with_capacity(edges.len()),
            adjacency: vec![Vec::new(); n],
            intrinsic_dim,
        };
        for &(i, j) in edges {
            graph.add_edge(i, j)?;
        }
        Ok(graph)
    }

    /// Convenience constructor for coordinate-free topologies: every vertex
    /// sits at the origin of a one-dimensional space and carries `theta = 0`.
    pub fn from_edges(vertex_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::new(
            vec![vec![0.0]; vertex_count],
            vec![0.0; vertex_count],
            edges,
            1,
        )
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Coordinate dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Manifold dimension `n` used by the flow's trace term.
    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn with_intrinsic_dim(mut self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("intrinsic dimension must be at least 1"));
        }
        self.intrinsic_dim = n;
        Ok(self)
    }

    pub fn coord(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn with_theta(mut self, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != self.vertex_count() {
            return Err(Error::invalid("parameter vector length mismatch"));
        }
        self.theta = theta;
        Ok(self)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    /// `(neighbor, edge id)` pairs sorted by neighbor.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn is_isolated(&self, i: usize) -> bool {
        self.adjacency[i].is_empty()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edge_between(&self, i: usize, j: usize) -> Option<usize> {
        let adj = self.adjacency.get(i)?;
        adj.binary_search_by_key(&j, |&(v, _)| v)
            .ok()
            .map(|k| adj[k].1)
    }

    /// Appends an edge and returns its id. Only surgery grows a graph.
    pub(crate) fn add_edge(&mut self, i: usize, j: usize) -> Result<usize> {
        let n = self.vertex_count();
        if i >= n || j >= n {
            return Err(Error::invalid(format!(
                "edge ({i}, {j}) out of range for {n} vertices"
            )));
        }
        if i == j {
            return Err(Error::invalid(format!("self-loop at vertex {i}")));
        }
        if self.edge_between(i, j).is_some() {
            return Err(Error::invalid(format!("duplicate edge ({i}, {j})")));
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let id = self.edges.len();
        self.edges.push((a, b));
        for (u, v) in [(a, b), (b, a)] {
            let adj = &mut self.adjacency[u];
            let pos = adj.partition_point(|&(w, _)| w < v);
            adj.insert(pos, (v, id));
        }
        Ok(id)
    }

    /// Copy of this graph with the edges rejected by `keep` dropped. Edge ids
    /// are renumbered.
    pub fn filter_edges(&self, mut keep: impl FnMut(usize) -> bool) -> ParameterGraph {
        let mut out = ParameterGraph {
            dim: self.dim,
            coords: self.coords.clone(),
            theta: self.theta.clone(),
            edges: Vec::new(),
            adjacency: vec![Vec::new(); self.vertex_count()],
            intrinsic_dim: self.intrinsic_dim,
        };
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            if keep(e) {
                out.add_edge(i, j)
                    .expect("subgraph of a valid graph is valid");
            }
        }
        out
    }
}

/// Per-edge diagonal metric `g_e` with weights `w_e = 1 / g_e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricState {
    g: Vec<f64>,
    g_floor: f64,
}

impl MetricState {
    pub fn new(g: Vec<f64>, g_floor: f64) -> Result<Self> {
        if !(g_floor > 0.0 && g_floor.is_finite()) {
            return Err(Error::invalid("metric floor must be positive and finite"));
        }
        if let Some(e) = g.iter().position(|&x| !(x.is_finite() && x > 0.0)) {
            return Err(Error::invalid(format!(
                "edge {e} has non-positive or non-finite metric {}",
                g[e]
            )));
        }
        Ok(MetricState { g, g_floor })
    }

    /// Uniform metric on `edges` edges.
    pub fn uniform(edges: usize, value: f64, g_floor: f64) -> Result<Self> {
        Self::new(vec![value; edges], g_floor)
    }

    pub(crate) fn from_raw(g: Vec<f64>, g_floor: f64) -> Self {
        MetricState { g, g_floor }
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn g_floor(&self) -> f64 {
        self.g_floor
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn weight(&self, e: usize) -> f64 {
        1.0 / self.g[e]
    }

    pub fn weights(&self) -> Vec<f64> {
        self.g.iter().map(|g| 1.0 / g).collect()
    }

    /// Edge length `sqrt(g_e)`.
    pub fn length(&self, e: usize) -> f64 {
        self.g[e].sqrt()
    }

    /// Vertex volume `V_i = sum of incident weights`.
    pub fn volume(&self, graph: &ParameterGraph, i: usize) -> f64 {
        graph
            .neighbors(i)
            .iter()
            .map(|&(_, e)| self.weight(e))
            .sum()
    }

    pub fn volumes(&self, graph: &ParameterGraph) -> Vec<f64> {
        (0..graph.vertex_count())
            .map(|i| self.volume(graph, i))
            .collect()
    }

    pub fn min_g(&self) -> f64 {
        self.g.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_g(&self) -> f64 {
        self.g.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean_g(&self) -> f64 {
        if self.g.is_empty() {
            return 0.0;
        }
        self.g.iter().sum::<f64>() / self.g.len() as f64
    }

    /// Clamps every component to the positivity floor.
    pub fn project(&mut self) {
        let floor = self.g_floor;
        for g in &mut self.g {
            if *g < floor {
                *g = floor;
            }
        }
    }

    /// Appends a component for a newly inserted edge, clamped to the floor.
    pub(crate) fn push(&mut self, g: f64) {
        self.g.push(g.max(self.g_floor));
    }
}

/// Gaussian edge weights `w = exp(-beta_w |x_i - x_j|^2)` and `g = 1 / w`.
pub fn init_weights(graph: &ParameterGraph, beta_w: f64, g_floor: f64) -> Result<MetricState> {
    if !(beta_w > 0.0 && beta_w.is_finite()) {
        return Err(Error::invalid("beta_w must be positive and finite"));
    }
    if let Some(i) =
        (0..graph.vertex_count()).find(|&i| graph.coord(i).iter().any(|x| !x.is_finite()))
    {
        return Err(Error::invalid(format!(
            "vertex {i} has a non-finite coordinate"
        )));
    }
    let g = graph
        .edges()
        .iter()
        .map(|&(i, j)| {
            let d2: f64 = graph
                .coord(i)
                .iter()
                .zip(graph.coord(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            1.0 / (-beta_w * d2).exp()
        })
        .collect::<Vec<_>>();
    if let Some(e) = g.iter().position(|x| !x.is_finite()) {
        return Err(Error::invalid(format!(
            "edge {e} weight underflows for beta_w = {beta_w}"
        )));
    }
    MetricState::new(g, g_floor)
}

/// Metric seeded from squared parameters: `g_e = mean(theta_i^2, theta_j^2)`,
/// clamped to the floor.
pub fn init_from_theta(graph: &ParameterGraph, theta: &[f64], g_floor: f64) -> Result<MetricState> {
    if theta.len() != graph.vertex_count() || theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid(
            "parameter vector must be finite and match the vertex count",
        ));
    }
    let g = graph
        .edges()
        .iter()
        .map(|&(i, j)| (0.5 * (theta[i] * theta[i] + theta[j] * theta[j])).max(g_floor))
        .collect();
    MetricState::new(g, g_floor)
}

/// Probability measure on a vertex neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexMeasure {
    pub support: Vec<usize>,
    pub mass: Vec<f64>,
    pub alpha: f64,
}

impl VertexMeasure {
    pub fn mass_of(&self, v: usize) -> f64 {
        self.support
            .iter()
            .position(|&s| s == v)
            .map_or(0.0, |k| self.mass[k])
    }
}

/// Lazy random walk measure: mass `alpha` stays at `i`, the rest is spread
/// over neighbors in proportion to edge weight.
pub fn vertex_measure(
    graph: &ParameterGraph,
    metric: &MetricState,
    i: usize,
    alpha: f64,
) -> Result<VertexMeasure> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid(format!(
            "idleness must lie in [0, 1), got {alpha}"
        )));
    }
    if i >= graph.vertex_count() {
        return Err(Error::invalid(format!("vertex {i} out of range")));
    }
    let nbrs = graph.neighbors(i);
    if nbrs.is_empty() {
        return Err(Error::DegenerateVertex(i));
    }
    let total: f64 = nbrs.iter().map(|&(_, e)| metric.weight(e)).sum();
    let mut support = Vec::with_capacity(nbrs.len() + 1);
    let mut mass = Vec::with_capacity(nbrs.len() + 1);
    if alpha > 0.0 {
        support.push(i);
        mass.push(alpha);
    }
    for &(j, e) in nbrs {
        support.push(j);
        mass.push((1.0 - alpha) * metric.weight(e) / total);
    }
    Ok(VertexMeasure {
        support,
        mass,
        alpha,
    })
}

/// Ground distance used for transport costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    /// Edge length `sqrt(g_e)`.
    #[default]
    Metric,
    /// Every edge has length one.
    Hop,
}

impl DistanceMode {
    #[inline]
    pub fn edge_length(self, metric: &MetricState, e: usize) -> f64 {
        match self {
            DistanceMode::Metric => metric.length(e),
            DistanceMode::Hop => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Reusable Dijkstra buffers. Only touched entries are reset between runs,
/// so a bounded search costs time proportional to the explored ball.
#[derive(Debug, Default)]
pub(crate) struct DijkstraScratch {
    dist: Vec<f64>,
    touched: Vec<usize>,
    heap: BinaryHeap<HeapItem>,
}

impl DijkstraScratch {
    pub(crate) fn new() -> Self {
        Self::default()
    }

    fn reset(&mut self, n: usize) {
        if self.dist.len() < n {
            self.dist.resize(n, f64::INFINITY);
        }
        for &v in &self.touched {
            self.dist[v] = f64::INFINITY;
        }
        self.touched.clear();
        self.heap.clear();
    }

    /// Distances from `source` to each of `targets`, exploring no farther
    /// than `radius`. Targets outside the ball come back as infinity.
    pub(crate) fn distances_to(
        &mut self,
        graph: &ParameterGraph,
        metric: &MetricState,
        mode: DistanceMode,
        source: usize,
        targets: &[usize],
        radius: f64,
        out: &mut [f64],
    ) {
        debug_assert_eq!(targets.len(), out.len());
        self.reset(graph.vertex_count());
        out.iter_mut().for_each(|d| *d = f64::INFINITY);
        let limit = radius * (1.0 + 1e-12);
        let mut remaining = targets.len();
        self.dist[source] = 0.0;
        self.touched.push(source);
        self.heap.push(HeapItem {
            dist: 0.0,
            node: source,
        });
        while let Some(HeapItem { dist, node }) = self.heap.pop() {
            if dist > self.dist[node] {
                continue;
            }
            if dist > limit {
                break;
            }
            for (k, &t) in targets.iter().enumerate() {
                if t == node && out[k].is_infinite() {
                    out[k] = dist;
                    remaining -= 1;
                }
            }
            if remaining == 0 {
                break;
            }
            for &(v, e) in graph.neighbors(node) {
                let nd = dist + mode.edge_length(metric, e);
                if nd < self.dist[v] && nd <= limit {
                    if self.dist[v].is_infinite() {
                        self.touched.push(v);
                    }
                    self.dist[v] = nd;
                    self.heap.push(HeapItem { dist: nd, node: v });
                }
            }
        }
    }
}

/// Shortest-path distance under edge lengths `sqrt(g_e)` (or hops). Returns
/// `f64::INFINITY` when `i` and `j` lie in different components.
pub fn shortest_path_distance(
    graph: &ParameterGraph,
    metric: &MetricState,
    i: usize,
    j: usize,
    mode: DistanceMode,
) -> f64 {
    if i == j {
        return 0.0;
    }
    let mut scratch = DijkstraScratch::new();
    let mut out = [f64::INFINITY];
    scratch.distances_to(graph, metric, mode, i, &[j], f64::INFINITY, &mut out);
    out[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn path3(w_ab: f64, w_bc: f64) -> (ParameterGraph, MetricState) {
        let g = ParameterGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let m = MetricState::new(vec![1.0 / w_ab, 1.0 / w_bc], 1e-6).unwrap();
        (g, m)
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(ParameterGraph::from_edges(2, &[(0, 0)]).is_err());
        assert!(ParameterGraph::from_edges(2, &[(0, 1), (1, 0)]).is_err());
        assert!(ParameterGraph::from_edges(2, &[(0, 2)]).is_err());
    }

    #[test]
    fn init_weights_identical_points() {
        let g = ParameterGraph::new(
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![0.0; 2],
            &[(0, 1)],
            2,
        )
        .unwrap();
        let m = init_weights(&g, 1.0, 1e-6).unwrap();
        assert_eq!(m.weight(0), 1.0);
        assert_eq!(m.g()[0], 1.0);
    }

    #[test]
    fn init_weights_unit_distance() {
        let g =
            ParameterGraph::new(vec![vec![0.0], vec![1.0]], vec![0.0; 2], &[(0, 1)], 1).unwrap();
        let m = init_weights(&g, 1.0, 1e-6).unwrap();
        assert_relative_eq!(m.weight(0), 0.367_879_441_171_442_3, epsilon = 1e-15);
        assert_relative_eq!(m.g()[0], std::f64::consts::E, epsilon = 1e-14);
    }

    #[test]
    fn init_weights_rejects_nan() {
        let g = ParameterGraph::new(vec![vec![f64::NAN], vec![1.0]], vec![0.0; 2], &[(0, 1)], 1)
            .unwrap();
        assert!(matches!(
            init_weights(&g, 1.0, 1e-6),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn init_weights_uses_beta_verbatim() {
        let n = 4.0_f64;
        let beta = 0.1 * n.sqrt();
        assert_relative_eq!(beta, 0.2, epsilon = 1e-15);
        let g =
            ParameterGraph::new(vec![vec![0.0], vec![1.0]], vec![0.0; 2], &[(0, 1)], 4).unwrap();
        let m = init_weights(&g, beta, 1e-6).unwrap();
        assert_relative_eq!(m.weight(0), (-0.2f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn measure_k2() {
        let g = ParameterGraph::from_edges(2, &[(0, 1)]).unwrap();
        let m = MetricState::uniform(1, 1.0, 1e-6).unwrap();
        let mu = vertex_measure(&g, &m, 0, 0.5).unwrap();
        assert_eq!(mu.mass_of(0), 0.5);
        assert_eq!(mu.mass_of(1), 0.5);
    }

    #[test]
    fn measure_star_center() {
        let g = ParameterGraph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let m = MetricState::uniform(3, 1.0, 1e-6).unwrap();
        let mu = vertex_measure(&g, &m, 0, 0.0).unwrap();
        assert_eq!(mu.support, vec![1, 2, 3]);
        for p in mu.mass {
            assert_relative_eq!(p, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn measure_weighted_path() {
        let (g, m) = path3(1.0, 3.0);
        let mu = vertex_measure(&g, &m, 1, 0.0).unwrap();
        assert_relative_eq!(mu.mass_of(0), 0.25, epsilon = 1e-15);
        assert_relative_eq!(mu.mass_of(2), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn measure_isolated_vertex() {
        let g = ParameterGraph::from_edges(3, &[(0, 1)]).unwrap();
        let m = MetricState::uniform(1, 1.0, 1e-6).unwrap();
        assert_eq!(
            vertex_measure(&g, &m, 2, 0.5),
            Err(Error::DegenerateVertex(2))
        );
    }

    #[test]
    fn distances() {
        let g = ParameterGraph::from_edges(2, &[(0, 1)]).unwrap();
        let m = MetricState::uniform(1, 4.0, 1e-6).unwrap();
        assert_eq!(
            shortest_path_distance(&g, &m, 0, 0, DistanceMode::Metric),
            0.0
        );
        assert_eq!(
            shortest_path_distance(&g, &m, 0, 1, DistanceMode::Metric),
            2.0
        );
        assert_eq!(shortest_path_distance(&g, &m, 0, 1, DistanceMode::Hop), 1.0);

        // triangle with lengths 1, 1, 3: the long edge is bypassed
        let t = ParameterGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let m = MetricState::new(vec![1.0, 1.0, 9.0], 1e-6).unwrap();
        assert_eq!(
            shortest_path_distance(&t, &m, 0, 2, DistanceMode::Metric),
            2.0
        );
    }

    #[test]
    fn disconnected_pair_is_infinite() {
        let g = ParameterGraph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        let m = MetricState::uniform(2, 1.0, 1e-6).unwrap();
        assert!(shortest_path_distance(&g, &m, 0, 3, DistanceMode::Metric).is_infinite());
    }

    #[test]
    fn adjacency_is_sorted_after_insertions() {
        let mut g = ParameterGraph::from_edges(5, &[(0, 4), (0, 2)]).unwrap();
        g.add_edge(3, 0).unwrap();
        g.add_edge(0, 1).unwrap();
        let nbrs: Vec<usize> = g.neighbors(0).iter().map(|&(v, _)| v).collect();
        assert_eq!(nbrs, vec![1, 2, 3, 4]);
        assert_eq!(g.edge_between(3, 0), Some(2));
        assert_eq!(g.edge(2), (0, 3));
    }
}
