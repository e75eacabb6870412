//! Ollivier-Ricci curvature fields and the discrete differential operators
//! built on the weighted graph: gradient, Laplacian and the Bochner
//! decomposition of `1/2 Δ|∇f|^2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{vertex_measure, DijkstraScratch, DistanceMode, MetricState, ParameterGraph};
use crate::par::{map_indexed, map_with_scratch, Execution};
use crate::transport::{exact_w1, sinkhorn_w1, TransportProblem, EXACT_SUPPORT_LIMIT};

/// Which solver computes `W1` between neighborhood measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    #[default]
    Sinkhorn,
    /// Exact linear program whenever both supports fit the exact solver,
    /// Sinkhorn otherwise.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureConfig {
    /// Idleness of the lazy random walk measure.
    pub alpha: f64,
    pub distance: DistanceMode,
    pub transport: TransportMode,
    /// Sinkhorn regularization relative to the largest ground cost.
    pub relative_epsilon: f64,
    pub execution: Execution,
}

impl Default for CurvatureConfig {
    fn default() -> Self {
        CurvatureConfig {
            alpha: 0.5,
            distance: DistanceMode::Metric,
            transport: TransportMode::Sinkhorn,
            relative_epsilon: crate::transport::DEFAULT_RELATIVE_EPSILON,
            execution: Execution::Parallel,
        }
    }
}

impl CurvatureConfig {
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_transport(mut self, transport: TransportMode) -> Self {
        self.transport = transport;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }
}

/// Per-edge and per-vertex curvature of a weighted graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureField {
    /// Ollivier edge curvature `1 - W1 / d`.
    pub kappa: Vec<f64>,
    /// Weight-averaged incident edge curvature; zero on isolated vertices.
    pub ric_vertex: Vec<f64>,
    /// `kappa_e * g_e`.
    pub ric_edge_tensor: Vec<f64>,
    /// `sqrt(w_e) * (ric_j - ric_i)` oriented from the lower vertex id.
    pub grad_ric: Vec<f64>,
}

impl CurvatureField {
    /// The all-zero field on a graph, as for a flat metric.
    pub fn zeros(graph: &ParameterGraph) -> Self {
        CurvatureField {
            kappa: vec![0.0; graph.edge_count()],
            ric_vertex: vec![0.0; graph.vertex_count()],
            ric_edge_tensor: vec![0.0; graph.edge_count()],
            grad_ric: vec![0.0; graph.edge_count()],
        }
    }

    /// Builds the derived fields from edge curvatures.
    pub fn from_kappa(graph: &ParameterGraph, metric: &MetricState, kappa: Vec<f64>) -> Self {
        let ric_vertex: Vec<f64> = (0..graph.vertex_count())
            .map(|i| {
                let (num, den) = graph
                    .neighbors(i)
                    .iter()
                    .fold((0.0, 0.0), |(n, d), &(_, e)| {
                        let w = metric.weight(e);
                        (n + w * kappa[e], d + w)
                    });
                if den > 0.0 {
                    num / den
                } else {
                    0.0
                }
            })
            .collect();
        let ric_edge_tensor = kappa.iter().zip(metric.g()).map(|(k, g)| k * g).collect();
        let grad_ric = graph_gradient(graph, metric, &ric_vertex);
        CurvatureField {
            kappa,
            ric_vertex,
            ric_edge_tensor,
            grad_ric,
        }
    }

    /// `sum_i ric_i^2 vol_i`, the discrete `∫ |Ric|^2 dV`.
    pub fn ric_energy(&self, graph: &ParameterGraph, metric: &MetricState) -> f64 {
        (0..graph.vertex_count())
            .map(|i| self.ric_vertex[i] * self.ric_vertex[i] * metric.volume(graph, i))
            .sum()
    }
}

struct EdgeScratch {
    dijkstra: DijkstraScratch,
    row: Vec<f64>,
}

impl EdgeScratch {
    fn new() -> Self {
        EdgeScratch {
            dijkstra: DijkstraScratch::new(),
            row: Vec::new(),
        }
    }
}

/// Ollivier-Ricci curvature of edge `e`.
pub fn edge_curvature(
    graph: &ParameterGraph,
    metric: &MetricState,
    e: usize,
    cfg: &CurvatureConfig,
) -> Result<f64> {
    edge_curvature_with(graph, metric, e, cfg, &mut EdgeScratch::new())
}

fn edge_curvature_with(
    graph: &ParameterGraph,
    metric: &MetricState,
    e: usize,
    cfg: &CurvatureConfig,
    scratch: &mut EdgeScratch,
) -> Result<f64> {
    let (i, j) = graph.edge(e);
    let mode = cfg.distance;
    let len_ij = mode.edge_length(metric, e);
    if !(len_ij > 0.0) {
        return Err(Error::DegenerateEdge { edge: e, i, j });
    }
    let mu = vertex_measure(graph, metric, i, cfg.alpha)?;
    let nu = vertex_measure(graph, metric, j, cfg.alpha)?;

    // Every source x in supp(mu) reaches every target y in supp(nu) within
    // l(x, i) + l(i, j) + max_y l(j, y), so bounded searches are exact.
    let hop_from = |center: usize, v: usize| -> f64 {
        if v == center {
            0.0
        } else {
            let edge = graph
                .edge_between(center, v)
                .expect("support vertex is a neighbor");
            mode.edge_length(metric, edge)
        }
    };
    let reach_j = nu
        .support
        .iter()
        .map(|&y| hop_from(j, y))
        .fold(0.0, f64::max);

    let mut targets = nu.support.clone();
    targets.push(j);
    let (n, m) = (mu.support.len(), nu.support.len());
    let mut cost = vec![0.0; n * m];
    let mut d_ij = f64::INFINITY;
    scratch.row.resize(m + 1, 0.0);
    let mut source_i_seen = false;
    for (a, &x) in mu.support.iter().enumerate() {
        let radius = hop_from(i, x) + len_ij + reach_j;
        scratch
            .dijkstra
            .distances_to(graph, metric, mode, x, &targets, radius, &mut scratch.row);
        cost[a * m..(a + 1) * m].copy_from_slice(&scratch.row[..m]);
        if x == i {
            d_ij = scratch.row[m];
            source_i_seen = true;
        }
    }
    if !source_i_seen {
        scratch.dijkstra.distances_to(
            graph,
            metric,
            mode,
            i,
            &targets[m..],
            len_ij,
            &mut scratch.row[..1],
        );
        d_ij = scratch.row[0];
    }
    if !(d_ij > 0.0) || !d_ij.is_finite() {
        return Err(Error::DegenerateEdge { edge: e, i, j });
    }
    debug_assert!(cost.iter().all(|c| c.is_finite()));

    let problem = TransportProblem::from_measures(&mu, &nu, cost)?
        .with_relative_epsilon(cfg.relative_epsilon);
    let small = n <= EXACT_SUPPORT_LIMIT && m <= EXACT_SUPPORT_LIMIT;
    let w1 = match cfg.transport {
        TransportMode::Exact if small => exact_w1(&problem)?,
        _ => match sinkhorn_w1(&problem) {
            // badly scaled masses can stall the regularized solve just short
            // of its tolerance; small supports are cheap to solve exactly
            Err(Error::NotConverged { .. }) if small => exact_w1(&problem)?,
            other => other?,
        },
    };
    Ok(1.0 - w1 / d_ij)
}

/// Curvature of every edge plus the derived vertex and gradient fields.
/// Edges touching isolated vertices cannot exist, so every edge is scored.
pub fn curvature_field(
    graph: &ParameterGraph,
    metric: &MetricState,
    cfg: &CurvatureConfig,
) -> Result<CurvatureField> {
    let kappa = map_with_scratch(
        cfg.execution,
        graph.edge_count(),
        EdgeScratch::new,
        |s, e| edge_curvature_with(graph, metric, e, cfg, s),
    )
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(CurvatureField::from_kappa(graph, metric, kappa))
}

/// Exponent of an `L^p` norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormExponent {
    Finite(f64),
    Infinity,
}

impl NormExponent {
    /// `p = max(2, (n + 2) / 2)`.
    pub fn default_for_dim(n: usize) -> Self {
        NormExponent::Finite(f64::max(2.0, (n as f64 + 2.0) / 2.0))
    }
}

/// Derivative order of a curvature norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormOrder {
    /// Vertex curvature weighted by vertex volume.
    Curvature,
    /// Edge curvature gradient weighted by `g_e`.
    Gradient,
}

fn weighted_norm(values: impl Iterator<Item = (f64, f64)>, p: NormExponent) -> f64 {
    match p {
        NormExponent::Infinity => values.map(|(v, _)| v.abs()).fold(0.0, f64::max),
        NormExponent::Finite(p) => {
            let s: f64 = values.map(|(v, w)| v.abs().powf(p) * w).sum();
            s.powf(1.0 / p)
        }
    }
}

/// `L^p` norm of the curvature (order 0) or its edge gradient (order 1).
pub fn curvature_norm(
    graph: &ParameterGraph,
    field: &CurvatureField,
    metric: &MetricState,
    p: NormExponent,
    order: NormOrder,
) -> Result<f64> {
    if let NormExponent::Finite(p) = p {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::invalid(format!(
                "norm exponent must be >= 1, got {p}"
            )));
        }
    }
    Ok(match order {
        NormOrder::Curvature => weighted_norm(
            (0..graph.vertex_count()).map(|i| (field.ric_vertex[i], metric.volume(graph, i))),
            p,
        ),
        NormOrder::Gradient => weighted_norm(
            field
                .grad_ric
                .iter()
                .copied()
                .zip(metric.g().iter().copied()),
            p,
        ),
    })
}

/// `(∇f)_e = sqrt(w_e) (f_j - f_i)` for edge `e = (i, j)`, `i < j`.
pub fn graph_gradient(graph: &ParameterGraph, metric: &MetricState, f: &[f64]) -> Vec<f64> {
    graph
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| metric.weight(e).sqrt() * (f[j] - f[i]))
        .collect()
}

/// `Δf(i) = sum_{j ~ i} w_ij (f_j - f_i)`.
pub fn graph_laplacian(graph: &ParameterGraph, metric: &MetricState, f: &[f64]) -> Vec<f64> {
    (0..graph.vertex_count())
        .map(|i| {
            graph
                .neighbors(i)
                .iter()
                .map(|&(j, e)| metric.weight(e) * (f[j] - f[i]))
                .sum()
        })
        .collect()
}

/// Which curvature factor multiplies `|∇f|^2` in the Bochner decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurvatureTerm {
    /// `Ric(i) |∇f|^2(i)`.
    #[default]
    Vertex,
    /// `1/2 sum_j w_ij (Ric(i) + Ric(j)) (f_j - f_i)^2`.
    EdgeAveraged,
}

/// Per-vertex terms of the discrete Bochner decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BochnerTerms {
    pub gamma2: f64,
    pub hessian_sq: f64,
    pub curvature_term: f64,
    pub residual: f64,
}

/// Splits `1/2 Δ|∇f|^2 - <∇f, ∇Δf>` into a Hessian part, a curvature part
/// and the residual left over.
///
/// The Hessian uses per-vertex gradient vectors indexed by vertex id:
/// component `k` of `∇f_i` is `sqrt(w_ik) (f_k - f_i)` for `k ~ i` and zero
/// otherwise. Two such vectors are compared componentwise, so incident edges
/// are paired through their shared far endpoint, and
/// `|∇²f|²(i) = 1/2 sum_{j ~ i} w_ij |∇f_j - ∇f_i|^2`.
pub fn bochner_decomposition(
    graph: &ParameterGraph,
    metric: &MetricState,
    f: &[f64],
    field: &CurvatureField,
    term: CurvatureTerm,
    exec: Execution,
) -> Vec<BochnerTerms> {
    let n = graph.vertex_count();
    let grad_sq: Vec<f64> = (0..n)
        .map(|i| {
            graph
                .neighbors(i)
                .iter()
                .map(|&(j, e)| metric.weight(e) * (f[j] - f[i]).powi(2))
                .sum()
        })
        .collect();
    let lap = graph_laplacian(graph, metric, f);
    let lap_grad_sq = graph_laplacian(graph, metric, &grad_sq);

    // squared distance between the vertex gradient vectors of i and j
    let grad_vec_dist_sq = |i: usize, j: usize| -> f64 {
        let (ni, nj) = (graph.neighbors(i), graph.neighbors(j));
        let comp = |k: usize, f_center: f64, w: f64| w.sqrt() * (f[k] - f_center);
        let (mut a, mut b, mut acc) = (0, 0, 0.0);
        while a < ni.len() || b < nj.len() {
            let ka = ni.get(a).map_or(usize::MAX, |x| x.0);
            let kb = nj.get(b).map_or(usize::MAX, |x| x.0);
            let (va, vb) = if ka == kb {
                let v = (
                    comp(ka, f[i], metric.weight(ni[a].1)),
                    comp(kb, f[j], metric.weight(nj[b].1)),
                );
                a += 1;
                b += 1;
                v
            } else if ka < kb {
                a += 1;
                (comp(ka, f[i], metric.weight(ni[a - 1].1)), 0.0)
            } else {
                b += 1;
                (0.0, comp(kb, f[j], metric.weight(nj[b - 1].1)))
            };
            acc += (vb - va) * (vb - va);
        }
        acc
    };

    map_indexed(exec, n, |i| {
        let mut inner = 0.0;
        let mut hess = 0.0;
        let mut avg_curv = 0.0;
        for &(j, e) in graph.neighbors(i) {
            let w = metric.weight(e);
            let df = f[j] - f[i];
            inner += w * df * (lap[j] - lap[i]);
            hess += 0.5 * w * grad_vec_dist_sq(i, j);
            avg_curv += 0.5 * w * (field.ric_vertex[i] + field.ric_vertex[j]) * df * df;
        }
        let gamma2 = 0.5 * lap_grad_sq[i] - inner;
        let curvature_term = match term {
            CurvatureTerm::Vertex => field.ric_vertex[i] * grad_sq[i],
            CurvatureTerm::EdgeAveraged => avg_curv,
        };
        BochnerTerms {
            gamma2,
            hessian_sq: hess,
            curvature_term,
            residual: gamma2 - hess - curvature_term,
        }
    })
}

/// CSV dump of an edge field: `edge_i,edge_j,g,w,kappa,grad_ric`.
pub fn curvature_csv(
    graph: &ParameterGraph,
    metric: &MetricState,
    field: &CurvatureField,
) -> String {
    let mut out = String::from("edge_i,edge_j,g,w,kappa,grad_ric\n");
    for (e, &(i, j)) in graph.edges().iter().enumerate() {
        out.push_str(&format!(
            "{i},{j},{:?},{:?},{:?},{:?}\n",
            metric.g()[e],
            metric.weight(e),
            field.kappa[e],
            field.grad_ric[e]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit(graph: &ParameterGraph) -> MetricState {
        MetricState::uniform(graph.edge_count(), 1.0, 1e-6).unwrap()
    }

    fn k(n: usize) -> ParameterGraph {
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        ParameterGraph::from_edges(n, &edges).unwrap()
    }

    fn cycle(n: usize) -> ParameterGraph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        ParameterGraph::from_edges(n, &edges).unwrap()
    }

    fn exact(alpha: f64) -> CurvatureConfig {
        CurvatureConfig::default()
            .with_alpha(alpha)
            .with_transport(TransportMode::Exact)
    }

    #[test]
    fn k2_is_flat_at_half_idleness() {
        let g = k(2);
        let m = unit(&g);
        assert_relative_eq!(
            edge_curvature(&g, &m, 0, &exact(0.5)).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let f = curvature_field(&g, &m, &CurvatureConfig::default()).unwrap();
        assert_relative_eq!(f.ric_vertex[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(f.ric_vertex[1], 1.0, epsilon = 1e-9);
        assert_eq!(f.grad_ric, vec![0.0]);
    }

    #[test]
    fn k3_no_idleness() {
        let g = k(3);
        let m = unit(&g);
        for e in 0..3 {
            assert_relative_eq!(
                edge_curvature(&g, &m, e, &exact(0.0)).unwrap(),
                0.5,
                epsilon = 1e-12
            );
        }
        let f = curvature_field(&g, &m, &exact(0.0)).unwrap();
        for r in &f.ric_vertex {
            assert_relative_eq!(*r, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn long_path_interior_edge_fixture() {
        // interior edge of a unit path, walk without idleness: the measures
        // {i-1: .5, i+1: .5} and {i: .5, i+2: .5} are one unit apart on average
        let edges: Vec<_> = (0..9).map(|i| (i, i + 1)).collect();
        let g = ParameterGraph::from_edges(10, &edges).unwrap();
        let m = unit(&g);
        let kappa = edge_curvature(&g, &m, 4, &exact(0.0)).unwrap();
        assert_relative_eq!(kappa, 0.0, epsilon = 1e-12);
        let lazy = edge_curvature(&g, &m, 4, &exact(0.5)).unwrap();
        assert_relative_eq!(lazy, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cycle_has_zero_gradient() {
        let g = cycle(7);
        let m = unit(&g);
        let f = curvature_field(&g, &m, &CurvatureConfig::default()).unwrap();
        for x in &f.grad_ric {
            assert!(x.abs() < 1e-12);
        }
        let p = NormExponent::Finite(2.0);
        assert!(curvature_norm(&g, &f, &m, p, NormOrder::Gradient).unwrap() < 1e-12);
    }

    #[test]
    fn k3_curvature_norm() {
        let g = k(3);
        let m = unit(&g);
        let f = curvature_field(&g, &m, &exact(0.0)).unwrap();
        let n =
            curvature_norm(&g, &f, &m, NormExponent::Finite(2.0), NormOrder::Curvature).unwrap();
        assert_relative_eq!(n, 1.5f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(f.ric_energy(&g, &m), 1.5, epsilon = 1e-12);
        let inf = curvature_norm(&g, &f, &m, NormExponent::Infinity, NormOrder::Curvature).unwrap();
        assert_relative_eq!(inf, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn zero_field_norms() {
        let g = k(4);
        let m = unit(&g);
        let f = CurvatureField::zeros(&g);
        for p in [
            NormExponent::Finite(1.0),
            NormExponent::Finite(3.0),
            NormExponent::Infinity,
        ] {
            for o in [NormOrder::Curvature, NormOrder::Gradient] {
                assert_eq!(curvature_norm(&g, &f, &m, p, o).unwrap(), 0.0);
            }
        }
        assert!(
            curvature_norm(&g, &f, &m, NormExponent::Finite(0.5), NormOrder::Curvature).is_err()
        );
    }

    #[test]
    fn default_exponent() {
        assert_eq!(NormExponent::default_for_dim(1), NormExponent::Finite(2.0));
        assert_eq!(NormExponent::default_for_dim(4), NormExponent::Finite(3.0));
    }

    #[test]
    fn gradient_and_laplacian() {
        let g = k(2);
        let m = unit(&g);
        assert_eq!(graph_gradient(&g, &m, &[0.0, 1.0]), vec![1.0]);
        assert_eq!(graph_gradient(&g, &m, &[2.0, 2.0]), vec![0.0]);
        assert_eq!(graph_laplacian(&g, &m, &[0.0, 1.0]), vec![1.0, -1.0]);

        let m4 = MetricState::uniform(1, 0.25, 1e-6).unwrap();
        assert_relative_eq!(
            graph_gradient(&g, &m4, &[1.0, 4.0])[0],
            6.0,
            epsilon = 1e-15
        );

        let star = ParameterGraph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let lap = graph_laplacian(&star, &unit(&star), &[0.0, 1.0, 1.0, 1.0]);
        assert_eq!(lap[0], 3.0);
    }

    #[test]
    fn bochner_k2() {
        let g = k(2);
        let m = unit(&g);
        let field = curvature_field(&g, &m, &exact(0.5)).unwrap();
        let terms = bochner_decomposition(
            &g,
            &m,
            &[0.0, 1.0],
            &field,
            CurvatureTerm::Vertex,
            Execution::Serial,
        );
        assert_relative_eq!(terms[0].gamma2, 2.0, epsilon = 1e-12);
        assert_relative_eq!(terms[1].gamma2, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn bochner_constant_is_zero() {
        let g = k(5);
        let m = unit(&g);
        let field = curvature_field(&g, &m, &CurvatureConfig::default()).unwrap();
        for t in bochner_decomposition(
            &g,
            &m,
            &[3.0; 5],
            &field,
            CurvatureTerm::EdgeAveraged,
            Execution::Serial,
        ) {
            assert_eq!(
                (t.gamma2, t.hessian_sq, t.curvature_term, t.residual),
                (0.0, 0.0, 0.0, 0.0)
            );
        }
    }

    #[test]
    fn degenerate_edge_is_reported() {
        // hop mode never degenerates, so fake a zero-length edge through a
        // metric that rounds its length to zero
        let g = k(2);
        let m = MetricState::from_raw(vec![0.0], 1e-6);
        match edge_curvature(&g, &m, 0, &CurvatureConfig::default()) {
            Err(Error::DegenerateEdge { edge: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_dump_columns() {
        let g = k(2);
        let m = unit(&g);
        let f = curvature_field(&g, &m, &exact(0.5)).unwrap();
        let csv = curvature_csv(&g, &m, &f);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("edge_i,edge_j,g,w,kappa,grad_ric"));
        assert!(lines.next().unwrap().starts_with("0,1,1.0,1.0,1.0,"));
    }
}
