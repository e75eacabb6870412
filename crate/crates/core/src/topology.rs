//! Graph Betti numbers, the curvature bound on their sum, and the
//! simplification rate.
//!
//! Graphs are 1-complexes, so only `b0` and `b1` can be nonzero. Besides the
//! raw graph topology this module supports an *effective* topology in which
//! edges stretched far beyond the typical edge length count as pinched off.

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::curvature::CurvatureField;
use crate::error::{Error, Result};
use crate::graph::{MetricState, ParameterGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologySnapshot {
    pub b0: usize,
    pub b1: usize,
    pub euler: i64,
    pub betti_sum: usize,
    /// Right side of the curvature bound, once evaluated.
    pub bound_rhs: Option<f64>,
    pub bound_satisfied: Option<bool>,
}

impl TopologySnapshot {
    fn from_counts(vertices: usize, edges: usize, b0: usize) -> Self {
        let b1 = edges + b0 - vertices;
        TopologySnapshot {
            b0,
            b1,
            euler: vertices as i64 - edges as i64,
            betti_sum: b0 + b1,
            bound_rhs: None,
            bound_satisfied: None,
        }
    }
}

/// Betti numbers of the whole graph.
pub fn betti(graph: &ParameterGraph) -> TopologySnapshot {
    betti_masked(graph, &vec![true; graph.edge_count()])
}

/// Betti numbers of the subgraph keeping every vertex and only the edges
/// with `keep[e]`.
pub fn betti_masked(graph: &ParameterGraph, keep: &[bool]) -> TopologySnapshot {
    assert_eq!(keep.len(), graph.edge_count(), "edge mask length mismatch");
    let n = graph.vertex_count();
    let mut uf = UnionFind::<usize>::new(n);
    let mut components = n;
    let mut kept = 0;
    for (&(i, j), _) in graph.edges().iter().zip(keep).filter(|(_, &k)| k) {
        kept += 1;
        if uf.union(i, j) {
            components -= 1;
        }
    }
    TopologySnapshot::from_counts(n, kept, components)
}

/// Marks edges that are still attached in the effective topology: an edge
/// is pinched off when `g_e` exceeds `pinch_ratio` times the median metric
/// component. The rule is invariant under uniform rescaling of the metric.
pub fn effective_mask(metric: &MetricState, pinch_ratio: f64) -> Vec<bool> {
    let g = metric.g();
    if g.is_empty() {
        return Vec::new();
    }
    let mut sorted = g.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let cut = pinch_ratio * median;
    g.iter().map(|&x| x <= cut).collect()
}

/// Evaluates `1/2 sum_i ric_i^2 vol_i + chi_0` and compares it with the
/// Betti sum of `current`. The comparison is only reported.
pub fn betti_bound(
    snapshot0: &TopologySnapshot,
    current: &TopologySnapshot,
    field: &CurvatureField,
    metric: &MetricState,
    graph: &ParameterGraph,
) -> TopologySnapshot {
    let rhs = 0.5 * field.ric_energy(graph, metric) + snapshot0.euler as f64;
    TopologySnapshot {
        bound_rhs: Some(rhs),
        bound_satisfied: Some(current.betti_sum as f64 <= rhs),
        ..*current
    }
}

/// `(sum_0 - sum_t) / sum_0`.
pub fn simplification_rate(
    snapshot0: &TopologySnapshot,
    snapshot_t: &TopologySnapshot,
) -> Result<f64> {
    if snapshot0.betti_sum == 0 {
        return Err(Error::UndefinedRate);
    }
    let s0 = snapshot0.betti_sum as f64;
    Ok((s0 - snapshot_t.betti_sum as f64) / s0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn g(n: usize, edges: &[(usize, usize)]) -> ParameterGraph {
        ParameterGraph::from_edges(n, edges).unwrap()
    }

    #[test]
    fn small_examples() {
        let c4 = betti(&g(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]));
        assert_eq!((c4.b0, c4.b1, c4.euler), (1, 1, 0));
        let tree = betti(&g(5, &[(0, 1), (1, 2), (1, 3), (3, 4)]));
        assert_eq!((tree.b0, tree.b1), (1, 0));
        let two = betti(&g(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]));
        assert_eq!((two.b0, two.b1, two.betti_sum), (2, 2, 4));
        let empty = betti(&g(3, &[]));
        assert_eq!((empty.b0, empty.b1), (3, 0));
    }

    #[test]
    fn bound_on_k3() {
        let k3 = g(3, &[(0, 1), (1, 2), (0, 2)]);
        let m = MetricState::uniform(3, 1.0, 1e-6).unwrap();
        let field = CurvatureField::from_kappa(&k3, &m, vec![0.5; 3]);
        let s = betti(&k3);
        let zero = TopologySnapshot { euler: 0, ..s };
        let out = betti_bound(&zero, &s, &field, &m, &k3);
        assert_relative_eq!(out.bound_rhs.unwrap(), 0.75, epsilon = 1e-15);
        assert_eq!(out.bound_satisfied, Some(false));

        let tree = g(3, &[(0, 1), (1, 2)]);
        let m = MetricState::uniform(2, 1.0, 1e-6).unwrap();
        let s = betti(&tree);
        let out = betti_bound(&s, &s, &CurvatureField::zeros(&tree), &m, &tree);
        assert_eq!(out.bound_rhs, Some(1.0));
        assert_eq!(out.bound_satisfied, Some(true));
    }

    #[test]
    fn rates() {
        let s = |sum| TopologySnapshot {
            b0: 1,
            b1: sum - 1,
            euler: 2 - sum as i64,
            betti_sum: sum,
            bound_rhs: None,
            bound_satisfied: None,
        };
        assert_eq!(simplification_rate(&s(8), &s(8)).unwrap(), 0.0);
        assert_eq!(simplification_rate(&s(8), &s(3)).unwrap(), 0.625);
        assert!(simplification_rate(&s(2), &s(5)).unwrap() < 0.0);
        let zero = TopologySnapshot {
            b0: 0,
            b1: 0,
            euler: 0,
            betti_sum: 0,
            bound_rhs: None,
            bound_satisfied: None,
        };
        assert!(matches!(
            simplification_rate(&zero, &s(1)),
            Err(Error::UndefinedRate)
        ));
    }

    #[test]
    fn effective_mask_cuts_stretched_edges() {
        let m = MetricState::new(vec![2.0, 2.0, 2.0, 40.0], 1e-6).unwrap();
        assert_eq!(effective_mask(&m, 4.0), vec![true, true, true, false]);
        let scaled = MetricState::new(vec![0.2, 0.2, 0.2, 4.0], 1e-6).unwrap();
        assert_eq!(effective_mask(&scaled, 4.0), effective_mask(&m, 4.0));
        let m = MetricState::uniform(4, 100.0, 1e-6).unwrap();
        assert!(effective_mask(&m, 4.0).iter().all(|&k| k));
    }
}
