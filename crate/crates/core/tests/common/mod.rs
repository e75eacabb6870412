//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use curvflow::curvature::{curvature_field, CurvatureConfig, CurvatureTerm};
use curvflow::graph::{MetricState, ParameterGraph};
use curvflow::surgery::{apply, SurgeryConfig, SurgeryKind};
use curvflow::transport::TransportProblem;
use curvflow::Execution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn random_simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Two point clouds in the unit square with Euclidean ground cost.
pub fn random_transport_problem<R: Rng>(rng: &mut R, n: usize, m: usize) -> TransportProblem {
    let a: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
    let b: Vec<(f64, f64)> = (0..m).map(|_| (rng.gen(), rng.gen())).collect();
    let cost = a
        .iter()
        .flat_map(|p| {
            b.iter()
                .map(move |q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt())
        })
        .collect();
    TransportProblem::new(random_simplex(rng, n), random_simplex(rng, m), cost).unwrap()
}

/// Betti numbers from the rank of the vertex-edge incidence matrix over
/// GF(2): `b0 = |V| - rank`, `b1 = |E| - rank`.
pub fn gf2_betti(n: usize, edges: &[(usize, usize)]) -> (usize, usize) {
    let words = n.div_ceil(64).max(1);
    let mut rows: Vec<Vec<u64>> = edges
        .iter()
        .map(|&(i, j)| {
            let mut r = vec![0u64; words];
            r[i / 64] ^= 1 << (i % 64);
            r[j / 64] ^= 1 << (j % 64);
            r
        })
        .collect();
    let mut rank = 0;
    for col in 0..n {
        let (w, bit) = (col / 64, 1u64 << (col % 64));
        let Some(p) = (rank..rows.len()).find(|&r| rows[r][w] & bit != 0) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[w] & bit != 0 {
                row.iter_mut().zip(&pivot).for_each(|(x, y)| *x ^= y);
            }
        }
        rank += 1;
    }
    (n - rank, edges.len() - rank)
}

/// Random simple graph on `n` vertices with each pair present with
/// probability `p`.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Ring plus random chords: connected, no isolated vertices.
pub fn random_connected<R: Rng>(rng: &mut R, n: usize, chords: usize) -> ParameterGraph {
    let mut edges: Vec<(usize, usize)> = (0..n)
        .map(|i| (i.min((i + 1) % n), i.max((i + 1) % n)))
        .collect();
    for _ in 0..chords {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let e = (a.min(b), a.max(b));
        if a != b && !edges.contains(&e) {
            edges.push(e);
        }
    }
    ParameterGraph::from_edges(n, &edges).unwrap()
}

/// Dense-matrix evaluation of `(gamma2, |Hess f|^2, curvature term)` per
/// vertex.
pub fn bochner_oracle(
    graph: &ParameterGraph,
    metric: &MetricState,
    f: &[f64],
    ric: &[f64],
    term: CurvatureTerm,
) -> Vec<(f64, f64, f64)> {
    let n = graph.vertex_count();
    let mut w = vec![vec![0.0; n]; n];
    for (e, &(i, j)) in graph.edges().iter().enumerate() {
        w[i][j] = metric.weight(e);
        w[j][i] = metric.weight(e);
    }
    let lap = |h: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| w[i][j] * (h[j] - h[i])).sum())
            .collect()
    };
    let grad_sq: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| w[i][j] * (f[j] - f[i]).powi(2)).sum())
        .collect();
    let lf = lap(f);
    let lg = lap(&grad_sq);
    // vertex gradient vectors, one coordinate per vertex
    let gv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|k| w[i][k].sqrt() * (f[k] - f[i])).collect())
        .collect();
    (0..n)
        .map(|i| {
            let cross: f64 = (0..n)
                .map(|j| w[i][j] * (f[j] - f[i]) * (lf[j] - lf[i]))
                .sum();
            let gamma2 = 0.5 * lg[i] - cross;
            let hess: f64 = (0..n)
                .map(|j| {
                    let d: f64 = (0..n).map(|k| (gv[j][k] - gv[i][k]).powi(2)).sum();
                    0.5 * w[i][j] * d
                })
                .sum();
            let curv = match term {
                CurvatureTerm::Vertex => ric[i] * grad_sq[i],
                CurvatureTerm::EdgeAveraged => (0..n)
                    .map(|j| 0.5 * w[i][j] * (ric[i] + ric[j]) * (f[j] - f[i]).powi(2))
                    .sum(),
            };
            (gamma2, hess, curv)
        })
        .collect()
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct FuzzSummary {
    pub neckpinch: usize,
    pub collapse: usize,
    pub conical: usize,
    pub quiet: usize,
    /// Final metric of every iteration, for reproducibility checks.
    pub fingerprint: Vec<u64>,
}

/// Seeded detect-and-apply fuzzing. Returns the first violated invariant.
pub fn surgery_fuzz(iterations: usize, seed: u64) -> Result<FuzzSummary, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg_curv = CurvatureConfig::default().with_execution(Execution::Serial);
    let mut summary = FuzzSummary::default();
    for it in 0..iterations {
        let n = rng.gen_range(3..=9);
        let chords = rng.gen_range(0..=n);
        let graph = random_connected(&mut rng, n, chords);
        let floor = 10f64.powf(rng.gen_range(-6.0..-2.0));
        // a per-iteration lower end lets every surgery branch trigger
        let lo = rng.gen_range(-3.0..0.5);
        let g: Vec<f64> = (0..graph.edge_count())
            .map(|_| 10f64.powf(rng.gen_range(lo..1.5)).max(floor))
            .collect();
        let metric = MetricState::new(g, floor).map_err(|e| e.to_string())?;
        let field = curvature_field(&graph, &metric, &cfg_curv)
            .map_err(|e| format!("iteration {it}: {e}"))?;
        let cfg = SurgeryConfig {
            kappa_thresh: rng.gen_range(0.2..3.0),
            ..SurgeryConfig::default()
        };
        let theta: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let loss = rng.gen_range(0.0..5.0);
        let out = apply(&graph, &metric, &field, &theta, loss, it, &cfg)
            .map_err(|e| format!("iteration {it}: {e}"))?;
        let Some((g2, m2, ev)) = out else {
            summary.quiet += 1;
            summary.fingerprint.push(0);
            continue;
        };
        match ev.kind {
            SurgeryKind::Neckpinch => summary.neckpinch += 1,
            SurgeryKind::Collapse => summary.collapse += 1,
            SurgeryKind::Conical => summary.conical += 1,
        }
        if g2.vertex_count() != graph.vertex_count() {
            return Err(format!("iteration {it}: vertex count changed"));
        }
        if g2.edge_count() < graph.edge_count()
            || g2.edges()[..graph.edge_count()] != *graph.edges()
        {
            return Err(format!(
                "iteration {it}: an original edge was removed or reordered"
            ));
        }
        if ev.kind != SurgeryKind::Neckpinch && g2.edge_count() != graph.edge_count() {
            return Err(format!(
                "iteration {it}: {:?} changed the edge set",
                ev.kind
            ));
        }
        if m2.len() != g2.edge_count() {
            return Err(format!("iteration {it}: metric and edge counts disagree"));
        }
        if let Some(x) = m2.g().iter().find(|&&x| !(x >= floor) || !x.is_finite()) {
            return Err(format!(
                "iteration {it}: metric component {x} below floor {floor}"
            ));
        }
        let fp = m2.g().iter().fold(0xcbf2_9ce4_8422_2325u64, |h, x| {
            (h ^ x.to_bits()).wrapping_mul(0x100_0000_01b3)
        });
        summary.fingerprint.push(fp);
    }
    Ok(summary)
}
