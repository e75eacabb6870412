//! Wasserstein-1 distances between discrete measures.
//!
//! [`sinkhorn_w1`] solves the entropically regularized problem with
//! log-domain updates and epsilon annealing; [`exact_w1`] solves the
//! transportation linear program exactly by successive shortest paths and
//! is used as the oracle on small supports.

use crate::error::{Error, Result};
use crate::graph::VertexMeasure;

/// Largest support the exact solver accepts.
pub const EXACT_SUPPORT_LIMIT: usize = 16;

/// Default regularization relative to the largest ground cost.
pub const DEFAULT_RELATIVE_EPSILON: f64 = 0.01;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_TOL: f64 = 1e-9;

const MASS_TOL: f64 = 1e-9;

/// A balanced transport problem between two discrete probability measures.
///
/// `cost` is row-major with `mu.len()` rows and `nu.len()` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportProblem {
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub cost: Vec<f64>,
    pub epsilon: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl TransportProblem {
    /// Validates the marginals and cost matrix and fills in the default
    /// solver settings (`epsilon = 0.01 * max cost`).
    pub fn new(mu: Vec<f64>, nu: Vec<f64>, cost: Vec<f64>) -> Result<Self> {
        if mu.is_empty() || nu.is_empty() {
            return Err(Error::invalid("transport marginals must be nonempty"));
        }
        if cost.len() != mu.len() * nu.len() {
            return Err(Error::invalid(format!(
                "cost matrix has {} entries, expected {}x{}",
                cost.len(),
                mu.len(),
                nu.len()
            )));
        }
        for (name, m) in [("mu", &mu), ("nu", &nu)] {
            if m.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                return Err(Error::invalid(format!(
                    "{name} has a negative or non-finite mass"
                )));
            }
            let total: f64 = m.iter().sum();
            if (total - 1.0).abs() > MASS_TOL {
                return Err(Error::invalid(format!(
                    "{name} sums to {total}, expected 1"
                )));
            }
        }
        if cost.iter().any(|&c| !(c >= 0.0 && c.is_finite())) {
            return Err(Error::invalid(
                "cost entries must be finite and nonnegative",
            ));
        }
        let max = cost.iter().copied().fold(0.0, f64::max);
        let epsilon = if max > 0.0 {
            DEFAULT_RELATIVE_EPSILON * max
        } else {
            1.0
        };
        Ok(TransportProblem {
            mu,
            nu,
            cost,
            epsilon,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        })
    }

    pub fn from_measures(mu: &VertexMeasure, nu: &VertexMeasure, cost: Vec<f64>) -> Result<Self> {
        Self::new(mu.mass.clone(), nu.mass.clone(), cost)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// Sets `epsilon = relative * max cost`.
    pub fn with_relative_epsilon(mut self, relative: f64) -> Self {
        let max = self.max_cost();
        self.epsilon = if max > 0.0 { relative * max } else { relative };
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn rows(&self) -> usize {
        self.mu.len()
    }

    pub fn cols(&self) -> usize {
        self.nu.len()
    }

    pub fn cost_at(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.nu.len() + j]
    }

    pub fn max_cost(&self) -> f64 {
        self.cost.iter().copied().fold(0.0, f64::max)
    }

    /// The same problem with the marginals swapped and the cost transposed.
    pub fn transposed(&self) -> Self {
        let (n, m) = (self.rows(), self.cols());
        let mut cost = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                cost[j * n + i] = self.cost[i * m + j];
            }
        }
        TransportProblem {
            mu: self.nu.clone(),
            nu: self.mu.clone(),
            cost,
            ..self.clone()
        }
    }

    /// Total cost of a row-major plan.
    pub fn plan_cost(&self, plan: &[f64]) -> f64 {
        plan.iter().zip(&self.cost).map(|(p, c)| p * c).sum()
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Positive-mass rows and columns of a problem.
struct Reduced {
    rows: Vec<usize>,
    cols: Vec<usize>,
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    a: Vec<f64>,
}

impl Reduced {
    fn new(p: &TransportProblem) -> Self {
        let rows: Vec<usize> = (0..p.rows()).filter(|&i| p.mu[i] > 0.0).collect();
        let cols: Vec<usize> = (0..p.cols()).filter(|&j| p.nu[j] > 0.0).collect();
        Reduced {
            log_a: rows.iter().map(|&i| p.mu[i].ln()).collect(),
            log_b: cols.iter().map(|&j| p.nu[j].ln()).collect(),
            a: rows.iter().map(|&i| p.mu[i]).collect(),
            rows,
            cols,
        }
    }
}

/// Result of a regularized solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornOutcome {
    pub value: f64,
    pub iterations: usize,
    pub violation: f64,
}

/// Entropic transport cost `sum pi_ab * cost_ab` of the converged
/// regularized plan.
pub fn sinkhorn_w1(problem: &TransportProblem) -> Result<f64> {
    sinkhorn_solve(problem).map(|o| o.value)
}

/// Log-domain Sinkhorn with geometric epsilon annealing. Intermediate stages
/// only warm-start the dual potentials; the returned plan is the fixed point
/// at `problem.epsilon`. Convergence is declared when the L1 row marginal
/// violation (columns are exact after each half-step) drops below `tol`.
pub fn sinkhorn_solve(problem: &TransportProblem) -> Result<SinkhornOutcome> {
    if !(problem.epsilon > 0.0 && problem.epsilon.is_finite()) {
        return Err(Error::invalid("epsilon must be positive and finite"));
    }
    if !(problem.tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let red = Reduced::new(problem);
    let (n, m) = (red.rows.len(), red.cols.len());
    let max_cost = problem.max_cost();
    if max_cost == 0.0 {
        return Ok(SinkhornOutcome {
            value: 0.0,
            iterations: 0,
            violation: 0.0,
        });
    }
    if n == 1 || m == 1 {
        // a single row or column admits exactly one feasible plan
        let value = red
            .rows
            .iter()
            .flat_map(|&i| red.cols.iter().map(move |&j| (i, j)))
            .map(|(i, j)| problem.mu[i] * problem.nu[j] * problem.cost_at(i, j))
            .sum();
        return Ok(SinkhornOutcome {
            value,
            iterations: 0,
            violation: 0.0,
        });
    }

    let cost: Vec<f64> = red
        .rows
        .iter()
        .flat_map(|&i| red.cols.iter().map(move |&j| problem.cost_at(i, j)))
        .collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let target = problem.epsilon;
    let mut eps = max_cost.max(target);
    let mut iterations = 0usize;
    let mut violation = f64::INFINITY;

    loop {
        let final_stage = eps <= target;
        let stage_tol = if final_stage { problem.tol } else { 1e-3 };
        let stage_cap = if final_stage { usize::MAX } else { 200 };
        let mut stage_iters = 0;
        loop {
            if iterations >= problem.max_iter {
                return Err(Error::NotConverged {
                    iterations,
                    violation,
                });
            }
            for i in 0..n {
                let row = &cost[i * m..(i + 1) * m];
                let lse = log_sum_exp(row.iter().zip(&g).map(|(c, gj)| (gj - c) / eps));
                f[i] = eps * (red.log_a[i] - lse);
            }
            for j in 0..m {
                let lse = log_sum_exp((0..n).map(|i| (f[i] - cost[i * m + j]) / eps));
                g[j] = eps * (red.log_b[j] - lse);
            }
            iterations += 1;
            stage_iters += 1;
            violation = (0..n)
                .map(|i| {
                    let row = &cost[i * m..(i + 1) * m];
                    let s: f64 = row
                        .iter()
                        .zip(&g)
                        .map(|(c, gj)| ((f[i] + gj - c) / eps).exp())
                        .sum();
                    (s - red.a[i]).abs()
                })
                .sum();
            if !violation.is_finite() {
                return Err(Error::NotConverged {
                    iterations,
                    violation,
                });
            }
            if violation < stage_tol || stage_iters >= stage_cap {
                break;
            }
        }
        if final_stage {
            break;
        }
        eps = (eps * 0.5).max(target);
    }

    let mut value = 0.0;
    for i in 0..n {
        for j in 0..m {
            let c = cost[i * m + j];
            value += ((f[i] + g[j] - c) / eps).exp() * c;
        }
    }
    Ok(SinkhornOutcome {
        value,
        iterations,
        violation,
    })
}

/// Optimal plan and dual certificate from the exact solver.
///
/// The potentials satisfy `u_i + v_j <= cost_ij` with equality on the
/// support of `plan`, so `sum a u + sum b v` equals `cost`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub cost: f64,
    pub plan: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Exact optimal transport cost.
pub fn exact_w1(problem: &TransportProblem) -> Result<f64> {
    exact_transport(problem).map(|s| s.cost)
}

const FLOW_TINY: f64 = 1e-15;

/// Bellman-Ford over the bipartite residual network. Nodes `0..n` are rows
/// and `n..n+m` columns. Returns distances and predecessors.
fn residual_shortest_paths(
    p: &TransportProblem,
    flow: &[f64],
    start: impl Fn(usize) -> bool,
) -> (Vec<f64>, Vec<Option<usize>>) {
    let (n, m) = (p.rows(), p.cols());
    let mut dist = vec![f64::INFINITY; n + m];
    let mut pred = vec![None; n + m];
    for (i, d) in dist.iter_mut().enumerate().take(n) {
        if start(i) {
            *d = 0.0;
        }
    }
    for (k, d) in dist.iter_mut().enumerate().skip(n) {
        if start(k) {
            *d = 0.0;
        }
    }
    for _ in 0..(n + m) {
        let mut changed = false;
        for i in 0..n {
            for j in 0..m {
                let c = p.cost_at(i, j);
                if dist[i].is_finite() && dist[i] + c < dist[n + j] - 1e-15 {
                    dist[n + j] = dist[i] + c;
                    pred[n + j] = Some(i);
                    changed = true;
                }
                if flow[i * m + j] > FLOW_TINY
                    && dist[n + j].is_finite()
                    && dist[n + j] - c < dist[i] - 1e-15
                {
                    dist[i] = dist[n + j] - c;
                    pred[i] = Some(n + j);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (dist, pred)
}

/// Successive shortest augmenting paths on the transportation network.
pub fn exact_transport(problem: &TransportProblem) -> Result<ExactSolution> {
    let (n, m) = (problem.rows(), problem.cols());
    let size = n.max(m);
    if size > EXACT_SUPPORT_LIMIT {
        return Err(Error::SupportTooLarge {
            size,
            limit: EXACT_SUPPORT_LIMIT,
        });
    }
    let mut supply = problem.mu.clone();
    let mut demand = problem.nu.clone();
    let mut flow = vec![0.0; n * m];
    let max_rounds = 4 * (n * m + n + m) + 16;

    for _ in 0..max_rounds {
        if supply.iter().all(|&s| s <= FLOW_TINY) || demand.iter().all(|&d| d <= FLOW_TINY) {
            break;
        }
        let (dist, pred) =
            residual_shortest_paths(problem, &flow, |k| k < n && supply[k] > FLOW_TINY);
        let sink = (0..m)
            .filter(|&j| demand[j] > FLOW_TINY && dist[n + j].is_finite())
            .min_by(|&a, &b| dist[n + a].total_cmp(&dist[n + b]).then(a.cmp(&b)));
        let Some(sink) = sink else { break };

        // walk back to the originating row, collecting the bottleneck
        let mut path = Vec::new();
        let mut node = n + sink;
        let mut amount = demand[sink];
        while let Some(prev) = pred[node] {
            if node < n {
                // residual arc col -> row cancels flow on (node, prev - n)
                amount = amount.min(flow[node * m + (prev - n)]);
            }
            path.push((prev, node));
            node = prev;
            if path.len() > n + m {
                break;
            }
        }
        amount = amount.min(supply[node]);
        for &(from, to) in &path {
            if from < n {
                flow[from * m + (to - n)] += amount;
            } else {
                flow[to * m + (from - n)] -= amount;
            }
        }
        supply[node] -= amount;
        demand[sink] -= amount;
    }

    for x in &mut flow {
        if *x < FLOW_TINY {
            *x = 0.0;
        }
    }
    let cost = problem.plan_cost(&flow);
    let (dist, _) = residual_shortest_paths(problem, &flow, |_| true);
    let u = dist[..n].iter().map(|d| -d).collect();
    let v = dist[n..].to_vec();
    Ok(ExactSolution {
        cost,
        plan: flow,
        u,
        v,
    })
}
