//! Side-by-side runs of the geometric optimizer and its ablations.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::report::{run_benchmark, RunReport};
use crate::harness::spec::{baseline_eta, BenchmarkSpec};
use crate::optimizer::{lipschitz_warmup, LrPolicy, RunStatus};
use crate::par::map_indexed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Geometric,
    /// Gradient descent at `2 / (C_2 L)` with no curvature machinery.
    PlainGd,
    /// Geometric optimizer with `beta = 0`.
    DecoupledFlow,
    /// Geometric optimizer held at the plain-gd step size.
    FixedLrGeometric,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Geometric,
        Method::PlainGd,
        Method::DecoupledFlow,
        Method::FixedLrGeometric,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Geometric => "geometric",
            Method::PlainGd => "plain-gd",
            Method::DecoupledFlow => "decoupled-flow",
            Method::FixedLrGeometric => "fixed-lr-geometric",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }

    /// The spec this method runs, given the baseline step size.
    pub fn configure(self, spec: &BenchmarkSpec, eta0: f64) -> BenchmarkSpec {
        let mut s = spec.clone();
        s.name = format!("{}-{}", spec.name, self.name());
        match self {
            Method::Geometric => {}
            Method::PlainGd => {
                s.optimizer.geometric = false;
                s.optimizer.lr = LrPolicy::Fixed(eta0);
            }
            Method::DecoupledFlow => s.optimizer.flow.beta = 0.0,
            Method::FixedLrGeometric => s.optimizer.lr = LrPolicy::Fixed(eta0),
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub status: RunStatus,
    pub steps: usize,
    pub converged: bool,
    pub final_loss: f64,
    pub final_lyapunov: f64,
    /// Plain-gd steps divided by this method's steps, when both converged.
    pub speedup: Option<f64>,
    pub first_eta: Option<f64>,
    pub last_eta: Option<f64>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub benchmark: String,
    /// Step size shared by plain-gd and the fixed-rate geometric run.
    pub eta0: f64,
    pub rows: Vec<ComparisonRow>,
    /// Published speedup for reference; not a target of any check.
    pub reference_speedup: f64,
}

impl Comparison {
    pub fn row(&self, method: Method) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| format!("{v:?}")).unwrap_or_default();
        let mut out = String::from(
            "method,status,steps,converged,final_loss,speedup,first_eta,last_eta,wall_time\n",
        );
        for r in &self.rows {
            let status = match &r.status {
                RunStatus::Converged => "converged",
                RunStatus::Budget => "budget",
                RunStatus::Diverged(_) => "diverged",
            };
            out.push_str(&format!(
                "{},{status},{},{},{:?},{},{},{},{:.6}\n",
                r.method.name(),
                r.steps,
                r.converged,
                r.final_loss,
                opt(r.speedup),
                opt(r.first_eta),
                opt(r.last_eta),
                r.wall_time
            ));
        }
        out
    }
}

/// Runs `spec` under each method. Plain-gd is always included since every
/// speedup is measured against it. Independent runs are spread over the pool
/// in parallel mode.
pub fn compare_baselines(spec: &BenchmarkSpec, methods: &[Method]) -> Result<Comparison> {
    spec.validate()?;
    let graph = spec.build_graph()?;
    let theta0 = spec.build_theta0(&graph);
    let loss = spec.build_loss(graph.vertex_count())?;
    let l_lip = lipschitz_warmup(loss.as_ref(), &theta0, spec.optimizer.lipschitz_probes);
    let eta0 = baseline_eta(l_lip).min(spec.optimizer.eta_max);

    let mut list: Vec<Method> = Vec::new();
    for &m in std::iter::once(&Method::PlainGd).chain(methods) {
        if !list.contains(&m) {
            list.push(m);
        }
    }
    let exec = spec.optimizer.flow.curvature.execution;
    let reports: Vec<Result<RunReport>> = map_indexed(exec, list.len(), |k| {
        run_benchmark(&list[k].configure(spec, eta0))
    });
    let reports: Vec<RunReport> = reports.into_iter().collect::<Result<_>>()?;

    let base = reports[0].converged().then_some(reports[0].steps);
    let mut rows: Vec<ComparisonRow> = list
        .iter()
        .zip(&reports)
        .map(|(&method, r)| ComparisonRow {
            method,
            status: r.status.clone(),
            steps: r.steps,
            converged: r.converged(),
            final_loss: r.final_loss,
            final_lyapunov: r.final_lyapunov,
            speedup: match base {
                Some(b) if r.converged() => Some(b as f64 / r.steps.max(1) as f64),
                _ => None,
            },
            first_eta: r.rows.get(1).and_then(|x| x.eta),
            last_eta: r.rows.last().and_then(|x| x.eta),
            wall_time: r.total_wall_time(),
        })
        .collect();
    // report in the caller's order, plain-gd last unless requested
    let order = |m: Method| methods.iter().position(|&x| x == m).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| order(r.method));
    Ok(Comparison {
        benchmark: spec.name.clone(),
        eta0,
        rows,
        reference_speedup: 2.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::spec::{GraphSource, LossKind};
    use crate::Execution;

    #[test]
    fn method_against_itself_has_unit_speedup() {
        let mut s = BenchmarkSpec::q1().with_execution(Execution::Serial);
        s.graph = GraphSource::Cycle { n: 8 };
        s.loss = LossKind::Quadratic { condition: 4.0 };
        s.eps = 1e-6;
        let c = compare_baselines(&s, &[Method::PlainGd]).unwrap();
        assert_eq!(c.rows.len(), 1);
        assert!(c.rows[0].converged);
        assert_eq!(c.rows[0].speedup, Some(1.0));
        assert_eq!(c.csv().lines().count(), 2);
    }

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()), Some(m));
        }
        assert_eq!(Method::parse("adam"), None);
    }
}
