//! Loss-coupled Ricci flow on the per-edge metric.
//!
//! The evolution is
//!
//! ```text
//! d/dt g_e = -2 Ric_e + beta G_e + (1/n) (R - beta Gbar) g_e
//! ```
//!
//! with `Ric_e = kappa_e g_e`, `G_e = w_e (dL_j - dL_i)^2`, `R` the
//! volume-weighted mean vertex curvature and `Gbar` the `g`-weighted mean of
//! `G_e`. After every step the metric is clamped to its positivity floor.

use serde::{Deserialize, Serialize};

use crate::curvature::{
    curvature_field, curvature_norm, CurvatureConfig, CurvatureField, NormExponent, NormOrder,
};
use crate::error::{Error, Result};
use crate::graph::{MetricState, ParameterGraph};
use crate::loss::LossOracle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Thermodynamic coupling between loss gradients and the metric.
    pub beta: f64,
    pub dt: f64,
    pub integrator: Integrator,
    pub g_floor: f64,
    pub steps: usize,
    /// Curvature is recomputed every `reuse_interval` steps of [`evolve`].
    pub reuse_interval: usize,
    pub curvature: CurvatureConfig,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            beta: 0.0,
            dt: 0.01,
            integrator: Integrator::Rk4,
            g_floor: 1e-6,
            steps: 0,
            reuse_interval: 1,
            curvature: CurvatureConfig::default(),
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt must be positive"));
        }
        if !(self.g_floor > 0.0) {
            return Err(Error::invalid("g_floor must be positive"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("beta must be nonnegative"));
        }
        if self.reuse_interval == 0 {
            return Err(Error::invalid("reuse interval must be at least 1"));
        }
        Ok(())
    }
}

/// Volume-weighted mean vertex curvature, the scalar curvature `R`.
pub fn scalar_curvature(
    graph: &ParameterGraph,
    metric: &MetricState,
    field: &CurvatureField,
) -> f64 {
    let (num, den) = (0..graph.vertex_count()).fold((0.0, 0.0), |(n, d), i| {
        let v = metric.volume(graph, i);
        (n + field.ric_vertex[i] * v, d + v)
    });
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Squared discrete loss gradient along each edge, `w_e (dL_j - dL_i)^2`.
pub fn edge_gradient_square(
    graph: &ParameterGraph,
    metric: &MetricState,
    loss_grad: &[f64],
) -> Vec<f64> {
    graph
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| {
            let d = loss_grad[j] - loss_grad[i];
            metric.weight(e) * d * d
        })
        .collect()
}

/// Right-hand side of the coupled flow for every edge.
pub fn flow_rhs(
    graph: &ParameterGraph,
    metric: &MetricState,
    field: &CurvatureField,
    loss_grad: &[f64],
    beta: f64,
) -> Vec<f64> {
    let n = graph.intrinsic_dim() as f64;
    let r = scalar_curvature(graph, metric, field);
    let gsq = edge_gradient_square(graph, metric, loss_grad);
    let g = metric.g();
    let g_total: f64 = g.iter().sum();
    let g_bar = if g_total > 0.0 {
        gsq.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / g_total
    } else {
        0.0
    };
    let trace = (r - beta * g_bar) / n;
    (0..graph.edge_count())
        .map(|e| -2.0 * field.ric_edge_tensor[e] + beta * gsq[e] + trace * g[e])
        .collect()
}

fn check_finite(rhs: &[f64]) -> Result<()> {
    match rhs.iter().position(|x| !x.is_finite()) {
        Some(edge) => Err(Error::Blowup { step: 0, edge }),
        None => Ok(()),
    }
}

/// One integration step. `field` must be the curvature of `metric`; RK4
/// recomputes curvature at each intermediate stage, evaluating it on the
/// stage metric clamped to the floor.
pub fn flow_step_with_field(
    graph: &ParameterGraph,
    metric: &MetricState,
    field: &CurvatureField,
    loss_grad: &[f64],
    cfg: &FlowConfig,
) -> Result<MetricState> {
    let dt = cfg.dt;
    let k1 = flow_rhs(graph, metric, field, loss_grad, cfg.beta);
    check_finite(&k1)?;
    let mut next: Vec<f64> = match cfg.integrator {
        Integrator::Euler => metric
            .g()
            .iter()
            .zip(&k1)
            .map(|(g, k)| g + dt * k)
            .collect(),
        Integrator::Rk4 => {
            let stage = |base: &[f64], k: &[f64], h: f64| -> Result<Vec<f64>> {
                let mut m = MetricState::from_raw(
                    base.iter().zip(k).map(|(g, k)| g + h * k).collect(),
                    cfg.g_floor,
                );
                if let Some(edge) = m.g().iter().position(|x| !x.is_finite()) {
                    return Err(Error::Blowup { step: 0, edge });
                }
                m.project();
                let f = curvature_field(graph, &m, &cfg.curvature)?;
                let rhs = flow_rhs(graph, &m, &f, loss_grad, cfg.beta);
                check_finite(&rhs)?;
                Ok(rhs)
            };
            let g0 = metric.g();
            let k2 = stage(g0, &k1, 0.5 * dt)?;
            let k3 = stage(g0, &k2, 0.5 * dt)?;
            let k4 = stage(g0, &k3, dt)?;
            (0..g0.len())
                .map(|e| g0[e] + dt / 6.0 * (k1[e] + 2.0 * k2[e] + 2.0 * k3[e] + k4[e]))
                .collect()
        }
    };
    if let Some(edge) = next.iter().position(|x| !x.is_finite()) {
        return Err(Error::Blowup { step: 0, edge });
    }
    for g in &mut next {
        *g = g.max(cfg.g_floor);
    }
    Ok(MetricState::from_raw(next, cfg.g_floor))
}

/// One integration step from scratch.
pub fn flow_step(
    graph: &ParameterGraph,
    metric: &MetricState,
    loss_grad: &[f64],
    cfg: &FlowConfig,
) -> Result<MetricState> {
    cfg.validate()?;
    let field = curvature_field(graph, metric, &cfg.curvature)?;
    flow_step_with_field(graph, metric, &field, loss_grad, cfg)
}

/// One row of the flow trace, describing the state at the start of a step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub t: f64,
    pub loss: f64,
    pub ric_l2: f64,
    pub grad_ric_lp: f64,
    pub min_g: f64,
    pub max_g: f64,
    pub r: f64,
}

pub const TRACE_HEADER: &str = "step,t,loss,ric_l2,grad_ric_lp,min_g,max_g,R";

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = format!("{TRACE_HEADER}\n");
    for r in trace {
        out.push_str(&format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
            r.step, r.t, r.loss, r.ric_l2, r.grad_ric_lp, r.min_g, r.max_g, r.r
        ));
    }
    out
}

/// Integrates the flow for `cfg.steps` steps with `theta` held fixed.
pub fn evolve(
    graph: &ParameterGraph,
    metric: &MetricState,
    theta: &[f64],
    cfg: &FlowConfig,
    loss: &dyn LossOracle,
) -> Result<(MetricState, Vec<TraceRow>)> {
    cfg.validate()?;
    let (loss_value, loss_grad) = loss.evaluate(theta);
    let p = NormExponent::default_for_dim(graph.intrinsic_dim());
    let mut current = metric.clone();
    let mut trace = Vec::with_capacity(cfg.steps);
    let mut field: Option<CurvatureField> = None;
    for step in 0..cfg.steps {
        if field.is_none() || step % cfg.reuse_interval == 0 {
            field = Some(curvature_field(graph, &current, &cfg.curvature)?);
        }
        let f = field.as_ref().expect("field computed above");
        trace.push(TraceRow {
            step,
            t: step as f64 * cfg.dt,
            loss: loss_value,
            ric_l2: curvature_norm(
                graph,
                f,
                &current,
                NormExponent::Finite(2.0),
                NormOrder::Curvature,
            )?,
            grad_ric_lp: curvature_norm(graph, f, &current, p, NormOrder::Gradient)?,
            min_g: current.min_g(),
            max_g: current.max_g(),
            r: scalar_curvature(graph, &current, f),
        });
        current =
            flow_step_with_field(graph, &current, f, &loss_grad, cfg).map_err(|e| match e {
                Error::Blowup { edge, .. } => Error::Blowup { step, edge },
                other => other,
            })?;
    }
    Ok((current, trace))
}
