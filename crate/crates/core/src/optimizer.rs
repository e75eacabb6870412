//! Curvature-aware meta-optimizer.
//!
//! Each step evaluates the loss, computes the curvature field, optionally
//! performs one surgery, picks a learning rate from the critical and optimal
//! rate formulas, updates the parameters with curvature coupling, advances
//! the metric by one flow step and records the Lyapunov value
//! `V = sum_i ric_i^2 vol_i + beta L`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curvature::{curvature_field, curvature_norm, CurvatureField, NormExponent, NormOrder};
use crate::error::{Error, Result};
use crate::flow::{flow_step_with_field, FlowConfig};
use crate::graph::{MetricState, ParameterGraph};
use crate::loss::{finite_difference_hessian_diagonal, LossOracle};
use crate::surgery::{self, SurgeryConfig, SurgeryEvent};
use crate::topology::{betti, betti_masked, effective_mask};

/// Smallest Lipschitz estimate ever used.
pub const LIPSCHITZ_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrState {
    /// Dimensional constant `C_n`.
    pub c_n: f64,
    /// Running estimate of the gradient Lipschitz constant.
    pub l_lip: f64,
    /// Initial loss.
    pub l0: f64,
    pub eta_max: f64,
}

impl LrState {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_n > 0.0 && self.l_lip > 0.0 && self.l0 >= 0.0 && self.eta_max > 0.0) {
            return Err(Error::invalid("learning-rate state must be positive"));
        }
        Ok(())
    }

    /// Folds one secant observation into the running maximum.
    pub fn observe(&mut self, d_theta: &[f64], d_grad: &[f64]) {
        let dt = norm2(d_theta);
        if dt > 0.0 {
            let ratio = norm2(d_grad) / dt;
            if ratio.is_finite() {
                self.l_lip = self.l_lip.max(ratio);
            }
        }
        self.l_lip = self.l_lip.max(LIPSCHITZ_FLOOR);
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalLr {
    pub eta: f64,
    /// The discriminant was negative and replaced by zero.
    pub clamped: bool,
    /// The value exceeded `eta_max` and was capped.
    pub capped: bool,
}

/// `2 / (C L^{2/n}) (1 + sqrt(1 - 4 beta L0 / (C^2 L^{4/n})))`, capped at
/// `eta_max`.
pub fn critical_lr(state: &LrState, beta: f64, n: usize) -> CriticalLr {
    let n = n.max(1) as f64;
    let l_pow = state.l_lip.max(LIPSCHITZ_FLOOR).powf(2.0 / n);
    let base = 2.0 / (state.c_n * l_pow);
    let disc = 1.0 - 4.0 * beta * state.l0 / (state.c_n * state.c_n * l_pow * l_pow);
    let clamped = disc < 0.0;
    let eta = base * (1.0 + disc.max(0.0).sqrt());
    let capped = eta > state.eta_max;
    CriticalLr {
        eta: eta.min(state.eta_max),
        clamped,
        capped,
    }
}

/// `eta_c / (1 + sqrt(norm))`.
pub fn optimal_lr(eta_c: f64, grad_ric_norm: f64) -> f64 {
    eta_c / (1.0 + grad_ric_norm.max(0.0).sqrt())
}

pub fn lyapunov(
    graph: &ParameterGraph,
    field: &CurvatureField,
    metric: &MetricState,
    loss_value: f64,
    beta: f64,
) -> f64 {
    field.ric_energy(graph, metric) + beta * loss_value
}

/// How curvature multiplies the loss gradient in the parameter update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    /// `grad_i (1 + ric_i)`.
    #[default]
    Diagonal,
    /// `grad_i + sum_j kappa_ij w_ij (grad_j - grad_i)`.
    Laplacian,
}

/// Source of the per-vertex curvature used by the coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurvatureMode {
    #[default]
    Ollivier,
    /// Finite-difference `d^2 L / d theta_i^2`.
    HessianDiagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "eta")]
pub enum LrPolicy {
    /// Critical rate attenuated by the curvature-gradient norm.
    Optimal,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub flow: FlowConfig,
    pub c_n: f64,
    pub eta_max: f64,
    pub coupling: Coupling,
    pub curvature_mode: CurvatureMode,
    pub lr: LrPolicy,
    /// When false the optimizer is plain gradient descent: no curvature,
    /// no coupling, no flow and no surgery.
    pub geometric: bool,
    pub surgery_enabled: bool,
    pub surgery: SurgeryConfig,
    /// Power-iteration probes used to seed the Lipschitz estimate.
    pub lipschitz_probes: usize,
    /// An edge longer than this multiple of the median metric component
    /// counts as pinched off in the effective topology.
    pub pinch_ratio: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            flow: FlowConfig::default(),
            c_n: 4.0 * std::f64::consts::PI,
            eta_max: 1.0,
            coupling: Coupling::Diagonal,
            curvature_mode: CurvatureMode::Ollivier,
            lr: LrPolicy::Optimal,
            geometric: true,
            surgery_enabled: true,
            surgery: SurgeryConfig::default(),
            lipschitz_probes: 20,
            pinch_ratio: 8.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.flow.validate()?;
        self.surgery.validate()?;
        if !(self.c_n > 0.0 && self.eta_max > 0.0) {
            return Err(Error::invalid("C_n and eta_max must be positive"));
        }
        if let LrPolicy::Fixed(eta) = self.lr {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::invalid("fixed learning rate must be positive"));
            }
        }
        if !(self.pinch_ratio > 1.0) {
            return Err(Error::invalid("pinch ratio must exceed 1"));
        }
        Ok(())
    }
}

/// Estimates the largest Hessian eigenvalue by power iteration on gradient
/// differences. Deterministic: the start vector comes from a fixed seed.
pub fn lipschitz_warmup(loss: &dyn LossOracle, theta: &[f64], probes: usize) -> f64 {
    let n = theta.len();
    if n == 0 || probes == 0 {
        return LIPSCHITZ_FLOOR;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let base = loss.gradient(theta);
    let scale = 1e-4 * norm2(theta).max(1.0) / (n as f64).sqrt();
    let mut estimate = LIPSCHITZ_FLOOR;
    for _ in 0..probes {
        let nv = norm2(&v);
        if !(nv > 0.0) {
            break;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let probe: Vec<f64> = theta.iter().zip(&v).map(|(t, d)| t + scale * d).collect();
        let hv: Vec<f64> = loss
            .gradient(&probe)
            .iter()
            .zip(&base)
            .map(|(a, b)| (a - b) / scale)
            .collect();
        let r = norm2(&hv);
        if r.is_finite() {
            estimate = estimate.max(r);
        }
        v = hv;
    }
    estimate
}

/// Mutable state carried between meta-steps.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub theta: Vec<f64>,
    pub step: usize,
    pub lyapunov_history: Vec<f64>,
    pub last_grad: Vec<f64>,
    pub last_loss: f64,
    pub lr: LrState,
    pub events: Vec<SurgeryEvent>,
    /// Curvature of the current metric, reused by the next step.
    field: Option<CurvatureField>,
}

impl OptimizerState {
    pub fn new(
        graph: &ParameterGraph,
        metric: &MetricState,
        theta: Vec<f64>,
        loss: &dyn LossOracle,
        cfg: &OptimizerConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if theta.len() != graph.vertex_count() {
            return Err(Error::invalid("parameter vector length mismatch"));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("initial parameters must be finite"));
        }
        let (l0, grad) = loss.evaluate(&theta);
        if !l0.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid(
                "loss is not finite at the initial parameters",
            ));
        }
        let field = if cfg.geometric {
            Some(curvature_field(graph, metric, &cfg.flow.curvature)?)
        } else {
            None
        };
        let v0 = match &field {
            Some(f) => lyapunov(graph, f, metric, l0, cfg.flow.beta),
            None => cfg.flow.beta * l0,
        };
        let lr = LrState {
            c_n: cfg.c_n,
            l_lip: lipschitz_warmup(loss, &theta, cfg.lipschitz_probes),
            l0,
            eta_max: cfg.eta_max,
        };
        Ok(OptimizerState {
            theta,
            step: 0,
            lyapunov_history: vec![v0],
            last_grad: grad,
            last_loss: l0,
            lr,
            events: Vec::new(),
            field,
        })
    }

    pub fn lyapunov(&self) -> f64 {
        *self
            .lyapunov_history
            .last()
            .expect("history starts non-empty")
    }

    /// Curvature of the current metric, if the run is geometric.
    pub fn field(&self) -> Option<&CurvatureField> {
        self.field.as_ref()
    }
}

/// Learning-rate bookkeeping for one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub eta: f64,
    pub eta_c: f64,
    pub grad_ric_norm: f64,
    pub clamped: bool,
    pub retried: bool,
}

fn coupled_direction(
    graph: &ParameterGraph,
    metric: &MetricState,
    field: Option<&CurvatureField>,
    grad: &[f64],
    vertex_curv: Option<&[f64]>,
    coupling: Coupling,
) -> Vec<f64> {
    let Some(field) = field else {
        return grad.to_vec();
    };
    match coupling {
        Coupling::Diagonal => {
            let ric = vertex_curv.unwrap_or(&field.ric_vertex);
            grad.iter().zip(ric).map(|(g, r)| g + r * g).collect()
        }
        Coupling::Laplacian => {
            let mut out = grad.to_vec();
            for (e, &(i, j)) in graph.edges().iter().enumerate() {
                let c = field.kappa[e] * metric.weight(e) * (grad[j] - grad[i]);
                out[i] += c;
                out[j] -= c;
            }
            out
        }
    }
}

/// One meta-optimizer step. Returns the updated graph and metric; `state`
/// is advanced in place. On error `state` is left untouched.
pub fn meta_step(
    graph: &ParameterGraph,
    metric: &MetricState,
    state: &mut OptimizerState,
    loss: &dyn LossOracle,
    cfg: &OptimizerConfig,
) -> Result<(ParameterGraph, MetricState, StepInfo)> {
    let step = state.step;
    let beta = cfg.flow.beta;
    let grad = state.last_grad.clone();
    let mut graph = graph.clone();
    let mut metric = metric.clone();
    let mut event = None;

    let mut field = if cfg.geometric {
        match state.field.take() {
            Some(f) if f.kappa.len() == graph.edge_count() => Some(f),
            _ => Some(curvature_field(&graph, &metric, &cfg.flow.curvature)?),
        }
    } else {
        None
    };
    let p = NormExponent::default_for_dim(graph.intrinsic_dim());
    let norm_of = |g: &ParameterGraph, m: &MetricState, f: &CurvatureField| {
        curvature_norm(g, f, m, p, NormOrder::Gradient)
    };

    let mut grad_ric_norm = match &field {
        Some(f) => norm_of(&graph, &metric, f)?,
        None => 0.0,
    };
    if cfg.geometric && cfg.surgery_enabled && grad_ric_norm > cfg.surgery.kappa_thresh {
        let f = field.as_ref().expect("geometric runs carry a field");
        if let Some((g2, m2, ev)) = surgery::apply(
            &graph,
            &metric,
            f,
            &state.theta,
            state.last_loss,
            step,
            &cfg.surgery,
        )? {
            graph = g2;
            metric = m2;
            let f2 = curvature_field(&graph, &metric, &cfg.flow.curvature)?;
            grad_ric_norm = norm_of(&graph, &metric, &f2)?;
            field = Some(f2);
            event = Some(ev);
        }
    }

    let crit = critical_lr(&state.lr, beta, graph.intrinsic_dim());
    let mut eta = match cfg.lr {
        LrPolicy::Optimal => optimal_lr(crit.eta, grad_ric_norm),
        LrPolicy::Fixed(eta) => eta,
    };

    let vertex_curv = match (cfg.geometric, cfg.curvature_mode) {
        (true, CurvatureMode::HessianDiagonal) => {
            Some(finite_difference_hessian_diagonal(loss, &state.theta, 1e-4))
        }
        _ => None,
    };
    let dir = coupled_direction(
        &graph,
        &metric,
        field.as_ref(),
        &grad,
        vertex_curv.as_deref(),
        cfg.coupling,
    );

    let mut retried = false;
    let (theta, new_loss, new_grad) = loop {
        let theta: Vec<f64> = state
            .theta
            .iter()
            .zip(&dir)
            .map(|(t, d)| t - eta * d)
            .collect();
        let (l, g) = loss.evaluate(&theta);
        let finite = l.is_finite() && theta.iter().chain(&g).all(|x| x.is_finite());
        if finite {
            break (theta, l, g);
        }
        if retried {
            return Err(Error::Divergence {
                step,
                reason: "non-finite parameters after the halved retry".into(),
            });
        }
        retried = true;
        eta *= 0.5;
    };

    let (metric, field) = match field {
        Some(f) => {
            let m = flow_step_with_field(&graph, &metric, &f, &grad, &cfg.flow).map_err(
                |e| match e {
                    Error::Blowup { edge, .. } => Error::Blowup { step, edge },
                    other => other,
                },
            )?;
            let f = curvature_field(&graph, &m, &cfg.flow.curvature)?;
            (m, Some(f))
        }
        None => (metric, None),
    };
    let v = match &field {
        Some(f) => lyapunov(&graph, f, &metric, new_loss, beta),
        None => beta * new_loss,
    };
    if !v.is_finite() {
        return Err(Error::Divergence {
            step,
            reason: "Lyapunov value is not finite".into(),
        });
    }

    let d_theta: Vec<f64> = theta.iter().zip(&state.theta).map(|(a, b)| a - b).collect();
    let d_grad: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
    state.lr.observe(&d_theta, &d_grad);
    state.theta = theta;
    state.last_grad = new_grad;
    state.last_loss = new_loss;
    state.lyapunov_history.push(v);
    state.step += 1;
    state.field = field;
    if let Some(ev) = event {
        state.events.push(ev);
    }
    Ok((
        graph,
        metric,
        StepInfo {
            eta,
            eta_c: crit.eta,
            grad_ric_norm,
            clamped: crit.clamped,
            retried,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_steps: usize,
    pub eps: f64,
}

/// State of the run after step `step`; row 0 is the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub lyapunov: f64,
    /// Learning rate used to reach this row.
    pub eta: Option<f64>,
    pub eta_c: Option<f64>,
    pub ric_l2: f64,
    pub grad_ric_lp: f64,
    pub b0: usize,
    pub b1: usize,
    /// Betti numbers once stretched edges are treated as cut.
    pub eff_b0: usize,
    pub eff_b1: usize,
    pub edges: usize,
    pub min_g: f64,
}

pub const STEP_HEADER: &str =
    "step,loss,V,eta,eta_c,ric_l2,grad_ric_lp,b0,b1,eff_b0,eff_b1,edges,min_g";

pub fn step_csv(rows: &[StepRecord]) -> String {
    let opt = |x: Option<f64>| x.map(|v| format!("{v:?}")).unwrap_or_default();
    let mut out = format!("{STEP_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:?},{:?},{},{},{:?},{:?},{},{},{},{},{},{:?}\n",
            r.step,
            r.loss,
            r.lyapunov,
            opt(r.eta),
            opt(r.eta_c),
            r.ric_l2,
            r.grad_ric_lp,
            r.b0,
            r.b1,
            r.eff_b0,
            r.eff_b1,
            r.edges,
            r.min_g
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "status", content = "reason")]
pub enum RunStatus {
    Converged,
    Budget,
    Diverged(String),
}

/// Everything produced by [`run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub rows: Vec<StepRecord>,
    pub events: Vec<SurgeryEvent>,
    pub status: RunStatus,
    pub graph: ParameterGraph,
    pub metric: MetricState,
    pub theta: Vec<f64>,
    pub l_lip: f64,
    /// Curvature of the final metric for geometric runs.
    pub field: Option<CurvatureField>,
    /// Seconds spent in each step.
    pub wall_time: Vec<f64>,
}

fn record(
    graph: &ParameterGraph,
    metric: &MetricState,
    state: &OptimizerState,
    pinch_ratio: f64,
    info: Option<&StepInfo>,
) -> Result<StepRecord> {
    let (ric_l2, grad_ric_lp) = match state.field() {
        Some(f) => (
            curvature_norm(
                graph,
                f,
                metric,
                NormExponent::Finite(2.0),
                NormOrder::Curvature,
            )?,
            curvature_norm(
                graph,
                f,
                metric,
                NormExponent::default_for_dim(graph.intrinsic_dim()),
                NormOrder::Gradient,
            )?,
        ),
        None => (0.0, 0.0),
    };
    let raw = betti(graph);
    let eff = betti_masked(graph, &effective_mask(metric, pinch_ratio));
    Ok(StepRecord {
        step: state.step,
        loss: state.last_loss,
        lyapunov: state.lyapunov(),
        eta: info.map(|i| i.eta),
        eta_c: info.map(|i| i.eta_c),
        ric_l2,
        grad_ric_lp,
        b0: raw.b0,
        b1: raw.b1,
        eff_b0: eff.b0,
        eff_b1: eff.b1,
        edges: graph.edge_count(),
        min_g: metric.min_g(),
    })
}

/// Iterates [`meta_step`] until `V <= eps` (only meaningful when
/// `beta > 0`), `loss <= eps`, or the step budget runs out. With `eps = 0`
/// the full budget is used. A diverging
/// step ends the run with the last good state.
pub fn run(
    graph: &ParameterGraph,
    metric: &MetricState,
    theta0: Vec<f64>,
    loss: &dyn LossOracle,
    cfg: &OptimizerConfig,
    budget: Budget,
) -> Result<RunOutcome> {
    if !(budget.eps >= 0.0) {
        return Err(Error::invalid("eps must be nonnegative"));
    }
    let mut state = OptimizerState::new(graph, metric, theta0, loss, cfg)?;
    let mut graph = graph.clone();
    let mut metric = metric.clone();
    let mut rows = vec![record(&graph, &metric, &state, cfg.pinch_ratio, None)?];
    let mut wall_time = Vec::new();
    // eps = 0 disables early stopping
    let done = |s: &OptimizerState| {
        budget.eps > 0.0
            && (s.last_loss <= budget.eps || (cfg.flow.beta > 0.0 && s.lyapunov() <= budget.eps))
    };
    let mut status = if done(&state) {
        RunStatus::Converged
    } else {
        RunStatus::Budget
    };
    while status == RunStatus::Budget && state.step < budget.max_steps {
        let started = Instant::now();
        match meta_step(&graph, &metric, &mut state, loss, cfg) {
            Ok((g, m, info)) => {
                wall_time.push(started.elapsed().as_secs_f64());
                graph = g;
                metric = m;
                rows.push(record(
                    &graph,
                    &metric,
                    &state,
                    cfg.pinch_ratio,
                    Some(&info),
                )?);
                if done(&state) {
                    status = RunStatus::Converged;
                }
            }
            Err(e @ (Error::Divergence { .. } | Error::Blowup { .. })) => {
                status = RunStatus::Diverged(e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RunOutcome {
        rows,
        events: state.events.clone(),
        status,
        l_lip: state.lr.l_lip,
        field: state.field.clone(),
        theta: state.theta,
        graph,
        metric,
        wall_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{Quadratic, ZeroLoss};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn lr(l: f64, l0: f64) -> LrState {
        LrState {
            c_n: 4.0 * PI,
            l_lip: l,
            l0,
            eta_max: 1.0,
        }
    }

    #[test]
    fn critical_rate_values() {
        let c = critical_lr(&lr(1.0, 0.0), 0.0, 2);
        assert!((c.eta - 1.0 / PI).abs() < 1e-12);
        assert!(!c.clamped && !c.capped);

        // discriminant exactly zero: 4 beta L0 = C^2 with L = 1
        let c_n = 4.0 * PI;
        let c = critical_lr(&lr(1.0, c_n * c_n / 4.0), 1.0, 2);
        assert_relative_eq!(c.eta, 2.0 / c_n, epsilon = 1e-15);
        assert!(!c.clamped);

        let c = critical_lr(&lr(1.0, 1e6), 1.0, 2);
        assert_relative_eq!(c.eta, 2.0 / c_n, epsilon = 1e-15);
        assert!(c.clamped);

        let c = critical_lr(&lr(1e-4, 0.0), 0.0, 2);
        assert_eq!(c.eta, 1.0);
        assert!(c.capped);
    }

    #[test]
    fn optimal_rate_values() {
        assert_eq!(optimal_lr(0.3, 0.0), 0.3);
        assert_eq!(optimal_lr(0.3, 1.0), 0.15);
        assert_eq!(optimal_lr(0.3, 4.0), 0.3 / 3.0);
    }

    #[test]
    fn lyapunov_values() {
        let k3 = ParameterGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let m = MetricState::uniform(3, 1.0, 1e-6).unwrap();
        let f = CurvatureField::from_kappa(&k3, &m, vec![0.5; 3]);
        assert_relative_eq!(lyapunov(&k3, &f, &m, 0.0, 0.0), 1.5, epsilon = 1e-15);
        let z = CurvatureField::zeros(&k3);
        assert_eq!(lyapunov(&k3, &z, &m, 0.0, 0.0), 0.0);
        assert_eq!(lyapunov(&k3, &z, &m, 2.0, 1.0), 2.0);
    }

    #[test]
    fn diagonal_coupling_hand_value() {
        let g = ParameterGraph::from_edges(2, &[(0, 1)]).unwrap();
        let m = MetricState::uniform(1, 1.0, 1e-6).unwrap();
        let mut f = CurvatureField::zeros(&g);
        f.ric_vertex = vec![1.0, 0.0];
        let d = coupled_direction(&g, &m, Some(&f), &[1.0, 0.0], None, Coupling::Diagonal);
        // theta = 1, eta = 0.1: 1 - 0.1 (1 + 1) = 0.8
        assert_relative_eq!(1.0 - 0.1 * d[0], 0.8, epsilon = 1e-15);
        let d = coupled_direction(&g, &m, Some(&f), &[0.0, 0.0], None, Coupling::Diagonal);
        assert_eq!(d, vec![0.0, 0.0]);
        let l = coupled_direction(
            &g,
            &m,
            Some(&CurvatureField::zeros(&g)),
            &[1.0, -2.0],
            None,
            Coupling::Laplacian,
        );
        assert_eq!(l, vec![1.0, -2.0]);
    }

    #[test]
    fn lipschitz_warmup_finds_top_eigenvalue() {
        let q = Quadratic::ring_conditioned(32, 100.0);
        let theta: Vec<f64> = q.curvature.iter().map(|h| 1.0 / h).collect();
        let l = lipschitz_warmup(&q, &theta, 20);
        assert!(l <= 100.0 * 1.0001 && l >= 90.0, "{l}");
    }

    fn ring(n: usize) -> ParameterGraph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        ParameterGraph::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn flat_plain_step_matches_gradient_descent() {
        let g = ring(8);
        let m = MetricState::uniform(8, 1.0, 1e-6).unwrap();
        let q = Quadratic::new((1..=8).map(|i| i as f64).collect());
        let theta: Vec<f64> = (0..8).map(|i| 0.1 * i as f64 - 0.3).collect();
        let cfg = OptimizerConfig {
            lr: LrPolicy::Fixed(0.05),
            surgery_enabled: false,
            ..OptimizerConfig::default()
        };
        let mut geo = OptimizerState::new(&g, &m, theta.clone(), &q, &cfg).unwrap();
        // zero out any rounding noise so the coupling vanishes exactly
        geo.field = Some(CurvatureField::zeros(&g));
        meta_step(&g, &m, &mut geo, &q, &cfg).unwrap();
        let grad = q.gradient(&theta);
        let want: Vec<f64> = theta.iter().zip(&grad).map(|(t, d)| t - 0.05 * d).collect();
        assert_eq!(geo.theta, want);
    }

    #[test]
    fn zero_budget_and_converged_start() {
        let g = ring(6);
        let m = MetricState::uniform(6, 1.0, 1e-6).unwrap();
        let cfg = OptimizerConfig::default();
        let out = run(
            &g,
            &m,
            vec![0.0; 6],
            &ZeroLoss,
            &cfg,
            Budget {
                max_steps: 10,
                eps: 1e-6,
            },
        )
        .unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.status, RunStatus::Converged);

        let q = Quadratic::new(vec![1.0; 6]);
        let out = run(
            &g,
            &m,
            vec![1.0; 6],
            &q,
            &cfg,
            Budget {
                max_steps: 0,
                eps: 1e-6,
            },
        )
        .unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.status, RunStatus::Budget);
    }

    #[test]
    fn diverging_loss_is_reported() {
        struct Cliff;
        impl LossOracle for Cliff {
            fn evaluate(&self, theta: &[f64]) -> (f64, Vec<f64>) {
                if theta[0] < 0.5 {
                    (f64::NAN, vec![f64::NAN; theta.len()])
                } else {
                    (theta[0], vec![1.0; theta.len()])
                }
            }
        }
        let g = ring(6);
        let m = MetricState::uniform(6, 1.0, 1e-6).unwrap();
        let cfg = OptimizerConfig {
            lr: LrPolicy::Fixed(10.0),
            ..OptimizerConfig::default()
        };
        let out = run(
            &g,
            &m,
            vec![1.0; 6],
            &Cliff,
            &cfg,
            Budget {
                max_steps: 5,
                eps: 0.0,
            },
        )
        .unwrap();
        assert!(matches!(out.status, RunStatus::Diverged(_)));
        assert_eq!(out.rows.len(), 1);
        assert!(out.theta.iter().all(|t| t.is_finite()));
    }
}
