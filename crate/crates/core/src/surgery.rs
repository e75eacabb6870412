//! Singularity detection and the three surgery operations: neckpinch
//! shortcut insertion, collapse normalization and conical repair.
//!
//! Surgery never removes vertices or edges and every output metric respects
//! the positivity floor.

use serde::{Deserialize, Serialize};

use crate::curvature::{curvature_norm, CurvatureField, NormExponent, NormOrder};
use crate::error::{Error, Result};
use crate::graph::{MetricState, ParameterGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurgeryConfig {
    /// Curvature threshold `kappa`.
    pub kappa_thresh: f64,
    /// Scale applied after collapse normalization.
    pub bn_gamma: f64,
    /// Shift applied after collapse normalization.
    pub bn_beta: f64,
    pub bn_eps: f64,
    pub record: bool,
}

impl Default for SurgeryConfig {
    fn default() -> Self {
        SurgeryConfig {
            kappa_thresh: 1.5,
            bn_gamma: 1.0,
            bn_beta: 1.0,
            bn_eps: 1e-5,
            record: true,
        }
    }
}

impl SurgeryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_thresh > 0.0 && self.kappa_thresh.is_finite()) {
            return Err(Error::invalid("curvature threshold must be positive"));
        }
        if !(self.bn_eps > 0.0) {
            return Err(Error::invalid("normalization epsilon must be positive"));
        }
        if !(self.bn_gamma.is_finite() && self.bn_beta.is_finite()) {
            return Err(Error::invalid(
                "normalization scale and shift must be finite",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurgeryKind {
    Neckpinch,
    Collapse,
    Conical,
}

/// Audit record of one surgery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryEvent {
    pub step: usize,
    pub kind: SurgeryKind,
    /// Singular edge for a neckpinch; `None` for global operations.
    pub location: Option<(usize, usize)>,
    /// `lambda` for a neckpinch, `alpha` for conical repair, zero otherwise.
    pub lambda_or_alpha: f64,
    /// Smallest metric component before and after the operation.
    pub pre_norm: f64,
    pub post_norm: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub added_edges: Vec<(usize, usize)>,
    #[serde(default)]
    pub noop: bool,
}

/// Dispatch rule: neckpinch when the sup-norm of the curvature gradient
/// exceeds `kappa`, else collapse when the smallest metric component is
/// below `1 / kappa`, else conical repair when the `L^2` curvature norm
/// exceeds `kappa`.
pub fn detect(
    graph: &ParameterGraph,
    field: &CurvatureField,
    metric: &MetricState,
    cfg: &SurgeryConfig,
) -> Result<Option<SurgeryKind>> {
    let kappa = cfg.kappa_thresh;
    let grad_sup = curvature_norm(
        graph,
        field,
        metric,
        NormExponent::Infinity,
        NormOrder::Gradient,
    )?;
    if grad_sup > kappa {
        return Ok(Some(SurgeryKind::Neckpinch));
    }
    if !metric.is_empty() && metric.min_g() < 1.0 / kappa {
        return Ok(Some(SurgeryKind::Collapse));
    }
    let ric_l2 = curvature_norm(
        graph,
        field,
        metric,
        NormExponent::Finite(2.0),
        NormOrder::Curvature,
    )?;
    if ric_l2 > kappa {
        return Ok(Some(SurgeryKind::Conical));
    }
    Ok(None)
}

/// Edge with the largest `|grad_ric|`, lowest id on ties.
pub fn singular_edge(field: &CurvatureField) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (e, g) in field.grad_ric.iter().enumerate() {
        let a = g.abs();
        if best.is_none_or(|(_, b)| a > b) {
            best = Some((e, a));
        }
    }
    best.map(|(e, _)| e)
}

/// Joins every non-adjacent pair in the closed neighborhood of the singular
/// edge. New edges get `g = exp(-lambda * loss)` with
/// `lambda = ln(max |grad_ric|) / kappa`, clamped to `[g_floor, 1 / g_floor]`.
pub fn neckpinch(
    graph: &ParameterGraph,
    metric: &MetricState,
    field: &CurvatureField,
    loss_value: f64,
    cfg: &SurgeryConfig,
) -> Result<(ParameterGraph, MetricState, SurgeryEvent)> {
    let pre = metric.min_g();
    let Some(e) = singular_edge(field) else {
        return Err(Error::invalid("neckpinch needs at least one edge"));
    };
    let (u, v) = graph.edge(e);
    let peak = field.grad_ric[e].abs();
    let lambda = if peak > 0.0 {
        peak.ln() / cfg.kappa_thresh
    } else {
        0.0
    };

    let mut hood: Vec<usize> = graph
        .neighbors(u)
        .iter()
        .chain(graph.neighbors(v))
        .map(|&(w, _)| w)
        .collect();
    hood.sort_unstable();
    hood.dedup();

    let floor = metric.g_floor();
    let g_new = {
        let raw = (-lambda * loss_value).exp();
        if raw.is_nan() {
            1.0
        } else {
            raw.clamp(floor, 1.0 / floor)
        }
    };
    let mut out_graph = graph.clone();
    let mut out_metric = metric.clone();
    let mut added = Vec::new();
    for (k, &a) in hood.iter().enumerate() {
        for &b in &hood[k + 1..] {
            if out_graph.edge_between(a, b).is_none() {
                out_graph.add_edge(a, b)?;
                out_metric.push(g_new);
                added.push((a, b));
            }
        }
    }
    let event = SurgeryEvent {
        step: 0,
        kind: SurgeryKind::Neckpinch,
        location: Some((u, v)),
        lambda_or_alpha: lambda,
        pre_norm: pre,
        post_norm: out_metric.min_g(),
        noop: added.is_empty(),
        added_edges: added,
    };
    Ok((out_graph, out_metric, event))
}

/// Batch-style normalization of the metric across edges followed by the
/// positivity clamp.
pub fn collapse_normalize(
    metric: &MetricState,
    cfg: &SurgeryConfig,
) -> Result<(MetricState, SurgeryEvent)> {
    let n = metric.len();
    if n < 2 {
        return Err(Error::invalid(
            "collapse normalization needs at least two edges",
        ));
    }
    let g = metric.g();
    let mean = g.iter().sum::<f64>() / n as f64;
    let var = g.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    let scale = cfg.bn_gamma / (var + cfg.bn_eps).sqrt();
    let floor = metric.g_floor();
    let next = g
        .iter()
        .map(|x| ((x - mean) * scale + cfg.bn_beta).max(floor))
        .collect();
    let out = MetricState::from_raw(next, floor);
    let event = SurgeryEvent {
        step: 0,
        kind: SurgeryKind::Collapse,
        location: None,
        lambda_or_alpha: 0.0,
        pre_norm: metric.min_g(),
        post_norm: out.min_g(),
        added_edges: Vec::new(),
        noop: false,
    };
    Ok((out, event))
}

/// Adds `alpha * kappa_e * g_e * thetabar_e^2` to every edge, where
/// `thetabar_e` is the mean absolute parameter of its endpoints and
/// `alpha = sqrt(kappa / ||Ric||_2)`.
pub fn conical_repair(
    graph: &ParameterGraph,
    metric: &MetricState,
    field: &CurvatureField,
    theta: &[f64],
    cfg: &SurgeryConfig,
) -> Result<(MetricState, SurgeryEvent)> {
    if theta.len() != graph.vertex_count() {
        return Err(Error::invalid("parameter vector length mismatch"));
    }
    let norm = curvature_norm(
        graph,
        field,
        metric,
        NormExponent::Finite(2.0),
        NormOrder::Curvature,
    )?;
    let pre = metric.min_g();
    let mut event = SurgeryEvent {
        step: 0,
        kind: SurgeryKind::Conical,
        location: None,
        lambda_or_alpha: 0.0,
        pre_norm: pre,
        post_norm: pre,
        added_edges: Vec::new(),
        noop: true,
    };
    if !(norm > 0.0) {
        return Ok((metric.clone(), event));
    }
    let alpha = (cfg.kappa_thresh / norm).sqrt();
    let floor = metric.g_floor();
    let next: Vec<f64> = graph
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| {
            let tbar = 0.5 * (theta[i].abs() + theta[j].abs());
            let g = metric.g()[e];
            (g + alpha * field.kappa[e] * g * tbar * tbar).max(floor)
        })
        .collect();
    if let Some(e) = next.iter().position(|x| !x.is_finite()) {
        return Err(Error::Blowup { step: 0, edge: e });
    }
    let out = MetricState::from_raw(next, floor);
    event.lambda_or_alpha = alpha;
    event.post_norm = out.min_g();
    event.noop = false;
    Ok((out, event))
}

/// Runs detection and at most one surgery. Returns `None` when no
/// singularity is present.
pub fn apply(
    graph: &ParameterGraph,
    metric: &MetricState,
    field: &CurvatureField,
    theta: &[f64],
    loss_value: f64,
    step: usize,
    cfg: &SurgeryConfig,
) -> Result<Option<(ParameterGraph, MetricState, SurgeryEvent)>> {
    cfg.validate()?;
    let Some(kind) = detect(graph, field, metric, cfg)? else {
        return Ok(None);
    };
    let (g, m, mut ev) = match kind {
        SurgeryKind::Neckpinch => neckpinch(graph, metric, field, loss_value, cfg)?,
        SurgeryKind::Collapse => {
            let (m, ev) = collapse_normalize(metric, cfg)?;
            (graph.clone(), m, ev)
        }
        SurgeryKind::Conical => {
            let (m, ev) = conical_repair(graph, metric, field, theta, cfg)?;
            (graph.clone(), m, ev)
        }
    };
    ev.step = step;
    Ok(Some((g, m, ev)))
}

/// One JSON object per line.
pub fn events_jsonl(events: &[SurgeryEvent]) -> String {
    events
        .iter()
        .map(|e| serde_json::to_string(e).expect("events serialize") + "\n")
        .collect()
}
