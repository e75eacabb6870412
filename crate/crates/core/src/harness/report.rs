//! Running a benchmark end to end and writing its report files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curvature::curvature_field;
use crate::diagnostics::{
    decoherence_time, entanglement_bound, geometric_distortion, hawking_temperature,
    hessian_lambda_min, robustness_bound, DiagnosticsBlock,
};
use crate::error::{Error, Result};
use crate::graph::{MetricState, ParameterGraph};
use crate::harness::spec::BenchmarkSpec;
use crate::optimizer::{run, step_csv, Budget, RunOutcome, RunStatus, StepRecord};
use crate::surgery::{events_jsonl, SurgeryEvent};
use crate::topology::{
    betti, betti_bound, betti_masked, effective_mask, simplification_rate, TopologySnapshot,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub initial: TopologySnapshot,
    /// Carries the curvature bound evaluated on the final field.
    pub final_raw: TopologySnapshot,
    pub initial_effective: TopologySnapshot,
    pub final_effective: TopologySnapshot,
    /// Effective topology of the original edge set only, ignoring shortcuts
    /// inserted by surgery.
    pub final_effective_original: TopologySnapshot,
    pub r_ts: Option<f64>,
    pub r_ts_effective: Option<f64>,
    pub r_ts_effective_original: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub spec: BenchmarkSpec,
    pub status: RunStatus,
    /// Meta-steps actually taken.
    pub steps: usize,
    pub final_loss: f64,
    pub final_lyapunov: f64,
    pub l_lip: f64,
    /// Least-squares slope of `-ln V` per step; `None` with fewer than two
    /// positive values.
    pub decay_rate: Option<f64>,
    /// Fraction of steps on which `V` did not increase.
    pub monotone_fraction: Option<f64>,
    pub surgeries: usize,
    pub rows: Vec<StepRecord>,
    pub events: Vec<SurgeryEvent>,
    pub topology: TopologyReport,
    pub diagnostics: Option<DiagnosticsBlock>,
    /// Reason the diagnostics block could not be computed.
    pub diagnostics_error: Option<String>,
    pub final_theta: Vec<f64>,
    pub final_g: Vec<f64>,
    /// Seconds per step. Excluded from serialized output so that reports of
    /// identical runs are byte-identical.
    #[serde(skip)]
    pub wall_time: Vec<f64>,
}

impl RunReport {
    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }

    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged(_))
    }

    pub fn total_wall_time(&self) -> f64 {
        self.wall_time.iter().sum()
    }
}

/// Slope of `-ln V` against the step index, over rows with `V > 0`.
pub fn fitted_decay_rate(rows: &[StepRecord]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.lyapunov > 0.0 && r.lyapunov.is_finite())
        .map(|r| (r.step as f64, r.lyapunov.ln()))
        .collect();
    least_squares_slope(&pts).map(|s| -s)
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn monotone_fraction(rows: &[StepRecord]) -> Option<f64> {
    if rows.len() < 2 {
        return None;
    }
    let ok = rows
        .windows(2)
        .filter(|w| w[1].lyapunov <= w[0].lyapunov)
        .count();
    Some(ok as f64 / (rows.len() - 1) as f64)
}

fn diagnostics(
    spec: &BenchmarkSpec,
    graph0: &ParameterGraph,
    metric0: &MetricState,
    out: &RunOutcome,
    loss: &dyn crate::loss::LossOracle,
) -> Result<DiagnosticsBlock> {
    let ent = entanglement_bound(&out.graph, &out.metric, &spec.holo)?;
    let m0 = graph0.edge_count();
    let current = MetricState::new(out.metric.g()[..m0].to_vec(), out.metric.g_floor())?;
    let d_g = geometric_distortion(graph0, &current, metric0)?;
    let lambda_min = hessian_lambda_min(loss, &out.theta)?;
    let robust = robustness_bound(out.l_lip, spec.rho, lambda_min)?;
    let field = match &out.field {
        Some(f) => f.clone(),
        None => curvature_field(&out.graph, &out.metric, &spec.optimizer.flow.curvature)?,
    };
    let t_coh = decoherence_time(&out.graph, &field, &out.metric, &spec.holo)?;
    let t_h = hawking_temperature(loss, &out.theta)?;
    Ok(DiagnosticsBlock {
        s_ent: ent.s_ent,
        rho_e: ent.rho_e,
        area: ent.area,
        entanglement_bound_ok: ent.satisfied,
        d_g,
        robustness_bound: robust,
        t_coh,
        t_h: t_h.value,
        t_h_det_sign: t_h.det_sign,
    })
}

/// Builds the graph, metric and loss from `spec`, runs the meta-optimizer and
/// gathers topology snapshots and diagnostics. Divergence is reported through
/// the status field rather than as an error.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<RunReport> {
    spec.validate()?;
    let graph0 = spec.build_graph()?;
    let theta0 = spec.build_theta0(&graph0);
    let metric0 = spec.build_metric(&graph0, &theta0)?;
    let loss = spec.build_loss(graph0.vertex_count())?;
    let budget = Budget {
        max_steps: spec.max_steps,
        eps: spec.eps,
    };
    let out = run(
        &graph0,
        &metric0,
        theta0,
        loss.as_ref(),
        &spec.optimizer,
        budget,
    )?;

    let ratio = spec.optimizer.pinch_ratio;
    let initial = betti(&graph0);
    let initial_effective = betti_masked(&graph0, &effective_mask(&metric0, ratio));
    let final_plain = betti(&out.graph);
    let final_raw = match &out.field {
        Some(f) => betti_bound(&initial, &final_plain, f, &out.metric, &out.graph),
        None => final_plain,
    };
    let mask = effective_mask(&out.metric, ratio);
    let final_effective = betti_masked(&out.graph, &mask);
    let m0 = graph0.edge_count();
    let original: Vec<bool> = mask.iter().enumerate().map(|(e, &k)| k && e < m0).collect();
    let final_effective_original = betti_masked(&out.graph, &original);
    let rate = |a: &TopologySnapshot, b: &TopologySnapshot| simplification_rate(a, b).ok();
    let topology = TopologyReport {
        r_ts: rate(&initial, &final_raw),
        r_ts_effective: rate(&initial_effective, &final_effective),
        r_ts_effective_original: rate(&initial_effective, &final_effective_original),
        initial,
        final_raw,
        initial_effective,
        final_effective,
        final_effective_original,
    };

    let (diagnostics, diagnostics_error) =
        match diagnostics(spec, &graph0, &metric0, &out, loss.as_ref()) {
            Ok(d) => (Some(d), None),
            Err(e) => (None, Some(e.to_string())),
        };
    let last = out
        .rows
        .last()
        .expect("run always records the initial state");
    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        spec: spec.clone(),
        steps: last.step,
        final_loss: last.loss,
        final_lyapunov: last.lyapunov,
        l_lip: out.l_lip,
        decay_rate: fitted_decay_rate(&out.rows),
        monotone_fraction: monotone_fraction(&out.rows),
        surgeries: out.events.len(),
        status: out.status.clone(),
        topology,
        diagnostics,
        diagnostics_error,
        final_theta: out.theta.clone(),
        final_g: out.metric.g().to_vec(),
        events: out.events,
        rows: out.rows,
        wall_time: out.wall_time,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Plotdata,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "plotdata" => Ok(Format::Plotdata),
            other => Err(Error::invalid(format!("unknown format {other:?}"))),
        }
    }
}

pub fn report_json(report: &RunReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)
        .map_err(|e| Error::invalid(format!("report not serializable: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// One whitespace-separated line per row, preceded by a `#` header line.
pub fn report_plotdata(rows: &[StepRecord]) -> String {
    let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_else(|| "nan".into());
    let mut out = String::from("# step loss V eta ric_l2 grad_ric_lp b0 b1 eff_b1 min_g\n");
    for r in rows {
        out.push_str(&format!(
            "{} {:e} {:e} {} {:e} {:e} {} {} {} {:e}\n",
            r.step,
            r.loss,
            r.lyapunov,
            opt(r.eta),
            r.ric_l2,
            r.grad_ric_lp,
            r.b0,
            r.b1,
            r.eff_b1,
            r.min_g
        ));
    }
    out
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `<name>.json`, `<name>.csv` and `<name>.dat` for the requested
/// formats, plus `<name>.surgery.jsonl` and `<name>.timing.csv`. Returns the
/// written paths.
pub fn emit_report(report: &RunReport, formats: &[Format], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = &report.spec.name;
    let mut written = Vec::new();
    let mut put = |file: String, contents: String| -> Result<()> {
        let path = dir.join(file);
        write_file(&path, &contents)?;
        written.push(path);
        Ok(())
    };
    for f in formats {
        match f {
            Format::Json => put(format!("{name}.json"), report_json(report)?)?,
            Format::Csv => put(format!("{name}.csv"), step_csv(&report.rows))?,
            Format::Plotdata => put(format!("{name}.dat"), report_plotdata(&report.rows))?,
        }
    }
    put(
        format!("{name}.surgery.jsonl"),
        events_jsonl(&report.events),
    )?;
    let mut timing = String::from("step,seconds\n");
    for (k, t) in report.wall_time.iter().enumerate() {
        timing.push_str(&format!("{},{t:?}\n", k + 1));
    }
    put(format!("{name}.timing.csv"), timing)?;
    Ok(written)
}
