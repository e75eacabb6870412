//! Line-oriented graph file format.
//!
//! ```text
//! # comments and blank lines are ignored
//! V <vertex_count> <dim> <n>
//! v <id> <x_1> ... <x_dim> <theta>
//! e <i> <j> [g]
//! ```
//!
//! The `V` header must come first. Every vertex id in `0..vertex_count` must
//! appear exactly once. Edges without an explicit metric value `g` receive
//! the Gaussian weight initialisation from their endpoint coordinates.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{init_weights, MetricState, ParameterGraph};

/// Parsed graph file: the graph plus optional explicit metric per edge.
#[derive(Debug, Clone)]
pub struct GraphFile {
    pub graph: ParameterGraph,
    pub metric: Vec<Option<f64>>,
}

impl GraphFile {
    /// Resolves missing edge metrics via Gaussian weights.
    pub fn into_metric(self, beta_w: f64, g_floor: f64) -> Result<(ParameterGraph, MetricState)> {
        let gauss = init_weights(&self.graph, beta_w, g_floor)?;
        let g = self
            .metric
            .iter()
            .zip(gauss.g())
            .map(|(given, &fallback)| given.unwrap_or(fallback))
            .collect();
        let metric = MetricState::new(g, g_floor)?;
        Ok((self.graph, metric))
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(line, format!("invalid {what} `{tok}`")))
}

pub fn parse_graph(text: &str) -> Result<GraphFile> {
    let mut header: Option<(usize, usize, usize)> = None;
    let mut coords: Vec<Option<Vec<f64>>> = Vec::new();
    let mut theta: Vec<f64> = Vec::new();
    let mut edges = Vec::new();
    let mut metric = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let tag = toks.next().unwrap_or("");
        match (tag, header) {
            ("V", None) => {
                let count: usize = num(toks.next(), line, "vertex count")?;
                let dim: usize = num(toks.next(), line, "dimension")?;
                let n: usize = num(toks.next(), line, "intrinsic dimension")?;
                if count == 0 || dim == 0 || n == 0 {
                    return Err(parse_err(line, "header values must be positive"));
                }
                header = Some((count, dim, n));
                coords = vec![None; count];
                theta = vec![0.0; count];
            }
            ("V", Some(_)) => return Err(parse_err(line, "duplicate header")),
            (_, None) => {
                return Err(parse_err(
                    line,
                    "expected `V <count> <dim> <n>` header first",
                ))
            }
            ("v", Some((count, dim, _))) => {
                let id: usize = num(toks.next(), line, "vertex id")?;
                if id >= count {
                    return Err(parse_err(line, format!("vertex id {id} out of range")));
                }
                if coords[id].is_some() {
                    return Err(parse_err(line, format!("vertex {id} defined twice")));
                }
                let values: Vec<f64> = toks
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| parse_err(line, format!("invalid number `{t}`")))
                    })
                    .collect::<Result<_>>()?;
                if values.len() != dim + 1 {
                    return Err(parse_err(
                        line,
                        format!(
                            "expected {dim} coordinates and theta, got {} values",
                            values.len()
                        ),
                    ));
                }
                if values.iter().any(|x| !x.is_finite()) {
                    return Err(parse_err(line, "non-finite vertex value"));
                }
                theta[id] = values[dim];
                coords[id] = Some(values[..dim].to_vec());
            }
            ("e", Some(_)) => {
                let i: usize = num(toks.next(), line, "edge endpoint")?;
                let j: usize = num(toks.next(), line, "edge endpoint")?;
                let g = match toks.next() {
                    Some(t) => Some(
                        t.parse::<f64>()
                            .map_err(|_| parse_err(line, format!("invalid metric `{t}`")))?,
                    ),
                    None => None,
                };
                if toks.next().is_some() {
                    return Err(parse_err(line, "trailing tokens on edge line"));
                }
                edges.push((line, i, j));
                metric.push(g);
            }
            (other, _) => return Err(parse_err(line, format!("unknown record `{other}`"))),
        }
    }

    let (_, _, n) = header.ok_or_else(|| parse_err(0, "missing header"))?;
    let coords = coords
        .into_iter()
        .enumerate()
        .map(|(id, c)| c.ok_or_else(|| parse_err(0, format!("vertex {id} not defined"))))
        .collect::<Result<Vec<_>>>()?;
    let mut graph = ParameterGraph::new(coords, theta, &[], n)?;
    for &(line, i, j) in &edges {
        graph
            .add_edge(i, j)
            .map_err(|e| parse_err(line, e.to_string()))?;
    }
    Ok(GraphFile { graph, metric })
}

pub fn read_graph(path: &Path) -> Result<GraphFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_graph(&text)
}

/// Serializes a graph and metric in the format accepted by [`parse_graph`].
pub fn format_graph(graph: &ParameterGraph, metric: Option<&MetricState>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "V {} {} {}",
        graph.vertex_count(),
        graph.dim(),
        graph.intrinsic_dim()
    );
    for i in 0..graph.vertex_count() {
        let _ = write!(out, "v {i}");
        for x in graph.coord(i) {
            let _ = write!(out, " {x:?}");
        }
        let _ = writeln!(out, " {:?}", graph.theta()[i]);
    }
    for (e, &(i, j)) in graph.edges().iter().enumerate() {
        match metric {
            Some(m) => {
                let _ = writeln!(out, "e {i} {j} {:?}", m.g()[e]);
            }
            None => {
                let _ = writeln!(out, "e {i} {j}");
            }
        }
    }
    out
}
