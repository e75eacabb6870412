//! Benchmark specifications, the built-in presets and the key-value config
//! format.
//!
//! A config file holds one `key = value` pair per line; `#` starts a
//! comment. Keys are listed in [`KEYS`].

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curvature::TransportMode;
use crate::diagnostics::HoloConfig;
use crate::error::{Error, Result};
use crate::flow::Integrator;
use crate::graph::{init_from_theta, init_weights, MetricState, ParameterGraph};
use crate::graphio::read_graph;
use crate::harness::generators;
use crate::loss::{LossOracle, Quadratic, RosenbrockSum, SyntheticEmbedding, ZeroLoss};
use crate::optimizer::{Coupling, CurvatureMode, LrPolicy, OptimizerConfig};
use crate::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum GraphSource {
    File { path: PathBuf },
    Cycle { n: usize },
    Complete { n: usize },
    Grid { rows: usize, cols: usize },
    RandomRegular { n: usize, d: usize },
    NoisyRing { n: usize, chords: usize, noise: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum LossKind {
    Zero,
    /// Separable quadratic with curvatures spread over `[1, condition]`
    /// around the vertex ring.
    Quadratic {
        condition: f64,
    },
    RosenbrockSum,
    /// Targets drawn uniformly from `[-1, 1]` with the spec seed when absent.
    SyntheticEmbedding {
        targets: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum MetricInit {
    /// Gaussian weights from coordinates with the given `beta_w`.
    Weights(f64),
    /// `g_e = mean(theta_i^2, theta_j^2)`.
    Theta,
    Uniform(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaInit {
    Zero,
    Ones,
    /// `1 / h_i` for a quadratic, which makes every initial gradient 1.
    InverseCurvature,
    /// Uniform in `[-1, 1]` from the spec seed.
    Seeded,
    /// Parameters stored with the graph, e.g. the `theta` column of a file.
    Graph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub name: String,
    pub graph: GraphSource,
    pub loss: LossKind,
    pub seed: u64,
    /// Overrides the graph's intrinsic dimension `n`.
    pub intrinsic_dim: Option<usize>,
    pub init: MetricInit,
    pub theta0: ThetaInit,
    pub optimizer: OptimizerConfig,
    pub holo: HoloConfig,
    /// Perturbation radius for the robustness bound.
    pub rho: f64,
    pub eps: f64,
    pub max_steps: usize,
}

impl BenchmarkSpec {
    fn base(name: &str, graph: GraphSource, loss: LossKind) -> Self {
        let mut optimizer = OptimizerConfig::default();
        // 0.1 sqrt(n) for the planar generators
        optimizer.flow.beta = 0.1 * 2f64.sqrt();
        BenchmarkSpec {
            name: name.to_string(),
            graph,
            loss,
            seed: 0,
            intrinsic_dim: None,
            init: MetricInit::Weights(1.0),
            theta0: ThetaInit::Zero,
            optimizer,
            holo: HoloConfig::default(),
            rho: 0.1,
            eps: 1e-6,
            max_steps: 1000,
        }
    }

    /// Ring of 32 with a condition-100 quadratic; every initial gradient
    /// component equals 1.
    pub fn q1() -> Self {
        let mut s = Self::base(
            "q1",
            GraphSource::Cycle { n: 32 },
            LossKind::Quadratic { condition: 100.0 },
        );
        s.theta0 = ThetaInit::InverseCurvature;
        s.optimizer.flow.dt = 1e-3;
        s.eps = 1e-7;
        s.max_steps = 10_000;
        s
    }

    /// Ring of 32 with 8 random chords pulled toward random targets.
    pub fn t1() -> Self {
        let mut s = Self::base(
            "t1",
            GraphSource::NoisyRing {
                n: 32,
                chords: 8,
                noise: 0.05,
            },
            LossKind::SyntheticEmbedding { targets: None },
        );
        s.seed = 7;
        s.optimizer.pinch_ratio = 4.0;
        s.optimizer.flow.dt = 0.01;
        s.eps = 0.0;
        s.max_steps = 300;
        s
    }

    /// Pure curvature flow on the unit triangle.
    pub fn k3() -> Self {
        let mut s = Self::base("k3", GraphSource::Complete { n: 3 }, LossKind::Zero);
        s.init = MetricInit::Uniform(1.0);
        s.optimizer.flow.dt = 0.01;
        s.optimizer.flow.beta = 0.0;
        s.max_steps = 100;
        s.eps = 0.0;
        s
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "q1" => Ok(Self::q1()),
            "t1" => Ok(Self::t1()),
            "k3" => Ok(Self::k3()),
            other => Err(Error::invalid(format!(
                "unknown benchmark {other:?} (expected q1, t1 or k3)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.holo.validate()?;
        if !(self.eps >= 0.0) {
            return Err(Error::invalid("eps must be nonnegative"));
        }
        if !(self.rho >= 0.0) {
            return Err(Error::invalid("rho must be nonnegative"));
        }
        Ok(())
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.optimizer.flow.curvature.execution = execution;
        self
    }

    pub fn build_graph(&self) -> Result<ParameterGraph> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let graph = match &self.graph {
            GraphSource::File { path } => read_graph(path)?.graph,
            GraphSource::Cycle { n } => generators::cycle(*n)?,
            GraphSource::Complete { n } => generators::complete(*n)?,
            GraphSource::Grid { rows, cols } => generators::grid(*rows, *cols)?,
            GraphSource::RandomRegular { n, d } => generators::random_regular(*n, *d, &mut rng)?,
            GraphSource::NoisyRing { n, chords, noise } => {
                generators::noisy_ring_with_chords(*n, *chords, *noise, &mut rng)?
            }
        };
        match self.intrinsic_dim {
            Some(n) => graph.with_intrinsic_dim(n),
            None => Ok(graph),
        }
    }

    /// Seeded stream for loss targets and initial parameters, independent of
    /// the graph generator's stream.
    fn aux_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15)
    }

    pub fn build_loss(&self, n: usize) -> Result<Box<dyn LossOracle>> {
        Ok(match &self.loss {
            LossKind::Zero => Box::new(ZeroLoss),
            LossKind::Quadratic { condition } => {
                if !(*condition >= 1.0) {
                    return Err(Error::invalid("condition number must be at least 1"));
                }
                Box::new(Quadratic::ring_conditioned(n, *condition))
            }
            LossKind::RosenbrockSum => Box::new(RosenbrockSum),
            LossKind::SyntheticEmbedding { targets } => {
                let targets = match targets {
                    Some(t) if t.len() == n => t.clone(),
                    Some(t) => {
                        return Err(Error::invalid(format!(
                            "{} targets for {n} vertices",
                            t.len()
                        )));
                    }
                    None => {
                        let mut rng = self.aux_rng();
                        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
                    }
                };
                Box::new(SyntheticEmbedding { targets })
            }
        })
    }

    pub fn build_theta0(&self, graph: &ParameterGraph) -> Vec<f64> {
        let n = graph.vertex_count();
        match self.theta0 {
            ThetaInit::Zero => vec![0.0; n],
            ThetaInit::Ones => vec![1.0; n],
            ThetaInit::Graph => graph.theta().to_vec(),
            ThetaInit::InverseCurvature => match &self.loss {
                LossKind::Quadratic { condition } => Quadratic::ring_conditioned(n, *condition)
                    .curvature
                    .iter()
                    .map(|h| 1.0 / h)
                    .collect(),
                _ => vec![1.0; n],
            },
            ThetaInit::Seeded => {
                let mut rng = self.aux_rng();
                // skip the draws used for embedding targets
                (0..n).for_each(|_| {
                    rng.gen::<f64>();
                });
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
            }
        }
    }

    pub fn build_metric(&self, graph: &ParameterGraph, theta0: &[f64]) -> Result<MetricState> {
        let floor = self.optimizer.flow.g_floor;
        match self.init {
            // explicit per-edge metrics in a graph file win over Gaussian weights
            MetricInit::Weights(beta_w) => match &self.graph {
                GraphSource::File { path } => Ok(read_graph(path)?.into_metric(beta_w, floor)?.1),
                _ => init_weights(graph, beta_w, floor),
            },
            MetricInit::Theta => init_from_theta(graph, theta0, floor),
            MetricInit::Uniform(v) => MetricState::uniform(graph.edge_count(), v, floor),
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::invalid(format!("invalid value {value:?} for {key}"));
        let f = || value.parse::<f64>().map_err(|_| bad());
        let u = || value.parse::<usize>().map_err(|_| bad());
        let b = || match value {
            "true" | "on" | "yes" | "1" => Ok(true),
            "false" | "off" | "no" | "0" => Ok(false),
            _ => Err(bad()),
        };
        let opt = &mut self.optimizer;
        match key {
            "name" => self.name = value.to_string(),
            "graph" => self.graph = parse_graph_source(value)?,
            "loss" => self.loss = parse_loss(value)?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            "intrinsic_dim" => self.intrinsic_dim = Some(u()?),
            "init" => {
                self.init = match value.split_once(':') {
                    Some(("weights", v)) => MetricInit::Weights(v.parse().map_err(|_| bad())?),
                    Some(("uniform", v)) => MetricInit::Uniform(v.parse().map_err(|_| bad())?),
                    None if value == "weights" => MetricInit::Weights(1.0),
                    None if value == "theta" => MetricInit::Theta,
                    _ => return Err(bad()),
                }
            }
            "theta0" => {
                self.theta0 = match value {
                    "zero" => ThetaInit::Zero,
                    "ones" => ThetaInit::Ones,
                    "inverse-curvature" => ThetaInit::InverseCurvature,
                    "seeded" => ThetaInit::Seeded,
                    "graph" => ThetaInit::Graph,
                    _ => return Err(bad()),
                }
            }
            "eps" => self.eps = f()?,
            "max_steps" | "steps" => self.max_steps = u()?,
            "rho" => self.rho = f()?,
            "beta" => opt.flow.beta = f()?,
            "dt" => opt.flow.dt = f()?,
            "g_floor" => opt.flow.g_floor = f()?,
            "integrator" => {
                opt.flow.integrator = match value {
                    "euler" => Integrator::Euler,
                    "rk4" => Integrator::Rk4,
                    _ => return Err(bad()),
                }
            }
            "alpha" => opt.flow.curvature.alpha = f()?,
            "relative_epsilon" => opt.flow.curvature.relative_epsilon = f()?,
            "transport" => {
                opt.flow.curvature.transport = match value {
                    "sinkhorn" => TransportMode::Sinkhorn,
                    "exact" => TransportMode::Exact,
                    _ => return Err(bad()),
                }
            }
            "kappa" => opt.surgery.kappa_thresh = f()?,
            "bn_gamma" => opt.surgery.bn_gamma = f()?,
            "bn_beta" => opt.surgery.bn_beta = f()?,
            "bn_eps" => opt.surgery.bn_eps = f()?,
            "surgery" => opt.surgery_enabled = b()?,
            "geometric" => opt.geometric = b()?,
            "c_n" => opt.c_n = f()?,
            "eta_max" => opt.eta_max = f()?,
            "lr" => {
                opt.lr = match value.split_once(':') {
                    Some(("fixed", v)) => LrPolicy::Fixed(v.parse().map_err(|_| bad())?),
                    None if value == "optimal" => LrPolicy::Optimal,
                    _ => return Err(bad()),
                }
            }
            "coupling" => {
                opt.coupling = match value {
                    "diagonal" => Coupling::Diagonal,
                    "laplacian" => Coupling::Laplacian,
                    _ => return Err(bad()),
                }
            }
            "curvature_mode" => {
                opt.curvature_mode = match value {
                    "ollivier" => CurvatureMode::Ollivier,
                    "hessian-diagonal" => CurvatureMode::HessianDiagonal,
                    _ => return Err(bad()),
                }
            }
            "pinch_ratio" => opt.pinch_ratio = f()?,
            "p_drop" => self.holo.p_drop = f()?,
            "g_newton" => self.holo.g_newton = f()?,
            "hbar" => self.holo.hbar = f()?,
            "eps_quantum" => self.holo.eps_quantum = f()?,
            "region" => {
                self.holo.region = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.trim().parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?
            }
            other => return Err(Error::invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every setting of a key-value config text.
    pub fn apply_config(&mut self, text: &str) -> Result<()> {
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: k + 1,
                message: "expected key = value".into(),
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Parse {
                    line: k + 1,
                    message: e.to_string(),
                })?;
        }
        Ok(())
    }

    pub fn apply_config_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_config(&text)
    }
}

/// Every key understood by [`BenchmarkSpec::set`].
pub const KEYS: &[&str] = &[
    "name",
    "graph",
    "loss",
    "seed",
    "intrinsic_dim",
    "init",
    "theta0",
    "eps",
    "max_steps",
    "rho",
    "beta",
    "dt",
    "g_floor",
    "integrator",
    "alpha",
    "relative_epsilon",
    "transport",
    "kappa",
    "bn_gamma",
    "bn_beta",
    "bn_eps",
    "surgery",
    "geometric",
    "c_n",
    "eta_max",
    "lr",
    "coupling",
    "curvature_mode",
    "pinch_ratio",
    "p_drop",
    "g_newton",
    "hbar",
    "eps_quantum",
    "region",
];

fn parse_graph_source(value: &str) -> Result<GraphSource> {
    let bad = || Error::invalid(format!("invalid graph source {value:?}"));
    let parts: Vec<&str> = value.split(':').collect();
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad());
    Ok(match parts.as_slice() {
        ["file", path] => GraphSource::File {
            path: PathBuf::from(path),
        },
        ["cycle", n] => GraphSource::Cycle { n: num(n)? },
        ["complete", n] => GraphSource::Complete { n: num(n)? },
        ["grid", dims] => {
            let (r, c) = dims.split_once('x').ok_or_else(bad)?;
            GraphSource::Grid {
                rows: num(r)?,
                cols: num(c)?,
            }
        }
        ["random-regular", n, d] => GraphSource::RandomRegular {
            n: num(n)?,
            d: num(d)?,
        },
        ["noisy-ring", n, chords, noise] => GraphSource::NoisyRing {
            n: num(n)?,
            chords: num(chords)?,
            noise: noise.parse().map_err(|_| bad())?,
        },
        _ => return Err(bad()),
    })
}

fn parse_loss(value: &str) -> Result<LossKind> {
    let bad = || Error::invalid(format!("invalid loss {value:?}"));
    Ok(match value.split_once(':') {
        Some(("quadratic", c)) => LossKind::Quadratic {
            condition: c.parse().map_err(|_| bad())?,
        },
        Some(("embedding", list)) => LossKind::SyntheticEmbedding {
            targets: Some(
                list.split(',')
                    .map(|s| s.trim().parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?,
            ),
        },
        None => match value {
            "zero" => LossKind::Zero,
            "quadratic" => LossKind::Quadratic { condition: 1.0 },
            "rosenbrock" => LossKind::RosenbrockSum,
            "embedding" => LossKind::SyntheticEmbedding { targets: None },
            _ => return Err(bad()),
        },
        _ => return Err(bad()),
    })
}

/// Step size of plain gradient descent used as the comparison baseline:
/// `2 / (C_2 L)`.
pub fn baseline_eta(l_lip: f64) -> f64 {
    2.0 / (4.0 * PI * l_lip)
}
