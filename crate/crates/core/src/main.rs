use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use curvflow::curvature::{curvature_csv, curvature_field, TransportMode};
use curvflow::flow::{evolve, trace_csv};
use curvflow::harness::report::{report_json, report_plotdata};
use curvflow::harness::spec::{GraphSource, LossKind, MetricInit, ThetaInit};
use curvflow::harness::{
    compare_baselines, emit_report, run_benchmark, scaling_study, BenchmarkSpec, Format, Method,
    RunReport, ScalingConfig,
};
use curvflow::optimizer::step_csv;
use curvflow::{Error, Execution, Result};

/// Loss-coupled discrete Ricci flow and curvature-aware optimization.
#[derive(Parser)]
#[command(name = "curvflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Edge curvature of the initial metric.
    Curvature(Common),
    /// Integrate the metric flow with parameters held fixed.
    Flow(Common),
    /// Run the meta-optimizer on a benchmark.
    Optimize(Common),
    /// Run a benchmark under the baseline methods.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of geometric, plain-gd, decoupled-flow,
        /// fixed-lr-geometric.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "geometric,plain-gd,decoupled-flow,fixed-lr-geometric"
        )]
        methods: Vec<String>,
    },
    /// Time one flow step on random regular graphs of growing size.
    Scale {
        #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        format: Vec<Format>,
        #[arg(long)]
        serial: bool,
    },
    /// Convert a saved JSON run report into other formats.
    Report {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        format: Vec<Format>,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Built-in benchmark: q1, t1 or k3.
    #[arg(long, default_value = "q1")]
    benchmark: String,
    /// Graph file replacing the benchmark's graph.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Key-value config file applied on top of the benchmark.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Surgery threshold.
    #[arg(long)]
    kappa: Option<f64>,
    /// Output directory; results go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    format: Vec<Format>,
    /// Solve every transport problem exactly.
    #[arg(long)]
    oracle_transport: bool,
    /// Single-threaded, bit-reproducible execution.
    #[arg(long)]
    serial: bool,
}

impl Common {
    fn spec(&self) -> Result<BenchmarkSpec> {
        let mut spec = BenchmarkSpec::preset(&self.benchmark)?;
        if let Some(path) = &self.graph {
            spec.graph = GraphSource::File { path: path.clone() };
            spec.init = MetricInit::Weights(1.0);
            spec.theta0 = ThetaInit::Graph;
            spec.loss = match spec.loss {
                LossKind::SyntheticEmbedding { .. } => {
                    LossKind::SyntheticEmbedding { targets: None }
                }
                other => other,
            };
        }
        if let Some(path) = &self.config {
            spec.apply_config_file(path)?;
        }
        if let Some(v) = self.seed {
            spec.seed = v;
        }
        if let Some(v) = self.steps {
            spec.max_steps = v;
        }
        if let Some(v) = self.eps {
            spec.eps = v;
        }
        if let Some(v) = self.beta {
            spec.optimizer.flow.beta = v;
        }
        if let Some(v) = self.kappa {
            spec.optimizer.surgery.kappa_thresh = v;
        }
        if self.oracle_transport {
            spec.optimizer.flow.curvature.transport = TransportMode::Exact;
        }
        let exec = if self.serial {
            Execution::Serial
        } else {
            Execution::Parallel
        };
        let spec = spec.with_execution(exec);
        spec.validate()?;
        Ok(spec)
    }

    fn formats(&self, default: Format) -> Vec<Format> {
        formats_or(&self.format, default)
    }
}

fn formats_or(given: &[Format], default: Format) -> Vec<Format> {
    if given.is_empty() {
        vec![default]
    } else {
        given.to_vec()
    }
}

/// Writes `contents` to `<out>/<file>` or to stdout.
fn deliver(out: Option<&Path>, file: &str, contents: &str) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            let path = dir.join(file);
            std::fs::write(&path, contents).map_err(|e| io_err(&path, e))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(contents.as_bytes())
                .map_err(|e| io_err(Path::new("<stdout>"), e))
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn emit_run(report: &RunReport, out: Option<&Path>, formats: &[Format]) -> Result<()> {
    match out {
        Some(dir) => {
            for path in emit_report(report, formats, dir)? {
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
        None => {
            for f in formats {
                let text = match f {
                    Format::Json => report_json(report)?,
                    Format::Csv => step_csv(&report.rows),
                    Format::Plotdata => report_plotdata(&report.rows),
                };
                deliver(None, "", &text)?;
            }
            Ok(())
        }
    }
}

/// Returns true when the run diverged.
fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Curvature(c) => {
            let spec = c.spec()?;
            let graph = spec.build_graph()?;
            let theta = spec.build_theta0(&graph);
            let metric = spec.build_metric(&graph, &theta)?;
            let field = curvature_field(&graph, &metric, &spec.optimizer.flow.curvature)?;
            for f in c.formats(Format::Csv) {
                let (file, text) = match f {
                    Format::Json => ("curvature.json", json(&field)?),
                    Format::Csv => ("curvature.csv", curvature_csv(&graph, &metric, &field)),
                    Format::Plotdata => {
                        let mut s = String::from("# edge kappa grad_ric\n");
                        for (e, k) in field.kappa.iter().enumerate() {
                            s.push_str(&format!("{e} {k:e} {:e}\n", field.grad_ric[e]));
                        }
                        ("curvature.dat", s)
                    }
                };
                deliver(c.out.as_deref(), file, &text)?;
            }
            Ok(false)
        }
        Command::Flow(c) => {
            let spec = c.spec()?;
            let graph = spec.build_graph()?;
            let theta = spec.build_theta0(&graph);
            let metric = spec.build_metric(&graph, &theta)?;
            let loss = spec.build_loss(graph.vertex_count())?;
            let mut cfg = spec.optimizer.flow;
            cfg.steps = spec.max_steps;
            let (result, trace) = match evolve(&graph, &metric, &theta, &cfg, loss.as_ref()) {
                Ok(v) => v,
                Err(e @ Error::Blowup { .. }) => {
                    eprintln!("{e}");
                    return Ok(true);
                }
                Err(e) => return Err(e),
            };
            for f in c.formats(Format::Csv) {
                let (file, text) = match f {
                    Format::Json => (
                        "flow.json",
                        json(&serde_json::json!({ "trace": trace, "final_g": result.g() }))?,
                    ),
                    Format::Csv => ("flow.csv", trace_csv(&trace)),
                    Format::Plotdata => {
                        let mut s = String::from("# step t ric_l2 min_g max_g R\n");
                        for r in &trace {
                            s.push_str(&format!(
                                "{} {:e} {:e} {:e} {:e} {:e}\n",
                                r.step, r.t, r.ric_l2, r.min_g, r.max_g, r.r
                            ));
                        }
                        ("flow.dat", s)
                    }
                };
                deliver(c.out.as_deref(), file, &text)?;
            }
            Ok(false)
        }
        Command::Optimize(c) => {
            let spec = c.spec()?;
            let report = run_benchmark(&spec)?;
            emit_run(&report, c.out.as_deref(), &c.formats(Format::Json))?;
            eprintln!(
                "{}: {:?} after {} steps, loss {:e}",
                spec.name, report.status, report.steps, report.final_loss
            );
            Ok(report.diverged())
        }
        Command::Compare { common, methods } => {
            let spec = common.spec()?;
            let methods = methods
                .iter()
                .map(|m| {
                    Method::parse(m)
                        .ok_or_else(|| Error::InvalidInput(format!("unknown method {m:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let table = compare_baselines(&spec, &methods)?;
            for f in common.formats(Format::Csv) {
                let (file, text) = match f {
                    Format::Json => ("compare.json", json(&table)?),
                    Format::Csv | Format::Plotdata => ("compare.csv", table.csv()),
                };
                deliver(common.out.as_deref(), file, &text)?;
            }
            Ok(table
                .rows
                .iter()
                .any(|r| matches!(r.status, curvflow::optimizer::RunStatus::Diverged(_))))
        }
        Command::Scale {
            sizes,
            repeats,
            seed,
            out,
            format,
            serial,
        } => {
            let mut cfg = ScalingConfig {
                sizes,
                repeats,
                seed,
                ..ScalingConfig::default()
            };
            cfg.flow.curvature.execution = if serial {
                Execution::Serial
            } else {
                Execution::Parallel
            };
            let study = scaling_study(&cfg)?;
            for f in formats_or(&format, Format::Csv) {
                let (file, text) = match f {
                    Format::Json => ("scaling.json", json(&study)?),
                    Format::Csv => ("scaling.csv", study.csv()),
                    Format::Plotdata => ("scaling.dat", study.plotdata()),
                };
                deliver(out.as_deref(), file, &text)?;
            }
            match study.slope {
                Some(s) => eprintln!("log-log slope {s:.3}"),
                None => eprintln!("single size, slope undefined"),
            }
            Ok(false)
        }
        Command::Report { input, out, format } => {
            let text = std::fs::read_to_string(&input).map_err(|e| io_err(&input, e))?;
            let report: RunReport = serde_json::from_str(&text)
                .map_err(|e| Error::InvalidInput(format!("{}: {e}", input.display())))?;
            emit_run(&report, out.as_deref(), &formats_or(&format, Format::Csv))?;
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
