//! Benchmarks, baselines, the scaling study and report emission.

pub mod baselines;
pub mod generators;
pub mod report;
pub mod scaling;
pub mod spec;

pub use baselines::{compare_baselines, Comparison, Method};
pub use report::{emit_report, run_benchmark, Format, RunReport};
pub use scaling::{scaling_study, ScalingConfig, ScalingStudy};
pub use spec::BenchmarkSpec;
