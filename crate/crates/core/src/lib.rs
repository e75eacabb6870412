//! Loss-coupled discrete Ricci flow on parameter graphs.

pub mod curvature;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod graph;
pub mod graphio;
pub mod harness;
pub mod loss;
pub mod optimizer;
mod par;
pub mod surgery;
pub mod topology;
pub mod transport;

pub use error::{Error, Result};
pub use par::Execution;
