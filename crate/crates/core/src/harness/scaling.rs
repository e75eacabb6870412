//! Per-step wall time against graph size.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{flow_step, FlowConfig, Integrator};
use crate::graph::init_weights;
use crate::harness::generators::random_regular;
use crate::harness::report::least_squares_slope;

/// Published seconds per epoch, `(vertices, ours, standard)`.
pub const REFERENCE_POINTS: [(f64, f64, f64); 4] = [
    (1e3, 8.0, 12.0),
    (1e4, 28.0, 45.0),
    (1e5, 110.0, 210.0),
    (1e6, 400.0, 950.0),
];

/// Coefficient of variation above which a size is flagged for rerun.
pub const NOISE_CV: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub sizes: Vec<usize>,
    pub degree: usize,
    pub repeats: usize,
    pub seed: u64,
    pub flow: FlowConfig,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            sizes: vec![1_000, 10_000, 100_000],
            degree: 4,
            repeats: 3,
            seed: 0,
            flow: FlowConfig {
                integrator: Integrator::Euler,
                ..FlowConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub vertices: usize,
    pub edges: usize,
    pub samples: Vec<f64>,
    pub median: f64,
    pub iqr: f64,
    pub cv: f64,
    pub rerun: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub rows: Vec<ScalingRow>,
    /// Slope of `ln(median seconds)` against `ln(vertices)`; `None` for a
    /// single size.
    pub slope: Option<f64>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(vertices: usize, edges: usize, samples: Vec<f64>) -> ScalingRow {
    let mut s = samples.clone();
    s.sort_by(f64::total_cmp);
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / s.len() as f64;
    let cv = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
    ScalingRow {
        vertices,
        edges,
        median: quantile(&s, 0.5),
        iqr: quantile(&s, 0.75) - quantile(&s, 0.25),
        cv,
        rerun: cv > NOISE_CV,
        samples,
    }
}

/// Times one flow step, curvature included, on seeded random regular graphs.
pub fn scaling_study(cfg: &ScalingConfig) -> Result<ScalingStudy> {
    if cfg.sizes.is_empty() || cfg.repeats == 0 {
        return Err(Error::invalid(
            "scaling study needs at least one size and one repeat",
        ));
    }
    if cfg.sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("sizes must be strictly increasing"));
    }
    cfg.flow.validate()?;
    let mut rows = Vec::new();
    for &n in &cfg.sizes {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ n as u64);
        let graph = random_regular(n, cfg.degree, &mut rng)?;
        let metric = init_weights(&graph, 1.0, cfg.flow.g_floor)?;
        let grad = vec![0.0; n];
        let mut samples = Vec::with_capacity(cfg.repeats);
        for _ in 0..cfg.repeats {
            let t = Instant::now();
            let next = flow_step(&graph, &metric, &grad, &cfg.flow)?;
            samples.push(t.elapsed().as_secs_f64());
            std::hint::black_box(next);
        }
        rows.push(summarize(n, graph.edge_count(), samples));
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| {
            (
                (r.vertices as f64).ln(),
                r.median.max(f64::MIN_POSITIVE).ln(),
            )
        })
        .collect();
    Ok(ScalingStudy {
        slope: least_squares_slope(&pts),
        rows,
    })
}

impl ScalingStudy {
    /// Two whitespace-separated blocks: the measurements, then the reference
    /// overlay, separated by a blank line.
    pub fn plotdata(&self) -> String {
        let mut out = String::from("# vertices edges median_s iqr_s cv rerun\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{} {} {:e} {:e} {:.4} {}\n",
                r.vertices, r.edges, r.median, r.iqr, r.cv, r.rerun as u8
            ));
        }
        out.push_str("\n# reference: vertices ours_s standard_s\n");
        for (n, ours, standard) in REFERENCE_POINTS {
            out.push_str(&format!("{n:e} {ours} {standard}\n"));
        }
        out
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("vertices,edges,median_s,iqr_s,cv,rerun\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:?},{:?},{:?},{}\n",
                r.vertices, r.edges, r.median, r.iqr, r.cv, r.rerun
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let r = summarize(10, 20, vec![3.0, 1.0, 2.0]);
        assert_eq!(r.median, 2.0);
        assert_eq!(r.iqr, 1.0);
        assert!(!r.rerun);
        let noisy = summarize(10, 20, vec![1.0, 1.0, 10.0]);
        assert!(noisy.rerun);
    }

    #[test]
    fn single_size_has_no_slope() {
        let cfg = ScalingConfig {
            sizes: vec![50],
            repeats: 1,
            ..ScalingConfig::default()
        };
        let s = scaling_study(&cfg).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.slope, None);
        assert!(s.plotdata().contains("1e6 400 950"));
        let bad = ScalingConfig {
            sizes: vec![100, 50],
            ..ScalingConfig::default()
        };
        assert!(scaling_study(&bad).is_err());
    }
}
