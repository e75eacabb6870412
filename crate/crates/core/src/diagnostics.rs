//! Scalar diagnostics reported alongside a run: dropout entanglement entropy
//! against a cut-area bound, metric distortion, a robustness bound, a
//! coherence-time bound and a Hessian-determinant temperature.
//!
//! None of these are enforced. Unbounded quantities come back as `None`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::curvature::CurvatureField;
use crate::error::{Error, Result};
use crate::graph::{MetricState, ParameterGraph};
use crate::loss::{finite_difference_hessian, finite_difference_hessian_diagonal, LossOracle};

/// Largest vertex count for which the dense Hessian is formed.
pub const DENSE_HESSIAN_LIMIT: usize = 64;
/// Finite-difference step used for Hessians.
pub const HESSIAN_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoloConfig {
    pub p_drop: f64,
    /// Vertex subset whose boundary is measured. Empty means "first half".
    #[serde(default)]
    pub region: Vec<usize>,
    pub g_newton: f64,
    pub hbar: f64,
    pub eps_quantum: f64,
}

impl Default for HoloConfig {
    fn default() -> Self {
        HoloConfig {
            p_drop: 0.1,
            region: Vec::new(),
            g_newton: 1.0,
            hbar: 1.0,
            eps_quantum: 0.01,
        }
    }
}

impl HoloConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_drop) {
            return Err(Error::invalid("dropout probability must lie in [0, 1]"));
        }
        if !(self.g_newton > 0.0 && self.hbar > 0.0) {
            return Err(Error::invalid("physical constants must be positive"));
        }
        if !(self.eps_quantum > 0.0 && self.eps_quantum < 1.0) {
            return Err(Error::invalid("eps_quantum must lie in (0, 1)"));
        }
        Ok(())
    }

    /// The configured region, or the lower half of the vertex ids.
    pub fn region_for(&self, graph: &ParameterGraph) -> Vec<usize> {
        if self.region.is_empty() {
            (0..graph.vertex_count() / 2).collect()
        } else {
            self.region.clone()
        }
    }
}

/// Binary entropy in nats with `0 ln 0 = 0`.
pub fn entanglement_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
    }
    let h = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    Ok(h(p) + h(1.0 - p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntanglementReport {
    pub s_ent: f64,
    /// Total weight of the edges leaving the region.
    pub area: f64,
    pub bound: f64,
    /// `s_ent / bound`; `None` when the cut is empty.
    pub rho_e: Option<f64>,
    pub satisfied: bool,
}

pub fn entanglement_bound(
    graph: &ParameterGraph,
    metric: &MetricState,
    cfg: &HoloConfig,
) -> Result<EntanglementReport> {
    cfg.validate()?;
    let n = graph.vertex_count();
    let mut inside = vec![false; n];
    for &v in &cfg.region_for(graph) {
        if v >= n {
            return Err(Error::invalid(format!("region vertex {v} out of range")));
        }
        inside[v] = true;
    }
    let count = inside.iter().filter(|&&b| b).count();
    if count == 0 || count == n {
        return Err(Error::BoundaryUndefined(format!(
            "region has {count} of {n} vertices"
        )));
    }
    let area: f64 = graph
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, &(i, j))| inside[i] != inside[j])
        .map(|(e, _)| metric.weight(e))
        .sum();
    let s_ent = entanglement_entropy(cfg.p_drop)?;
    let bound = area / (4.0 * cfg.g_newton);
    Ok(EntanglementReport {
        s_ent,
        area,
        bound,
        rho_e: (bound > 0.0).then(|| s_ent / bound),
        satisfied: s_ent <= bound,
    })
}

/// Mean over vertices of the Euclidean distance between the incident metric
/// components of `current` and `reference`.
pub fn geometric_distortion(
    graph: &ParameterGraph,
    current: &MetricState,
    reference: &MetricState,
) -> Result<f64> {
    if current.len() != graph.edge_count() || reference.len() != graph.edge_count() {
        return Err(Error::invalid("metrics must cover the same edge set"));
    }
    let n = graph.vertex_count();
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = (0..n)
        .map(|i| {
            graph
                .neighbors(i)
                .iter()
                .map(|&(_, e)| {
                    let d = current.g()[e] - reference.g()[e];
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(total / n as f64)
}

/// `2 L rho / sqrt(lambda_min)`; `None` when `lambda_min <= 0`.
pub fn robustness_bound(l_lip: f64, rho: f64, lambda_min: f64) -> Result<Option<f64>> {
    if !(l_lip >= 0.0 && rho >= 0.0) || lambda_min.is_nan() {
        return Err(Error::invalid("robustness inputs must be nonnegative"));
    }
    if lambda_min <= 0.0 {
        return Ok(None);
    }
    Ok(Some(2.0 * l_lip * rho / lambda_min.sqrt()))
}

/// `hbar / sqrt(sum ric^2 vol) * ln(1 / eps)`; `None` for a flat field.
pub fn decoherence_time(
    graph: &ParameterGraph,
    field: &CurvatureField,
    metric: &MetricState,
    cfg: &HoloConfig,
) -> Result<Option<f64>> {
    cfg.validate()?;
    let trace = field.ric_energy(graph, metric);
    if !(trace > 0.0) {
        return Ok(None);
    }
    Ok(Some(cfg.hbar / trace.sqrt() * (1.0 / cfg.eps_quantum).ln()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HawkingTemperature {
    /// `sqrt(|det H|)`.
    pub value: f64,
    /// Sign of `det H`: -1, 0 or 1.
    pub det_sign: i8,
    /// Only the Hessian diagonal was used.
    pub diagonal_approx: bool,
}

fn hessian_matrix(loss: &dyn LossOracle, theta: &[f64]) -> Result<DMatrix<f64>> {
    let n = theta.len();
    let h = finite_difference_hessian(loss, theta, HESSIAN_STEP);
    let m = DMatrix::from_fn(n, n, |i, j| h[i][j]);
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("Hessian has non-finite entries"));
    }
    Ok(m)
}

pub fn hawking_temperature(loss: &dyn LossOracle, theta: &[f64]) -> Result<HawkingTemperature> {
    let (det, diagonal_approx) = if theta.len() > DENSE_HESSIAN_LIMIT {
        let d = finite_difference_hessian_diagonal(loss, theta, HESSIAN_STEP);
        if d.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("Hessian has non-finite entries"));
        }
        (d.iter().product::<f64>(), true)
    } else {
        (hessian_matrix(loss, theta)?.determinant(), false)
    };
    if !det.is_finite() {
        return Err(Error::invalid("Hessian determinant is not finite"));
    }
    let det_sign = if det > 0.0 {
        1
    } else if det < 0.0 {
        -1
    } else {
        0
    };
    Ok(HawkingTemperature {
        value: det.abs().sqrt(),
        det_sign,
        diagonal_approx,
    })
}

/// Smallest eigenvalue of the finite-difference Hessian. Above the dense
/// limit the smallest diagonal entry is returned instead.
pub fn hessian_lambda_min(loss: &dyn LossOracle, theta: &[f64]) -> Result<f64> {
    if theta.is_empty() {
        return Err(Error::invalid("empty parameter vector"));
    }
    if theta.len() > DENSE_HESSIAN_LIMIT {
        let d = finite_difference_hessian_diagonal(loss, theta, HESSIAN_STEP);
        return Ok(d.into_iter().fold(f64::INFINITY, f64::min));
    }
    let eig = SymmetricEigen::new(hessian_matrix(loss, theta)?);
    Ok(eig.eigenvalues.min())
}

/// The block of diagnostics attached to a run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsBlock {
    pub s_ent: f64,
    pub rho_e: Option<f64>,
    pub area: f64,
    pub entanglement_bound_ok: bool,
    pub d_g: f64,
    pub robustness_bound: Option<f64>,
    pub t_coh: Option<f64>,
    pub t_h: f64,
    pub t_h_det_sign: i8,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::Quadratic;
    use approx::assert_relative_eq;

    #[test]
    fn entropy_values() {
        assert_eq!(entanglement_entropy(0.0).unwrap(), 0.0);
        assert_eq!(entanglement_entropy(1.0).unwrap(), 0.0);
        assert!((entanglement_entropy(0.5).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((entanglement_entropy(0.1).unwrap() - 0.325_082_973_391_448).abs() < 1e-12);
        assert!(entanglement_entropy(1.5).is_err());
        assert!(entanglement_entropy(f64::NAN).is_err());
    }

    #[test]
    fn k2_bound() {
        let g = ParameterGraph::from_edges(2, &[(0, 1)]).unwrap();
        let m = MetricState::uniform(1, 1.0, 1e-6).unwrap();
        let cfg = HoloConfig {
            p_drop: 0.5,
            region: vec![0],
            ..HoloConfig::default()
        };
        let r = entanglement_bound(&g, &m, &cfg).unwrap();
        assert_eq!((r.area, r.bound), (1.0, 0.25));
        assert!(!r.satisfied);
        assert_relative_eq!(r.rho_e.unwrap(), 4.0 * 2f64.ln(), epsilon = 1e-12);

        let zero = HoloConfig {
            p_drop: 0.0,
            ..cfg.clone()
        };
        assert!(entanglement_bound(&g, &m, &zero).unwrap().satisfied);

        let full = HoloConfig {
            region: vec![0, 1],
            ..cfg
        };
        assert!(matches!(
            entanglement_bound(&g, &m, &full),
            Err(Error::BoundaryUndefined(_))
        ));
    }

    #[test]
    fn distortion() {
        let g = ParameterGraph::from_edges(2, &[(0, 1)]).unwrap();
        let a = MetricState::uniform(1, 1.0, 1e-6).unwrap();
        let b = MetricState::uniform(1, 3.0, 1e-6).unwrap();
        assert_eq!(geometric_distortion(&g, &a, &a).unwrap(), 0.0);
        assert_eq!(geometric_distortion(&g, &a, &b).unwrap(), 2.0);
        let c = MetricState::uniform(2, 3.0, 1e-6).unwrap();
        assert!(geometric_distortion(&g, &a, &c).is_err());
    }

    #[test]
    fn robustness() {
        assert_eq!(robustness_bound(1.0, 0.1, 4.0).unwrap(), Some(0.1));
        assert_eq!(robustness_bound(1.0, 0.0, 4.0).unwrap(), Some(0.0));
        assert_eq!(robustness_bound(1.0, 0.1, 0.0).unwrap(), None);
        assert_eq!(robustness_bound(1.0, 0.1, -2.0).unwrap(), None);
        assert!(robustness_bound(-1.0, 0.1, 1.0).is_err());
    }

    #[test]
    fn decoherence() {
        let g = ParameterGraph::from_edges(2, &[(0, 1)]).unwrap();
        let m = MetricState::uniform(1, 1.0, 1e-6).unwrap();
        // ric = 1/sqrt(2) at both ends with vol 1: trace 1
        let mut f = CurvatureField::zeros(&g);
        f.ric_vertex = vec![0.5f64.sqrt(); 2];
        let cfg = |eps: f64| HoloConfig {
            eps_quantum: eps,
            ..HoloConfig::default()
        };
        assert_relative_eq!(
            decoherence_time(&g, &f, &m, &cfg((-1f64).exp()))
                .unwrap()
                .unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            decoherence_time(&g, &f, &m, &cfg((-2f64).exp()))
                .unwrap()
                .unwrap(),
            2.0,
            epsilon = 1e-12
        );
        assert_eq!(
            decoherence_time(&g, &CurvatureField::zeros(&g), &m, &cfg(0.5)).unwrap(),
            None
        );

        let k3 = ParameterGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let m3 = MetricState::uniform(3, 1.0, 1e-6).unwrap();
        let f3 = CurvatureField::from_kappa(&k3, &m3, vec![0.5; 3]);
        let t = decoherence_time(&k3, &f3, &m3, &cfg((-1f64).exp()))
            .unwrap()
            .unwrap();
        assert_relative_eq!(t, 1.0 / 1.5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn temperatures() {
        let id = Quadratic::new(vec![1.0; 4]);
        let t = hawking_temperature(&id, &[0.3, -0.2, 1.0, 0.0]).unwrap();
        assert_relative_eq!(t.value, 1.0, epsilon = 1e-6);
        assert_eq!(t.det_sign, 1);

        let q = Quadratic::new(vec![4.0]);
        assert_relative_eq!(
            hawking_temperature(&q, &[0.7]).unwrap().value,
            2.0,
            epsilon = 1e-6
        );

        let saddle = Quadratic::new(vec![1.0, -4.0]);
        let t = hawking_temperature(&saddle, &[0.1, 0.1]).unwrap();
        assert_eq!(t.det_sign, -1);
        assert_relative_eq!(t.value, 2.0, epsilon = 1e-6);

        let big = Quadratic::new(vec![1.0; 80]);
        let t = hawking_temperature(&big, &vec![0.5; 80]).unwrap();
        assert!(t.diagonal_approx);
        assert_relative_eq!(t.value, 1.0, epsilon = 1e-5);
    }

    #[test]
    fn lambda_min_of_quadratic() {
        let q = Quadratic::new(vec![3.0, 0.5, 7.0]);
        assert_relative_eq!(
            hessian_lambda_min(&q, &[1.0, 2.0, 3.0]).unwrap(),
            0.5,
            max_relative = 1e-6
        );
    }
}
