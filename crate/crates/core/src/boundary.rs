//! Boundary-layer map from a transport boundary source `p(x, μ)` to the
//! Dirichlet datum `q(x)` of the diffusion problems.
//!
//! For isotropic scattering in 3D the map weighs the source with Chandrasekhar's
//! H-function, `q = ∫₀¹ p(μ) H(μ) μ/2 dμ`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::quadrature::gauss_legendre_on;

/// Iteration cap for the H-equation.
const MAX_ITERATIONS: usize = 10_000;

/// H-function tabulated on Gauss–Legendre nodes of `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HFunction {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
    pub albedo: f64,
    pub iterations: usize,
}

impl HFunction {
    /// Evaluates `H(μ)` anywhere on `[0, 1]` through the equation itself.
    pub fn eval(&self, mu: f64) -> f64 {
        1.0 / self.inverse_rhs(mu, &self.values)
    }

    fn inverse_rhs(&self, mu: f64, h: &[f64]) -> f64 {
        let w = self.albedo;
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .zip(h)
            .map(|((&m, &wt), &hj)| wt * m * hj / (mu + m))
            .sum();
        (1.0 - w).max(0.0).sqrt() + 0.5 * w * sum
    }

    /// `∫₀¹ H(μ) μⁿ dμ` by the node rule.
    pub fn moment(&self, n: i32) -> f64 {
        self.nodes.iter().zip(&self.weights).zip(&self.values).map(|((&m, &w), &h)| w * h * m.powi(n)).sum()
    }

    /// Two-column text table `μ H(μ)`, including the end points.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# mu H(mu), albedo {}", self.albedo);
        let _ = writeln!(s, "{:.17e} {:.17e}", 0.0, self.eval(0.0));
        for (m, h) in self.nodes.iter().zip(&self.values) {
            let _ = writeln!(s, "{m:.17e} {h:.17e}");
        }
        let _ = writeln!(s, "{:.17e} {:.17e}", 1.0, self.eval(1.0));
        s
    }
}

/// Solves
///
/// ```text
/// 1/H(μ) = √(1-ω) + (ω/2) ∫₀¹ μ' H(μ') / (μ + μ') dμ'
/// ```
///
/// by fixed-point iteration from `H ≡ 1`. At `ω = 1` the plain iteration
/// settles into a two-cycle, so every update is averaged with the previous
/// iterate.
pub fn compute_h_function(albedo: f64, n_nodes: usize, tol: f64) -> Result<HFunction> {
    if !(albedo > 0.0 && albedo <= 1.0) {
        return Err(Error::invalid(format!("albedo must lie in (0, 1], got {albedo}")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if n_nodes < 2 {
        return Err(Error::invalid("need at least two nodes"));
    }
    let (nodes, weights) = gauss_legendre_on(n_nodes, 0.0, 1.0);
    let mut h = HFunction { values: vec![1.0; n_nodes], nodes, weights, albedo, iterations: 0 };
    let mut next = vec![0.0; n_nodes];
    for it in 1..=MAX_ITERATIONS {
        let mut change: f64 = 0.0;
        for (i, slot) in next.iter_mut().enumerate() {
            let updated = 1.0 / h.inverse_rhs(h.nodes[i], &h.values);
            *slot = 0.5 * (updated + h.values[i]);
            change = change.max((*slot - h.values[i]).abs());
        }
        std::mem::swap(&mut h.values, &mut next);
        if !change.is_finite() {
            break;
        }
        if change <= tol {
            h.iterations = it;
            return Ok(h);
        }
    }
    Err(Error::numerical(
        format!("H-function iteration stagnated after {MAX_ITERATIONS} iterates"),
        f64::NAN,
    ))
}

/// How the angular source is reduced to a scalar datum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceMapMode {
    /// `q = ∫ p H μ/2 dμ`.
    Chandrasekhar,
    /// Same weighting normalized so that a direction-independent source maps
    /// to itself.
    #[default]
    IsotropicIdentity,
}

/// Evaluates `q(x)` for a boundary source `p(x, μ)` at the boundary point `x`.
pub fn map_boundary_source<P>(p: P, h: &HFunction, mode: SourceMapMode, x: Vec3) -> Result<f64>
where
    P: Fn(Vec3, f64) -> f64,
{
    let samples: Vec<f64> = h.nodes.iter().map(|&mu| p(x, mu)).collect();
    if let Some(bad) = samples.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::invalid(format!("boundary source must be non-negative, got {bad} at {x:?}")));
    }
    let kernel: Vec<f64> = h.nodes.iter().zip(&h.weights).zip(&h.values).map(|((&m, &w), &hv)| w * hv * m / 2.0).collect();
    let weighted: f64 = samples.iter().zip(&kernel).map(|(p, k)| p * k).sum();
    Ok(match mode {
        SourceMapMode::Chandrasekhar => weighted,
        SourceMapMode::IsotropicIdentity => {
            if samples.iter().all(|&v| v == samples[0]) {
                samples[0]
            } else {
                weighted / kernel.iter().sum::<f64>()
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h_at_zero_is_one() {
        for albedo in [0.3, 0.9, 1.0] {
            let h = compute_h_function(albedo, 48, 1e-13).unwrap();
            assert!((h.eval(0.0) - 1.0).abs() < 1e-10, "{albedo}: {}", h.eval(0.0));
        }
    }

    #[test]
    fn h_is_non_decreasing() {
        let h = compute_h_function(1.0, 64, 1e-13).unwrap();
        assert!(h.values.windows(2).all(|w| w[1] >= w[0]));
        assert!(h.eval(1.0) >= *h.values.last().unwrap());
    }

    #[test]
    fn zeroth_moment_for_partial_albedo() {
        // ∫H = 2(1 - √(1-ω))/ω.
        let w: f64 = 0.6;
        let h = compute_h_function(w, 64, 1e-14).unwrap();
        let expect = 2.0 * (1.0 - (1.0 - w).sqrt()) / w;
        assert!((h.moment(0) - expect).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(compute_h_function(0.0, 16, 1e-10).is_err());
        assert!(compute_h_function(1.2, 16, 1e-10).is_err());
        assert!(compute_h_function(1.0, 16, 0.0).is_err());
    }

    #[test]
    fn source_map_modes() {
        let h = compute_h_function(1.0, 64, 1e-14).unwrap();
        let x = [0.0; 3];
        assert_eq!(map_boundary_source(|_, _| 0.0, &h, SourceMapMode::Chandrasekhar, x).unwrap(), 0.0);
        assert_eq!(map_boundary_source(|_, _| 0.7, &h, SourceMapMode::IsotropicIdentity, x).unwrap(), 0.7);
        let q = map_boundary_source(|_, _| 1.0, &h, SourceMapMode::Chandrasekhar, x).unwrap();
        assert!((q - 1.0 / 3f64.sqrt()).abs() < 1e-10);
        assert!(map_boundary_source(|_, mu| mu - 0.5, &h, SourceMapMode::Chandrasekhar, x).is_err());
        // Linear and monotone.
        let a = map_boundary_source(|_, mu| mu, &h, SourceMapMode::Chandrasekhar, x).unwrap();
        let b = map_boundary_source(|_, mu| 1.0 + 2.0 * mu, &h, SourceMapMode::Chandrasekhar, x).unwrap();
        assert!((b - (q + 2.0 * a)).abs() < 1e-13);
        assert!(b > a);
    }

    #[test]
    fn table_round_trips_node_values() {
        let h = compute_h_function(1.0, 8, 1e-13).unwrap();
        let text = h.to_text();
        let rows: Vec<Vec<f64>> = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.split_whitespace().map(|t| t.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[3][1], h.values[2]);
    }
}
