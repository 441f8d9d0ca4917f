//! Weyl-type bounds `C₁k² ≤ λ_k ≤ C₂k²` and interlacing checks.

use std::f64::consts::PI;

use serde::Serialize;

use crate::graph::{EdgeLength, GraphError, MetricGraph, VertexCondition};

/// Fitted and a priori constants for `λ_k / k²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeylFit {
    pub k_min: usize,
    pub k_max: usize,
    /// `min λ_k / k²` over the range.
    pub fitted_low: f64,
    /// `max λ_k / k²` over the range.
    pub fitted_high: f64,
    /// A priori interval `[C₁, C₂]` derived from the Dirichlet bracket.
    pub c1: f64,
    pub c2: f64,
}

impl WeylFit {
    pub fn within_bounds(&self) -> bool {
        self.c1 <= self.fitted_low && self.fitted_high <= self.c2
    }
}

/// Constants of the bracket `π²(k−r)²/L² ≤ λ_k ≤ π²(k+N)²/L²` for `k ≥ k_min`,
/// with `L` the total length, `N` the edge count and `r` the number of
/// non-Dirichlet vertices.
pub fn a_priori_constants(g: &MetricGraph, k_min: usize) -> (f64, f64) {
    let total = g.total_length();
    let r = g.free_vertex_count() as f64;
    let n = g.edges().len() as f64;
    let k = k_min as f64;
    let c1 = (PI * (1.0 - r / k).max(0.0) / total).powi(2);
    let c2 = (PI * (1.0 + n / k) / total).powi(2);
    (c1, c2)
}

/// Fit over `k_min ≤ k ≤ lambdas.len()` (1-based).
pub fn weyl_fit(g: &MetricGraph, lambdas: &[f64], k_min: usize) -> WeylFit {
    let k_min = k_min.max(1);
    let ratios: Vec<f64> =
        lambdas.iter().enumerate().skip(k_min - 1).map(|(i, l)| l / ((i + 1) as f64).powi(2)).collect();
    let fitted_low = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let fitted_high = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (c1, c2) = a_priori_constants(g, k_min);
    WeylFit { k_min, k_max: lambdas.len(), fitted_low, fitted_high, c1, c2 }
}

/// Indices `k` (1-based) where `λ_k ≤ μ_{k+shift} ≤ λ_{k+1}` fails.
pub fn interlacing_violations(lambdas: &[f64], mus: &[f64], shift: usize, rel_tol: f64) -> Vec<usize> {
    (0..lambdas.len().saturating_sub(1))
        .filter(|&i| i + shift < mus.len())
        .filter(|&i| {
            let mu = mus[i + shift];
            let tol = rel_tol * mu.abs().max(1.0);
            mu < lambdas[i] - tol || mu > lambdas[i + 1] + tol
        })
        .map(|i| i + 1)
        .collect()
}

/// The tadpole opened at `v`: loop end freed with a Neumann vertex, giving a
/// path of length `L₁ + L₂` with the tail's external condition at one end.
pub fn tadpole_opened(loop_len: EdgeLength, tail_len: EdgeLength, tail: VertexCondition) -> Result<MetricGraph, GraphError> {
    MetricGraph::from_specs(
        &[("n", VertexCondition::Neumann), ("v", VertexCondition::NeumannKirchhoff), ("w", tail)],
        &[("e1", "n", "v", loop_len), ("e2", "w", "v", tail_len)],
        false,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bracket_holds_for_closed_forms() {
        let g = MetricGraph::interval(EdgeLength::ratio(1, 1), VertexCondition::Dirichlet, VertexCondition::Neumann).unwrap();
        let l: Vec<f64> = (1..=50).map(|k| ((2 * k - 1) as f64 * PI / 2.0).powi(2)).collect();
        let fit = weyl_fit(&g, &l, 2);
        assert!(fit.within_bounds(), "{fit:?}");
    }

    #[test]
    fn interlacing_detects_violation() {
        let a = [1.0, 2.0, 3.0];
        assert!(interlacing_violations(&a, &[1.5, 2.5], 0, 1e-12).is_empty());
        assert_eq!(interlacing_violations(&a, &[0.5, 2.5], 0, 1e-12), vec![1]);
    }
}
