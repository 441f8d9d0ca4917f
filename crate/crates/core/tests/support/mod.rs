//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use qgraph::graph::{MetricGraph, VertexCondition};

/// Number of eigenvalues below `sigma` of the lumped-mass three-point
/// discretization with about `per_unit` cells per unit length.
///
/// Counts negative pivots of `K − σM` (Sylvester inertia): interior nodes of
/// each edge are eliminated first, the remaining vertex block is dense.
pub fn fd_count(g: &MetricGraph, per_unit: usize, sigma: f64) -> usize {
    let nv = g.vertices().len();
    let free: Vec<bool> = g.vertices().iter().map(|v| v.condition != VertexCondition::Dirichlet).collect();
    let mut schur = DMatrix::<f64>::zeros(nv, nv);
    let mut negative = 0usize;
    for e in g.edges() {
        let n = ((e.len() * per_unit as f64).ceil() as usize).max(2);
        let h = e.len() / n as f64;
        let (u, v) = (e.from, e.to);
        let end_diag = 1.0 / h - sigma * h / 2.0;
        schur[(u, u)] += end_diag;
        schur[(v, v)] += end_diag;
        // interior nodes 1..n-1
        let d = 2.0 / h - sigma * h;
        let off = -1.0 / h;
        let mut pivot = d;
        let mut couple_u = off;
        for i in 1..n {
            if pivot < 0.0 {
                negative += 1;
            }
            schur[(u, u)] -= couple_u * couple_u / pivot;
            if i + 1 < n {
                let next_couple = -off * couple_u / pivot;
                let next_pivot = d - off * off / pivot;
                couple_u = next_couple;
                pivot = next_pivot;
            } else {
                schur[(v, v)] -= off * off / pivot;
                let cross = -couple_u * off / pivot;
                schur[(u, v)] += cross;
                schur[(v, u)] += cross;
            }
        }
    }
    let idx: Vec<usize> = (0..nv).filter(|&i| free[i]).collect();
    if idx.is_empty() {
        return negative;
    }
    let block = DMatrix::from_fn(idx.len(), idx.len(), |i, j| schur[(idx[i], idx[j])]);
    let eig = SymmetricEigen::new(block).eigenvalues;
    negative + eig.iter().filter(|&&x| x < 0.0).count()
}

/// The `k`-th (1-based) discrete eigenvalue by bisection on [`fd_count`].
pub fn fd_eigenvalue(g: &MetricGraph, per_unit: usize, k: usize) -> f64 {
    let mut hi = 1.0;
    while fd_count(g, per_unit, hi) < k {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    if fd_count(g, per_unit, lo) >= k {
        return 0.0;
    }
    lo = -1e-9;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if fd_count(g, per_unit, mid) >= k {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Two-level Richardson extrapolation of an `O(h²)` sequence on `n, 2n, 4n`.
pub fn fd_extrapolated(g: &MetricGraph, per_unit: usize, k: usize) -> f64 {
    let a = fd_eigenvalue(g, per_unit, k);
    let b = fd_eigenvalue(g, 2 * per_unit, k);
    let c = fd_eigenvalue(g, 4 * per_unit, k);
    let r1 = (4.0 * b - a) / 3.0;
    let r2 = (4.0 * c - b) / 3.0;
    (16.0 * r2 - r1) / 15.0
}

/// Composite Gauss–Legendre (5 points) on `panels` panels of `[0, len]`.
pub fn gauss(f: impl Fn(f64) -> Complex64, len: f64, panels: usize) -> Complex64 {
    let a = (10.0f64 / 7.0).sqrt();
    let x1 = (5.0 - 2.0 * a).sqrt() / 3.0;
    let x2 = (5.0 + 2.0 * a).sqrt() / 3.0;
    let w1 = (322.0 + 13.0 * 70f64.sqrt()) / 900.0;
    let w2 = (322.0 - 13.0 * 70f64.sqrt()) / 900.0;
    let xs = [-x2, -x1, 0.0, x1, x2];
    let ws = [w2, w1, 128.0 / 225.0, w1, w2];
    let h = len / panels as f64;
    let mut s = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for (x, w) in xs.iter().zip(ws) {
            s += f(mid + 0.5 * h * x) * w;
        }
    }
    s * (0.5 * h)
}

/// Closed form of `⟨φ_1, (x−L₁)⁴ φ_j⟩` on a Dirichlet star, up to the sign of
/// the two eigenfunctions on the first edge: `√a₁ √a_j B_j(L₁)`.
///
/// `G(w, x) = (−6wx + w³x³ + 6 sin wx)/w⁵`, `B_j = 2G(w₁−w_j) − 2G(w₁+w_j)`;
/// the diagonal uses `(30wx − 20w³x³ + 4w⁵x⁵ − 15 sin 2wx)/(40w⁵)`.
pub fn star_quartic_element(lengths: &[f64], lambda_1: f64, lambda_j: f64, diagonal: bool) -> f64 {
    let weight = |lambda: f64| {
        let z = lambda.sqrt();
        let s2: Vec<f64> = lengths.iter().map(|l| (z * l).sin().powi(2)).collect();
        let except = |k: usize| -> f64 { s2.iter().enumerate().filter(|&(m, _)| m != k).map(|(_, v)| v).product() };
        let denom: f64 = lengths.iter().enumerate().map(|(k, l)| l * except(k)).sum();
        2.0 * except(0) / denom
    };
    let x = lengths[0];
    let w1 = lambda_1.sqrt();
    let b = if diagonal {
        let w = w1;
        (30.0 * w * x - 20.0 * (w * x).powi(3) + 4.0 * (w * x).powi(5) - 15.0 * (2.0 * w * x).sin()) / (40.0 * w.powi(5))
    } else {
        let g = |w: f64| (-6.0 * w * x + (w * x).powi(3) + 6.0 * (w * x).sin()) / w.powi(5);
        let wj = lambda_j.sqrt();
        2.0 * g(w1 - wj) - 2.0 * g(w1 + wj)
    };
    weight(lambda_1).sqrt() * weight(lambda_j).sqrt() * b
}
