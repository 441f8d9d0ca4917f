//! Vertex-condition matrix, its determinant, and exact eigenvalue counting.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::graph::{EdgeEnd, MetricGraph, VertexCondition};

/// Relative sine threshold below which an edge is treated as resonant.
const SINE_GUARD: f64 = 1e-9;
/// Relative eigenvalue threshold of the Dirichlet-to-Neumann matrix.
const DTN_GUARD: f64 = 1e-11;

fn value_row(row: &mut [f64], g: &MetricGraph, end: EdgeEnd, z: f64, sign: f64) {
    let e = end.edge;
    if end.at_start {
        row[2 * e] += sign;
    } else {
        let zl = z * g.edges()[e].len();
        row[2 * e] += sign * zl.cos();
        row[2 * e + 1] += sign * zl.sin();
    }
}

/// Outgoing derivative divided by `z`.
fn slope_row(row: &mut [f64], g: &MetricGraph, end: EdgeEnd, z: f64) {
    let e = end.edge;
    if end.at_start {
        row[2 * e + 1] += 1.0;
    } else {
        let zl = z * g.edges()[e].len();
        row[2 * e] += zl.sin();
        row[2 * e + 1] -= zl.cos();
    }
}

/// The `2N × 2N` homogeneous system in `(a_l, b_l)` for `z > 0`.
pub fn condition_matrix(g: &MetricGraph, z: f64) -> DMatrix<f64> {
    let n = 2 * g.edges().len();
    let mut m = DMatrix::zeros(n, n);
    let mut r = 0;
    let mut row = vec![0.0; n];
    let mut push = |row: &mut Vec<f64>, m: &mut DMatrix<f64>| {
        for (c, v) in row.iter_mut().enumerate() {
            m[(r, c)] = *v;
            *v = 0.0;
        }
        r += 1;
    };
    for (v, vert) in g.vertices().iter().enumerate() {
        let ends = g.incidence(v);
        match vert.condition {
            VertexCondition::Dirichlet => {
                value_row(&mut row, g, ends[0], z, 1.0);
                push(&mut row, &mut m);
            }
            VertexCondition::Neumann => {
                slope_row(&mut row, g, ends[0], z);
                push(&mut row, &mut m);
            }
            VertexCondition::NeumannKirchhoff => {
                for &end in &ends[1..] {
                    value_row(&mut row, g, end, z, 1.0);
                    value_row(&mut row, g, ends[0], z, -1.0);
                    push(&mut row, &mut m);
                }
                for &end in ends {
                    slope_row(&mut row, g, end, z);
                }
                push(&mut row, &mut m);
            }
        }
    }
    m
}

/// Determinant of [`condition_matrix`]; its positive zeros are the `√λ`.
pub fn secular_determinant(g: &MetricGraph, z: f64) -> f64 {
    condition_matrix(g, z).determinant()
}

/// Number of eigenvalues `< z²`, or `None` when `z` is too close to an
/// eigenvalue or to an edge Dirichlet frequency for a reliable answer.
///
/// Uses `N(z²) = Σ_e #{k ≥ 1 : kπ/L_e < z} + n₊(M(z))`, where `M` is the
/// Dirichlet-to-Neumann matrix on the non-Dirichlet vertices (scaled by `1/z`).
pub fn count_below(g: &MetricGraph, z: f64) -> Option<usize> {
    if !(z > 0.0) {
        return Some(0);
    }
    let mut base = 0usize;
    for e in g.edges() {
        let zl = z * e.len();
        if zl.sin().abs() < SINE_GUARD * zl.max(1.0) {
            return None;
        }
        base += (zl / std::f64::consts::PI).floor() as usize;
    }
    let free: Vec<usize> = (0..g.vertices().len())
        .filter(|&v| g.vertices()[v].condition != VertexCondition::Dirichlet)
        .collect();
    if free.is_empty() {
        return Some(base);
    }
    let mut slot = vec![usize::MAX; g.vertices().len()];
    for (i, &v) in free.iter().enumerate() {
        slot[v] = i;
    }
    let mut m = DMatrix::<f64>::zeros(free.len(), free.len());
    for e in g.edges() {
        let zl = z * e.len();
        if e.is_loop() {
            let i = slot[e.from];
            if i != usize::MAX {
                m[(i, i)] += 2.0 * (zl / 2.0).tan();
            }
            continue;
        }
        let (cot, csc) = (zl.cos() / zl.sin(), 1.0 / zl.sin());
        let (a, b) = (slot[e.from], slot[e.to]);
        if a != usize::MAX {
            m[(a, a)] -= cot;
        }
        if b != usize::MAX {
            m[(b, b)] -= cot;
        }
        if a != usize::MAX && b != usize::MAX {
            m[(a, b)] += csc;
            m[(b, a)] += csc;
        }
    }
    let scale = m.iter().fold(1.0f64, |s, x| s.max(x.abs()));
    let eig = SymmetricEigen::new(m).eigenvalues;
    if eig.iter().any(|mu| mu.abs() < DTN_GUARD * scale) {
        return None;
    }
    Some(base + eig.iter().filter(|&&mu| mu > 0.0).count())
}
