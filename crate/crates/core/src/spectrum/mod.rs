//! Laplacian eigenpairs on metric graphs.
//!
//! Eigenfrequencies `z = √λ` are isolated with an exact counting function
//! (see [`secular::count_below`]), refined on the sign of the secular
//! determinant, and their eigenvectors are read off the null space of the
//! vertex-condition matrix.

pub mod closed_form;
pub mod secular;
pub mod weyl;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{MetricGraph, VertexCondition};
use crate::integrals::EdgeFunction;

pub use closed_form::{closed_form_spectrum, expand_multiplicities, ClosedFormFamily};
pub use secular::{condition_matrix, count_below, secular_determinant};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("K must be at least 1")]
    EmptyRequest,
    #[error("unsupported closed-form family parameters")]
    UnsupportedFamily,
    #[error("root count mismatch: found {found}, expected {expected}")]
    RootCountMismatch { found: usize, expected: usize },
    #[error("eigenvalue {index} escapes the Dirichlet bracket")]
    BracketViolation { index: usize },
    #[error("ill-conditioned null space near z = {z} (multiplicity {multiplicity})")]
    IllConditionedNullSpace { z: f64, multiplicity: usize },
    #[error("could not evaluate the counting function near z = {0}")]
    CountFailure(f64),
    #[error("graph is not a Dirichlet star")]
    NotDirichletStar,
    #[error("degenerate branch: sin(√λ L_{edge}) vanishes")]
    DegenerateBranch { edge: usize },
    #[error("eigenvalue index {0} out of range")]
    IndexOutOfRange(usize),
}

/// One eigenpair; `coeffs[l] = (a, b)` with `φ = a cos(√λ x) + b sin(√λ x)`
/// on edge `l`, or `a + b x` when `λ = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenPair {
    /// 1-based position in the ordered spectrum.
    pub index: usize,
    pub lambda: f64,
    pub coeffs: Vec<(Complex64, Complex64)>,
    pub multiplicity: usize,
}

impl EigenPair {
    pub fn z(&self) -> f64 {
        self.lambda.max(0.0).sqrt()
    }
}

/// First `K` eigenpairs of a graph, immutable once built.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    graph: MetricGraph,
    pairs: Vec<EigenPair>,
}

impl SpectralBasis {
    pub fn graph(&self) -> &MetricGraph {
        &self.graph
    }

    pub fn pairs(&self) -> &[EigenPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.lambda).collect()
    }

    /// Eigenfunction `k` (0-based) restricted to edge `e`.
    pub fn edge_function(&self, k: usize, e: usize) -> EdgeFunction {
        let p = &self.pairs[k];
        let (a, b) = p.coeffs[e];
        EdgeFunction::trig(a, b, p.z())
    }

    pub fn eval(&self, k: usize, e: usize, x: f64) -> Complex64 {
        let p = &self.pairs[k];
        let (a, b) = p.coeffs[e];
        let z = p.z();
        if z == 0.0 {
            a + b * x
        } else {
            a * (z * x).cos() + b * (z * x).sin()
        }
    }

    /// Derivative of eigenfunction `k` along edge `e`.
    pub fn eval_derivative(&self, k: usize, e: usize, x: f64) -> Complex64 {
        let p = &self.pairs[k];
        let (a, b) = p.coeffs[e];
        let z = p.z();
        if z == 0.0 {
            b
        } else {
            z * (b * (z * x).cos() - a * (z * x).sin())
        }
    }

    /// `⟨φ_j, φ_k⟩_{L²}` from closed-form edge integrals.
    pub fn inner(&self, j: usize, k: usize) -> Complex64 {
        self.graph
            .edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| self.edge_function(j, e).conj().mul(&self.edge_function(k, e)).integral(edge.len()))
            .sum()
    }

    pub fn gram_matrix(&self) -> DMatrix<Complex64> {
        let n = self.len();
        let entries: Vec<Complex64> =
            (0..n * n).into_par_iter().map(|idx| self.inner(idx % n, idx / n)).collect();
        DMatrix::from_vec(n, n, entries)
    }

    /// Largest vertex-condition residual of eigenfunction `k`, with
    /// derivative residuals divided by `max(1, √λ)`.
    pub fn vertex_residual(&self, k: usize) -> f64 {
        let g = &self.graph;
        let scale = self.pairs[k].z().max(1.0);
        let mut worst = 0.0f64;
        for (v, vert) in g.vertices().iter().enumerate() {
            let ends = g.incidence(v);
            let value = |end: &crate::graph::EdgeEnd| {
                let x = if end.at_start { 0.0 } else { g.edges()[end.edge].len() };
                self.eval(k, end.edge, x)
            };
            let outgoing = |end: &crate::graph::EdgeEnd| {
                let x = if end.at_start { 0.0 } else { g.edges()[end.edge].len() };
                let d = self.eval_derivative(k, end.edge, x);
                if end.at_start {
                    d
                } else {
                    -d
                }
            };
            match vert.condition {
                VertexCondition::Dirichlet => worst = worst.max(value(&ends[0]).norm()),
                VertexCondition::Neumann => worst = worst.max(outgoing(&ends[0]).norm() / scale),
                VertexCondition::NeumannKirchhoff => {
                    let v0 = value(&ends[0]);
                    for end in &ends[1..] {
                        worst = worst.max((value(end) - v0).norm());
                    }
                    let sum: Complex64 = ends.iter().map(outgoing).sum();
                    worst = worst.max(sum.norm() / scale);
                }
            }
        }
        worst
    }

    /// A basis holding only the first `k` pairs.
    pub fn truncated(&self, k: usize) -> Self {
        Self { graph: self.graph.clone(), pairs: self.pairs[..k.min(self.len())].to_vec() }
    }
}

/// Tuning knobs for [`compute_spectrum_with`].
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Relative width at which a bracket is treated as one cluster.
    pub cluster_width: f64,
    /// Relative tolerance of the final root refinement.
    pub root_tol: f64,
    /// Singular values below `null_tol · σ_max` count as null directions.
    pub null_tol: f64,
    /// The next singular value must exceed `gap_tol · σ_max`.
    pub gap_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { cluster_width: 1e-11, root_tol: 1e-16, null_tol: 1e-8, gap_tol: 1e-11 }
    }
}

pub fn compute_spectrum(g: &MetricGraph, k: usize) -> Result<SpectralBasis, SpectrumError> {
    compute_spectrum_with(g, k, &SolverOptions::default())
}

pub fn compute_spectrum_with(
    g: &MetricGraph,
    k: usize,
    opts: &SolverOptions,
) -> Result<SpectralBasis, SpectrumError> {
    if k == 0 {
        return Err(SpectrumError::EmptyRequest);
    }
    let total = g.total_length();
    let (lmin, lmax) = g
        .edges()
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), e| (a.min(e.len()), b.max(e.len())));

    let mut pairs = zero_modes(g);
    let z_start = robust_point(g, PI / (4.0 * total), PI / (8.0 * total))?;
    let zero_count = count_at(g, z_start)?;
    if zero_count != pairs.len() {
        return Err(SpectrumError::RootCountMismatch { found: pairs.len(), expected: zero_count });
    }

    // upper end of the scan
    let mut z_hi = robust_point(g, PI * (k as f64 + 1.5) / total, 0.1 / total)?;
    let mut n_hi = count_at(g, z_hi)?;
    while n_hi < k {
        z_hi *= 1.5;
        z_hi = robust_point(g, z_hi, 1e-3 * z_hi)?;
        n_hi = count_at(g, z_hi)?;
    }

    let step = PI * lmin / (8.0 * lmax);
    let cells = ((z_hi - z_start) / step).ceil().max(1.0) as usize;
    let h = (z_hi - z_start) / cells as f64;
    let grid: Vec<f64> = (0..=cells)
        .into_par_iter()
        .map(|i| {
            if i == 0 {
                Ok(z_start)
            } else if i == cells {
                Ok(z_hi)
            } else {
                robust_point(g, z_start + i as f64 * h, 0.25 * h)
            }
        })
        .collect::<Result<_, _>>()?;
    let counts: Vec<usize> = grid.par_iter().map(|&z| count_at(g, z)).collect::<Result<_, _>>()?;

    let brackets: Vec<(f64, f64, usize, usize)> = (0..cells)
        .filter(|&i| counts[i + 1] > counts[i])
        .map(|i| (grid[i], grid[i + 1], counts[i], counts[i + 1]))
        .collect();
    let roots: Vec<Vec<(f64, usize)>> = brackets
        .par_iter()
        .map(|&(a, b, na, nb)| isolate(g, a, b, na, nb, opts, 0))
        .collect::<Result<_, _>>()?;

    let expected = n_hi - zero_count;
    let found: usize = roots.iter().flatten().map(|r| r.1).sum();
    if found != expected {
        return Err(SpectrumError::RootCountMismatch { found, expected });
    }

    let clusters: Vec<(f64, usize)> = roots.into_iter().flatten().collect();
    let needed: Vec<(f64, usize)> = {
        let mut acc = pairs.len();
        clusters
            .into_iter()
            .take_while(|&(_, m)| {
                let keep = acc < k;
                acc += m;
                keep
            })
            .collect()
    };
    let vectors: Vec<Vec<Vec<f64>>> =
        needed.par_iter().map(|&(z, m)| null_vectors(g, z, m, opts)).collect::<Result<_, _>>()?;
    for ((z, m), vecs) in needed.iter().zip(vectors) {
        for v in vecs {
            let coeffs = v.chunks(2).map(|c| (Complex64::new(c[0], 0.0), Complex64::new(c[1], 0.0))).collect();
            pairs.push(EigenPair { index: pairs.len() + 1, lambda: z * z, coeffs, multiplicity: *m });
        }
    }
    pairs.truncate(k);

    check_bracket(g, &pairs)?;
    Ok(SpectralBasis { graph: g.clone(), pairs })
}

/// Constant eigenfunctions of components without Dirichlet vertices.
fn zero_modes(g: &MetricGraph) -> Vec<EigenPair> {
    let comps = g.components();
    let comp_edges = g.component_edges();
    let mut out = Vec::new();
    for (vs, es) in comps.iter().zip(&comp_edges) {
        if vs.iter().any(|&v| g.vertices()[v].condition == VertexCondition::Dirichlet) {
            continue;
        }
        let len: f64 = es.iter().map(|&e| g.edges()[e].len()).sum();
        let c = Complex64::new(len.sqrt().recip(), 0.0);
        let coeffs = (0..g.edges().len())
            .map(|e| if es.contains(&e) { (c, Complex64::new(0.0, 0.0)) } else { Default::default() })
            .collect();
        out.push(EigenPair { index: out.len() + 1, lambda: 0.0, coeffs, multiplicity: 0 });
    }
    let m = out.len();
    for p in &mut out {
        p.multiplicity = m;
    }
    out
}

fn count_at(g: &MetricGraph, z: f64) -> Result<usize, SpectrumError> {
    count_below(g, z).ok_or(SpectrumError::CountFailure(z))
}

/// A point within `spread` of `z` where the counting function is reliable.
fn robust_point(g: &MetricGraph, z: f64, spread: f64) -> Result<f64, SpectrumError> {
    const OFFSETS: [f64; 9] = [0.0, 0.137, -0.211, 0.293, -0.359, 0.419, -0.463, 0.071, -0.043];
    OFFSETS
        .iter()
        .map(|o| z + o * spread)
        .find(|&t| t > 0.0 && count_below(g, t).is_some())
        .ok_or(SpectrumError::CountFailure(z))
}

/// Split `(a, b]` (with `na`, `nb` eigenvalues below each end) into
/// clusters `(z, multiplicity)`.
fn isolate(
    g: &MetricGraph,
    a: f64,
    b: f64,
    na: usize,
    nb: usize,
    opts: &SolverOptions,
    depth: usize,
) -> Result<Vec<(f64, usize)>, SpectrumError> {
    let m = nb - na;
    if m == 0 {
        return Ok(Vec::new());
    }
    let det_a = secular_determinant(g, a);
    let det_b = secular_determinant(g, b);
    if m == 1 && det_a * det_b < 0.0 {
        return Ok(vec![(bisect_sign(g, a, b, det_a, opts), 1)]);
    }
    let narrow = b - a <= opts.cluster_width * b.max(1.0);
    let mid = if narrow || depth > 120 {
        None
    } else {
        let c = 0.5 * (a + b);
        robust_point(g, c, 0.2 * (b - a)).ok()
    };
    match mid {
        Some(c) => {
            let nc = count_at(g, c)?;
            let mut left = isolate(g, a, c, na, nc, opts, depth + 1)?;
            left.extend(isolate(g, c, b, nc, nb, opts, depth + 1)?);
            Ok(left)
        }
        None => {
            let z = if m % 2 == 1 && det_a * det_b < 0.0 {
                bisect_sign(g, a, b, det_a, opts)
            } else {
                minimize_sigma(g, a, b, opts)
            };
            Ok(vec![(z, m)])
        }
    }
}

fn bisect_sign(g: &MetricGraph, mut a: f64, mut b: f64, mut det_a: f64, opts: &SolverOptions) -> f64 {
    while b - a > opts.root_tol * b.max(1.0) {
        let c = 0.5 * (a + b);
        if c <= a || c >= b {
            break;
        }
        let d = secular_determinant(g, c);
        if d == 0.0 {
            return c;
        }
        if d * det_a < 0.0 {
            b = c;
        } else {
            a = c;
            det_a = d;
        }
    }
    0.5 * (a + b)
}

fn smallest_singular(g: &MetricGraph, z: f64) -> f64 {
    condition_matrix(g, z).singular_values().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Golden-section search for the minimum of `σ_min(A(z))` on `[a, b]`.
fn minimize_sigma(g: &MetricGraph, mut a: f64, mut b: f64, opts: &SolverOptions) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = smallest_singular(g, c);
    let mut fd = smallest_singular(g, d);
    for _ in 0..200 {
        if b - a <= opts.root_tol * b.max(1.0) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = smallest_singular(g, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = smallest_singular(g, d);
        }
    }
    0.5 * (a + b)
}

/// L²-orthonormal real eigenvectors for the cluster at `z`.
fn null_vectors(g: &MetricGraph, z: f64, m: usize, opts: &SolverOptions) -> Result<Vec<Vec<f64>>, SpectrumError> {
    let a = condition_matrix(g, z);
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let sigma_max = svd.singular_values.max();
    let ill = || SpectrumError::IllConditionedNullSpace { z, multiplicity: m };
    if svd.singular_values[order[m - 1]] > opts.null_tol * sigma_max {
        return Err(ill());
    }
    if let Some(&next) = order.get(m) {
        if svd.singular_values[next] <= opts.gap_tol * sigma_max {
            return Err(ill());
        }
    }
    let lengths = g.lengths();
    let inner = |u: &[f64], v: &[f64]| -> f64 {
        lengths
            .iter()
            .enumerate()
            .map(|(e, &l)| {
                let (a1, b1, a2, b2) = (u[2 * e], u[2 * e + 1], v[2 * e], v[2 * e + 1]);
                let zl = z * l;
                let s2 = (2.0 * zl).sin() / (4.0 * z);
                let cc = 0.5 * l + s2;
                let ss = 0.5 * l - s2;
                let cs = zl.sin().powi(2) / (2.0 * z);
                a1 * a2 * cc + (a1 * b2 + b1 * a2) * cs + b1 * b2 * ss
            })
            .sum()
    };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    for &idx in order.iter().take(m) {
        let mut v: Vec<f64> = v_t.row(idx).iter().cloned().collect();
        for _ in 0..2 {
            for u in &basis {
                let p = inner(u, &v);
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
            }
        }
        let n = inner(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        basis.push(v);
    }
    for v in &mut basis {
        fix_sign(v);
    }
    Ok(basis)
}

/// Make the first non-negligible coefficient positive.
fn fix_sign(v: &mut [f64]) {
    let scale = v.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-10 * scale) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// `λ_{k-r}^{DD} ≤ λ_k ≤ λ_k^{DD}` with `r` the number of non-Dirichlet vertices.
fn check_bracket(g: &MetricGraph, pairs: &[EigenPair]) -> Result<(), SpectrumError> {
    let dd = dirichlet_reference(g, pairs.len());
    let r = g.free_vertex_count();
    for (i, p) in pairs.iter().enumerate() {
        let tol = 1e-9 * p.lambda.max(1.0);
        if p.lambda > dd[i] + tol || (i >= r && p.lambda < dd[i - r] - tol) {
            return Err(SpectrumError::BracketViolation { index: i + 1 });
        }
    }
    Ok(())
}

/// First `k` eigenvalues of the Dirichlet-decoupled edge family.
pub fn dirichlet_reference(g: &MetricGraph, k: usize) -> Vec<f64> {
    let mut all: Vec<f64> = g
        .edges()
        .iter()
        .flat_map(|e| (1..=k).map(move |n| (n as f64 * PI / e.len()).powi(2)))
        .collect();
    all.sort_by(f64::total_cmp);
    all.truncate(k);
    all
}

/// `|a¹_j|²` on the first edge of a Dirichlet star from the continuity
/// relation: `2 Π_{m≠1} sin²(zL_m) / Σ_k L_k Π_{m≠k} sin²(zL_m)`.
///
/// `a¹` is the sine amplitude of eigenfunction `j` (0-based) on edge 1.
pub fn star_normalization(basis: &SpectralBasis, j: usize) -> Result<f64, SpectrumError> {
    let g = basis.graph();
    let (ext, int) = g.classify_vertices();
    let is_star = int.len() == 1
        && ext.len() == g.edges().len()
        && ext.iter().all(|&v| g.vertices()[v].condition == VertexCondition::Dirichlet)
        && g.edges().iter().all(|e| g.degree(e.from) == 1 && e.to == int[0]);
    if !is_star {
        return Err(SpectrumError::NotDirichletStar);
    }
    let pair = basis.pairs().get(j).ok_or(SpectrumError::IndexOutOfRange(j))?;
    let z = pair.z();
    let sines: Vec<f64> = g.edges().iter().map(|e| (z * e.len()).sin()).collect();
    if let Some(edge) = sines.iter().position(|s| s.abs() < 1e-9) {
        return Err(SpectrumError::DegenerateBranch { edge: edge + 1 });
    }
    let prod_except = |k: usize| -> f64 {
        sines.iter().enumerate().filter(|&(m, _)| m != k).map(|(_, s)| s * s).product()
    };
    let denom: f64 = g.edges().iter().enumerate().map(|(k, e)| e.len() * prod_except(k)).sum();
    Ok(2.0 * prod_except(0) / denom)
}

/// Dense vector form of a state's coefficients.
pub fn as_dvector(v: &[Complex64]) -> DVector<Complex64> {
    DVector::from_column_slice(v)
}
