//! Control operators, their matrix elements in a spectral basis, and the
//! diagnostics attached to them.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::MetricGraph;
use crate::integrals::EdgeFunction;
use crate::spectrum::SpectralBasis;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("control field references unknown edge `{0}`")]
    UnknownEdge(String),
    #[error("unknown control preset `{0}`")]
    UnknownPreset(String),
    #[error("preset `{preset}` does not fit this graph: {reason}")]
    PresetMismatch { preset: String, reason: String },
    #[error("matrix elements are not Hermitian (defect {0:e})")]
    NotHermitian(f64),
    #[error("|u0| = {u0} exceeds 0.1 times the minimum gap {gap}")]
    PerturbationTooLarge { u0: f64, gap: f64 },
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
}

/// `amp · sin(omega x + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineTerm {
    pub amp: f64,
    pub omega: f64,
    pub phase: f64,
}

/// Real profile `Σ c_n x^n + amp sin(omega x + phase)` on one edge.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EdgeProfile {
    #[serde(default)]
    pub poly: Vec<f64>,
    #[serde(default, rename = "sin", skip_serializing_if = "Option::is_none")]
    pub sine: Option<SineTerm>,
}

impl EdgeProfile {
    pub fn is_zero(&self) -> bool {
        self.poly.iter().all(|&c| c == 0.0) && self.sine.is_none_or(|s| s.amp == 0.0)
    }

    pub fn as_function(&self) -> EdgeFunction {
        let mut f = EdgeFunction::polynomial(&self.poly);
        if let Some(s) = self.sine {
            f = f.add(&EdgeFunction::sine(s.amp, s.omega, s.phase));
        }
        f
    }

    pub fn eval(&self, x: f64) -> f64 {
        let p = self.poly.iter().rev().fold(0.0, |acc, c| acc * x + c);
        p + self.sine.map_or(0.0, |s| s.amp * (s.omega * x + s.phase).sin())
    }

    /// `m`-th derivative at `x`.
    pub fn derivative(&self, m: usize, x: f64) -> f64 {
        let mut p = self.poly.clone();
        for _ in 0..m {
            p = (1..p.len()).map(|k| p[k] * k as f64).collect();
        }
        let poly = p.iter().rev().fold(0.0, |acc, c| acc * x + c);
        poly + self.sine.map_or(0.0, |s| {
            s.amp * s.omega.powi(m as i32) * (s.omega * x + s.phase + m as f64 * std::f64::consts::FRAC_PI_2).sin()
        })
    }
}

/// Control description as it appears in a graph document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControlSpec {
    Preset(String),
    PerEdge(BTreeMap<String, EdgeProfile>),
}

/// A bounded symmetric control operator.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlOperator {
    /// Multiplication by a real profile on each edge (indexed like the edges).
    Multiplication(Vec<EdgeProfile>),
    /// `(Bψ)^l(x) = Σ_j (L_j/L_l)^{1/2} x² ψ^j(L_j x / L_l)`, used through its
    /// Hermitian part.
    CrossEdgeQuadratic,
}

impl ControlOperator {
    pub fn from_spec(spec: &ControlSpec, g: &MetricGraph) -> Result<Self, OperatorError> {
        match spec {
            ControlSpec::Preset(name) => preset(name, g),
            ControlSpec::PerEdge(map) => {
                let mut profiles = vec![EdgeProfile::default(); g.edges().len()];
                for (id, prof) in map {
                    let e = g.edge_index(id).ok_or_else(|| OperatorError::UnknownEdge(id.clone()))?;
                    profiles[e] = prof.clone();
                }
                Ok(Self::Multiplication(profiles))
            }
        }
    }

    pub fn constant(g: &MetricGraph, c: f64) -> Self {
        Self::Multiplication(vec![EdgeProfile { poly: vec![c], sine: None }; g.edges().len()])
    }
}

/// Named presets: `thm1.2` (quartic on the first star edge), `thm1.3`
/// (tadpole pair of profiles), `remark6.1` (cross-edge quadratic map).
pub fn preset(name: &str, g: &MetricGraph) -> Result<ControlOperator, OperatorError> {
    let mismatch = |reason: &str| OperatorError::PresetMismatch { preset: name.to_string(), reason: reason.to_string() };
    match name {
        "thm1.2" => {
            let (ext, int) = g.classify_vertices();
            if int.len() != 1 || ext.len() != g.edges().len() || g.edges().iter().any(|e| e.to != int[0]) {
                return Err(mismatch("expects a star with edges oriented leaf to center"));
            }
            let l1 = g.edges()[0].len();
            // (x - L1)^4
            let poly = vec![l1.powi(4), -4.0 * l1.powi(3), 6.0 * l1 * l1, -4.0 * l1, 1.0];
            let mut profiles = vec![EdgeProfile::default(); g.edges().len()];
            profiles[0] = EdgeProfile { poly, sine: None };
            Ok(ControlOperator::Multiplication(profiles))
        }
        "thm1.3" => {
            let lp = g.edges().iter().position(|e| e.is_loop());
            let tail = g.edges().iter().position(|e| !e.is_loop());
            let (Some(lp), Some(tail), 2) = (lp, tail, g.edges().len()) else {
                return Err(mismatch("expects a tadpole"));
            };
            if g.edges()[tail].to != g.edges()[lp].from {
                return Err(mismatch("tail must run from the external vertex to the loop"));
            }
            let l1 = g.edges()[lp].len();
            let l2 = g.edges()[tail].len();
            let mut profiles = vec![EdgeProfile::default(); 2];
            profiles[lp] = EdgeProfile {
                poly: vec![0.0, -l1, 1.0],
                sine: Some(SineTerm { amp: 1.0, omega: 2.0 * std::f64::consts::PI / l1, phase: 0.0 }),
            };
            profiles[tail] = EdgeProfile { poly: vec![l2 * l2 + 2.0 * l1 * l2, -2.0 * (l1 + l2), 1.0], sine: None };
            Ok(ControlOperator::Multiplication(profiles))
        }
        "remark6.1" => Ok(ControlOperator::CrossEdgeQuadratic),
        other => Err(OperatorError::UnknownPreset(other.to_string())),
    }
}

/// Truncated Hermitian matrix `B_{j,k} = ⟨φ_j, Bφ_k⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlMatrix {
    data: DMatrix<Complex64>,
}

impl ControlMatrix {
    /// Wrap a matrix after checking Hermiticity to `1e-12` of its scale; the
    /// stored matrix is the exact Hermitian part.
    pub fn new(m: DMatrix<Complex64>) -> Result<Self, OperatorError> {
        if m.nrows() != m.ncols() {
            return Err(OperatorError::Dimension(m.nrows(), m.ncols()));
        }
        let adj = m.adjoint();
        let scale = m.iter().fold(1.0f64, |s, x| s.max(x.norm()));
        let defect = (&m - &adj).iter().fold(0.0f64, |s, x| s.max(x.norm()));
        if defect > 1e-12 * scale {
            return Err(OperatorError::NotHermitian(defect));
        }
        Ok(Self { data: (m + adj) * Complex64::new(0.5, 0.0) })
    }

    pub fn from_real(m: DMatrix<f64>) -> Result<Self, OperatorError> {
        Self::new(m.map(|x| Complex64::new(x, 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        self.data[(j, k)]
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    pub fn is_real(&self) -> bool {
        self.data.iter().all(|x| x.im == 0.0)
    }

    pub fn real_part(&self) -> DMatrix<f64> {
        self.data.map(|x| x.re)
    }

    pub fn truncated(&self, k: usize) -> Self {
        Self { data: self.data.view((0, 0), (k, k)).into_owned() }
    }

    /// Spectral norm.
    pub fn norm(&self) -> f64 {
        SymmetricEigen::new(self.data.clone()).eigenvalues.iter().fold(0.0f64, |s, x| s.max(x.abs()))
    }
}

/// `⟨φ_j, Bφ_k⟩` for all `j, k < K` from closed-form edge integrals.
pub fn matrix_elements(op: &ControlOperator, basis: &SpectralBasis) -> Result<ControlMatrix, OperatorError> {
    let n = basis.len();
    let g = basis.graph();
    let lens = g.lengths();
    let entries: Vec<Complex64> = match op {
        ControlOperator::Multiplication(profiles) => {
            if profiles.len() != g.edges().len() {
                return Err(OperatorError::Dimension(profiles.len(), g.edges().len()));
            }
            let fields: Vec<Option<EdgeFunction>> =
                profiles.iter().map(|p| (!p.is_zero()).then(|| p.as_function())).collect();
            (0..n * n)
                .into_par_iter()
                .map(|idx| {
                    let (j, k) = (idx % n, idx / n);
                    fields
                        .iter()
                        .enumerate()
                        .filter_map(|(e, f)| f.as_ref().map(|f| (e, f)))
                        .map(|(e, f)| {
                            basis.edge_function(j, e).conj().mul(f).mul(&basis.edge_function(k, e)).integral(lens[e])
                        })
                        .sum()
                })
                .collect()
        }
        ControlOperator::CrossEdgeQuadratic => {
            let x2 = EdgeFunction::polynomial(&[0.0, 0.0, 1.0]);
            let raw: Vec<Complex64> = (0..n * n)
                .into_par_iter()
                .map(|idx| {
                    let (j, k) = (idx % n, idx / n);
                    let mut s = Complex64::new(0.0, 0.0);
                    for (l, &ll) in lens.iter().enumerate() {
                        let left = basis.edge_function(j, l).conj().mul(&x2);
                        for (m, &lm) in lens.iter().enumerate() {
                            let right = basis.edge_function(k, m).rescale(lm / ll);
                            s += left.mul(&right).integral(ll) * (lm / ll).sqrt();
                        }
                    }
                    s
                })
                .collect();
            let m = DMatrix::from_vec(n, n, raw);
            let herm = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
            return ControlMatrix::new(herm);
        }
    };
    ControlMatrix::new(DMatrix::from_vec(n, n, entries))
}

/// Fit of `|B_{1,j}| j^{p}` over `j ≤ K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingFit {
    pub exponent: f64,
    pub c_fit: f64,
    /// 1-based index attaining the minimum.
    pub argmin: usize,
    /// 1-based indices with `|B_{1,j}| ≤ 1e-14`.
    pub violations: Vec<usize>,
}

/// `C_fit = min_j |B_{1,j}| j^{exponent}`; pass `2 + η` or `4 + ε`.
pub fn assumption_i1_check(m: &ControlMatrix, exponent: f64) -> CouplingFit {
    let mut c_fit = f64::INFINITY;
    let mut argmin = 1;
    let mut violations = Vec::new();
    for j in 0..m.dim() {
        let b = m.get(0, j).norm();
        if b <= 1e-14 {
            violations.push(j + 1);
        }
        let v = b * ((j + 1) as f64).powf(exponent);
        if v < c_fit {
            c_fit = v;
            argmin = j + 1;
        }
    }
    CouplingFit { exponent, c_fit, argmin, violations }
}

/// A resonant quadruple `(j,k),(l,m)` (0-based) whose B-differences fail to split it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Quadruple {
    pub j: usize,
    pub k: usize,
    pub l: usize,
    pub m: usize,
}

/// Default cap on the brute-force quadruple scan.
pub const I2_BRUTE_CAP: usize = 40;

/// Quadruples with `|(λ_j−λ_k) − (λ_l−λ_m)| < tol·λ_K` but
/// `|(B_jj−B_kk) − (B_ll−B_mm)| ≤ tol·λ_K`, over ordered pairs `j > k`,
/// `l > m`, `(j,k) ≠ (l,m)` listed once with `(j,k) < (l,m)`.
pub fn assumption_i2_check(m: &ControlMatrix, lambdas: &[f64], tol: f64) -> Vec<Quadruple> {
    let k = lambdas.len().min(m.dim());
    if k <= I2_BRUTE_CAP {
        i2_brute(m, &lambdas[..k], tol)
    } else {
        i2_sorted(m, &lambdas[..k], tol)
    }
}

fn i2_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|j| (0..j).map(move |k| (j, k))).collect()
}

fn i2_test(m: &ControlMatrix, lambdas: &[f64], abs_tol: f64, p: (usize, usize), q: (usize, usize)) -> Option<Quadruple> {
    let d_lambda = (lambdas[p.0] - lambdas[p.1]) - (lambdas[q.0] - lambdas[q.1]);
    if d_lambda.abs() >= abs_tol {
        return None;
    }
    let b = |i: usize| m.get(i, i).re;
    let d_b = (b(p.0) - b(p.1)) - (b(q.0) - b(q.1));
    (d_b.abs() <= abs_tol).then_some(Quadruple { j: p.0, k: p.1, l: q.0, m: q.1 })
}

/// Exhaustive scan.
pub fn i2_brute(m: &ControlMatrix, lambdas: &[f64], tol: f64) -> Vec<Quadruple> {
    let abs_tol = tol * lambdas.last().copied().unwrap_or(1.0).abs().max(1.0);
    let pairs = i2_pairs(lambdas.len());
    let mut out = Vec::new();
    for (a, &p) in pairs.iter().enumerate() {
        for &q in &pairs[a + 1..] {
            out.extend(i2_test(m, lambdas, abs_tol, p, q));
        }
    }
    out.sort_by_key(|q| (q.j, q.k, q.l, q.m));
    out
}

/// Same result as [`i2_brute`], sorting pair differences and sweeping windows.
pub fn i2_sorted(m: &ControlMatrix, lambdas: &[f64], tol: f64) -> Vec<Quadruple> {
    let abs_tol = tol * lambdas.last().copied().unwrap_or(1.0).abs().max(1.0);
    let mut pairs: Vec<(f64, (usize, usize))> =
        i2_pairs(lambdas.len()).into_iter().map(|p| (lambdas[p.0] - lambdas[p.1], p)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    for a in 0..pairs.len() {
        for b in a + 1..pairs.len() {
            if pairs[b].0 - pairs[a].0 >= abs_tol {
                break;
            }
            let (p, q) = if pairs[a].1 < pairs[b].1 { (pairs[a].1, pairs[b].1) } else { (pairs[b].1, pairs[a].1) };
            out.extend(i2_test(m, lambdas, abs_tol, p, q));
        }
    }
    out.sort_by_key(|q| (q.j, q.k, q.l, q.m));
    out
}

/// Eigenvalues of `diag(λ) + u0 B` with first-order residuals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbedSpectrum {
    pub u0: f64,
    pub eigenvalues: Vec<f64>,
    /// `λ_k^{u0} − λ_k − u0 B_kk`.
    pub residuals: Vec<f64>,
}

pub fn perturbed_spectrum(lambdas: &[f64], m: &ControlMatrix, u0: f64) -> Result<PerturbedSpectrum, OperatorError> {
    let n = lambdas.len();
    if m.dim() != n {
        return Err(OperatorError::Dimension(m.dim(), n));
    }
    let gap = lambdas.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if u0.abs() > 0.1 * gap {
        return Err(OperatorError::PerturbationTooLarge { u0, gap });
    }
    let mut h = m.matrix() * Complex64::new(u0, 0.0);
    for (i, &l) in lambdas.iter().enumerate() {
        h[(i, i)] += l;
    }
    let mut eigenvalues: Vec<f64> = if m.is_real() {
        SymmetricEigen::new(h.map(|x| x.re)).eigenvalues.iter().cloned().collect()
    } else {
        SymmetricEigen::new(h).eigenvalues.iter().cloned().collect()
    };
    eigenvalues.sort_by(f64::total_cmp);
    let residuals = eigenvalues
        .iter()
        .zip(lambdas)
        .enumerate()
        .map(|(k, (e, l))| e - l - u0 * m.get(k, k).re)
        .collect();
    Ok(PerturbedSpectrum { u0, eigenvalues, residuals })
}

/// Least-squares slope of `log|r_k(u0)|` against `log|u0|`.
pub fn perturbation_slope(lambdas: &[f64], m: &ControlMatrix, k: usize, u0s: &[f64]) -> Result<f64, OperatorError> {
    let pts: Vec<(f64, f64)> = u0s
        .iter()
        .map(|&u| perturbed_spectrum(lambdas, m, u).map(|p| (u.abs().ln(), p.residuals[k].abs().ln())))
        .collect::<Result<_, _>>()?;
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx).powi(2)));
    Ok(num / den)
}

/// Order of vanishing of each edge profile at each internal vertex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VanishingReport {
    /// `(vertex index, edge index, order)`; `None` for an identically zero profile.
    pub entries: Vec<(usize, usize, Option<usize>)>,
    /// Smallest finite order over internal vertices, `None` if all are zero.
    pub min_order: Option<usize>,
}

/// Number of leading derivatives of the field that vanish at internal
/// vertices, capped at `max_order`.
pub fn boundary_vanishing_orders(op: &ControlOperator, g: &MetricGraph, max_order: usize) -> VanishingReport {
    let ControlOperator::Multiplication(profiles) = op else {
        return VanishingReport { entries: Vec::new(), min_order: None };
    };
    let (_, internal) = g.classify_vertices();
    let mut entries = Vec::new();
    for &v in &internal {
        for end in g.incidence(v) {
            let p = &profiles[end.edge];
            let order = if p.is_zero() {
                None
            } else {
                let x = if end.at_start { 0.0 } else { g.edges()[end.edge].len() };
                let scale = 1.0 + p.poly.iter().fold(0.0f64, |s, c| s.max(c.abs()));
                Some((0..=max_order).find(|&m| p.derivative(m, x).abs() > 1e-12 * scale).unwrap_or(max_order + 1))
            };
            entries.push((v, end.edge, order));
        }
    }
    let min_order = entries.iter().filter_map(|e| e.2).min();
    VanishingReport { entries, min_order }
}
