//! Range-verified spectral gap constants, class partitions and small-divisor
//! diagnostics.

use std::f64::consts::PI;
use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use crate::graph::{al_status, AlStatus, EdgeLength, GraphError, MetricGraph, VertexCondition};
use crate::spectrum::{compute_spectrum, SpectrumError};

/// Constants at or below this value are treated as vanishing.
pub const MIN_CONSTANT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GapError {
    #[error("eigenvalue {0} coincides with its successor; collapse multiplicities first")]
    Repeated(usize),
    #[error("need at least {needed} eigenvalues, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("M must be at least 1")]
    ZeroM,
    #[error("class {class} has {size} members, more than M = {m}")]
    ClassTooLarge { class: usize, size: usize, m: usize },
    #[error("class invariant violated between indices {0} and {1}")]
    ClassInvariant(usize, usize),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GapViolation {
    /// `inf_k (λ_{k+M} − λ_k)/M` at or below [`MIN_CONSTANT`].
    UniformGap { delta: f64, index: usize },
    /// No `d̃` on the grid gives `C_fit` above [`MIN_CONSTANT`].
    PolynomialGap { best_c_fit: f64 },
    /// Declared edge lengths with a rational ratio (1-based edge indices).
    RationalLengths { pairs: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    #[serde(rename = "M")]
    pub m: usize,
    pub delta: f64,
    pub d_tilde: Option<f64>,
    #[serde(rename = "C_fit")]
    pub c_fit: f64,
    /// 1-based index of the tightest one-step gap at the reported `d̃`.
    pub worst_index: usize,
    /// Checked 1-based index range.
    pub range: (usize, usize),
    pub violations: Vec<GapViolation>,
    /// Original index → collapsed index (identity when nothing collapsed).
    pub collapse_map: Vec<usize>,
}

/// The grid `{0, 0.1, …, 3.0}`.
pub fn d_tilde_grid() -> impl Iterator<Item = f64> {
    (0..=30).map(|i| i as f64 / 10.0)
}

/// Merge eigenvalues closer than `rel_tol · max(1, |λ|)`.
pub fn collapse(lambdas: &[f64], rel_tol: f64) -> (Vec<f64>, Vec<usize>) {
    let mut values: Vec<f64> = Vec::new();
    let mut map = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        match values.last() {
            Some(&last) if (l - last).abs() <= rel_tol * l.abs().max(1.0) => {}
            _ => values.push(l),
        }
        map.push(values.len() - 1);
    }
    (values, map)
}

/// Fit the uniform gap `δ` and the smallest polynomial exponent `d̃`
/// over the given range.
pub fn fit_gap_constants(lambdas: &[f64], m: usize) -> Result<GapReport, GapError> {
    if m == 0 {
        return Err(GapError::ZeroM);
    }
    let n = lambdas.len();
    if n < m + 2 {
        return Err(GapError::TooShort { needed: m + 2, got: n });
    }
    let gaps: Vec<f64> = lambdas.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some(i) = gaps.iter().position(|&g| g <= 0.0) {
        return Err(GapError::Repeated(i + 1));
    }
    let (delta_index, delta) = (0..n - m)
        .map(|k| (k, (lambdas[k + m] - lambdas[k]) / m as f64))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });

    // |λ_{k+1} − λ_k| ≥ C k^{−d̃/(M−1)}
    let c_for = |d: f64| -> (f64, usize) {
        let p = if m > 1 { d / (m - 1) as f64 } else { 0.0 };
        gaps.iter()
            .enumerate()
            .map(|(k, g)| (g * ((k + 1) as f64).powf(p), k + 1))
            .fold((f64::INFINITY, 0), |acc, x| if x.0 < acc.0 { x } else { acc })
    };
    let mut violations = Vec::new();
    if delta <= MIN_CONSTANT {
        violations.push(GapViolation::UniformGap { delta, index: delta_index + 1 });
    }
    let found = d_tilde_grid().map(|d| (d, c_for(d))).find(|(_, (c, _))| *c > MIN_CONSTANT);
    let (d_tilde, c_fit, worst_index) = match found {
        Some((d, (c, w))) => (Some(d), c, w),
        None => {
            let (c, w) = c_for(3.0);
            violations.push(GapViolation::PolynomialGap { best_c_fit: c });
            (None, c, w)
        }
    };
    Ok(GapReport {
        m,
        delta,
        d_tilde,
        c_fit,
        worst_index,
        range: (1, n),
        violations,
        collapse_map: (0..n).collect(),
    })
}

/// Collapse multiplicities, then fit.
pub fn fit_gap_collapsed(lambdas: &[f64], m: usize, rel_tol: f64) -> Result<GapReport, GapError> {
    let (values, map) = collapse(lambdas, rel_tol);
    let mut report = fit_gap_constants(&values, m)?;
    report.collapse_map = map;
    Ok(report)
}

/// Smallest `M ≤ max_m` with no violations, else the report for `max_m`.
pub fn fit_gap_auto(lambdas: &[f64], max_m: usize) -> Result<GapReport, GapError> {
    let mut last = None;
    for m in 1..=max_m.max(1) {
        let r = fit_gap_constants(lambdas, m)?;
        if r.violations.is_empty() {
            return Ok(r);
        }
        last = Some(r);
    }
    Ok(last.expect("at least one M tried"))
}

/// Gap analysis of a graph spectrum: collapse multiplicities, fit with the
/// given `M` (or the smallest admissible `M ≤ max_m`), and add a violation
/// when the declared lengths have a rational ratio.
pub fn analyze_graph_gaps(
    g: &MetricGraph,
    lambdas: &[f64],
    m: Option<usize>,
    max_m: usize,
) -> Result<GapReport, GapError> {
    let (values, map) = collapse(lambdas, 1e-10);
    let mut report = match m {
        Some(m) => fit_gap_constants(&values, m)?,
        None => fit_gap_auto(&values, max_m)?,
    };
    report.collapse_map = map;
    let exprs: Vec<_> = g.edges().iter().map(|e| e.length.expr.clone()).collect();
    let al = al_status(&exprs);
    if !al.ratios_irrational {
        let pairs = al.rational_pairs.iter().map(|&(a, b)| (a + 1, b + 1)).collect();
        report.violations.push(GapViolation::RationalLengths { pairs });
    }
    Ok(report)
}

/// Contiguous classes `E_m` of indices (0-based ranges).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassPartition {
    pub classes: Vec<Range<usize>>,
}

impl ClassPartition {
    pub fn sizes(&self) -> Vec<usize> {
        self.classes.iter().map(|r| r.len()).collect()
    }

    pub fn class_of(&self, k: usize) -> Option<usize> {
        self.classes.iter().position(|r| r.contains(&k))
    }
}

/// Greedy grouping: a new class starts whenever the next gap is at least `δ`.
///
/// Checks post hoc that members of a class are within `δ(M−1)`, members of
/// different classes at least `δ` apart, and no class exceeds `M` members.
pub fn partition_classes(lambdas: &[f64], delta: f64, m: usize) -> Result<ClassPartition, GapError> {
    if m == 0 {
        return Err(GapError::ZeroM);
    }
    let mut classes = Vec::new();
    let mut start = 0;
    for k in 1..=lambdas.len() {
        if k == lambdas.len() || lambdas[k] - lambdas[k - 1] >= delta {
            classes.push(start..k);
            start = k;
        }
    }
    for (c, r) in classes.iter().enumerate() {
        if r.len() > m {
            return Err(GapError::ClassTooLarge { class: c, size: r.len(), m });
        }
    }
    let part = ClassPartition { classes };
    let spread = delta * (m - 1) as f64;
    for (c, r) in part.classes.iter().enumerate() {
        if r.len() > 1 && lambdas[r.end - 1] - lambdas[r.start] >= spread {
            return Err(GapError::ClassInvariant(r.start, r.end - 1));
        }
        if let Some(next) = part.classes.get(c + 1) {
            // classes are ordered, so the nearest pair is adjacent
            if lambdas[next.start] - lambdas[r.end - 1] < delta {
                return Err(GapError::ClassInvariant(r.end - 1, next.start));
            }
        }
    }
    Ok(part)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallDivisorReport {
    pub c_eps: f64,
    /// 1-based root index and 1-based edge index of the minimum.
    pub argmin: (usize, usize),
    pub al: AlStatus,
    /// Set when the declared lengths have a rational ratio or `C_ε` vanishes.
    pub flagged: bool,
}

/// `C_ε = min_{n, l} |cos(ω_n L_l)| ω_n^{1+ε}`.
pub fn small_divisor_check(omegas: &[f64], lengths: &[EdgeLength], epsilon: f64) -> SmallDivisorReport {
    let mut c_eps = f64::INFINITY;
    let mut argmin = (0, 0);
    for (n, &w) in omegas.iter().enumerate() {
        for (l, len) in lengths.iter().enumerate() {
            let v = (w * len.value).cos().abs() * w.powf(1.0 + epsilon);
            if v < c_eps {
                c_eps = v;
                argmin = (n + 1, l + 1);
            }
        }
    }
    let exprs: Vec<_> = lengths.iter().map(|l| l.expr.clone()).collect();
    let al = al_status(&exprs);
    let flagged = !al.ratios_irrational || c_eps <= MIN_CONSTANT;
    SmallDivisorReport { c_eps, argmin, al, flagged }
}

/// First `count` distinct positive roots of `Σ_l sin(ωL_l) Π_{m≠l} cos(ωL_m)`,
/// which are the nonzero eigenfrequencies of the star with Neumann leaves.
pub fn neumann_star_roots(lengths: &[EdgeLength], count: usize) -> Result<Vec<f64>, GapError> {
    let g = MetricGraph::star(lengths, VertexCondition::Neumann)?;
    let mut k = count + 2;
    loop {
        let basis = compute_spectrum(&g, k)?;
        let (distinct, _) = collapse(&basis.lambdas(), 1e-12);
        let roots: Vec<f64> = distinct.into_iter().filter(|&l| l > 0.0).map(f64::sqrt).collect();
        if roots.len() >= count {
            return Ok(roots[..count].to_vec());
        }
        k += count;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergedGapReport {
    pub c: f64,
    /// 1-based index in the merged sequence.
    pub argmin: usize,
    pub rational_ratio: bool,
    pub flagged: bool,
}

/// Minimum of `(μ_{k+1} − μ_k) k^ε` over the first `k_max` members of the
/// merged, reordered Dirichlet spectra `{n²π²/L²}` of both families.
pub fn merged_dirichlet_gap(family1: &[EdgeLength], family2: &[EdgeLength], epsilon: f64, k_max: usize) -> MergedGapReport {
    let mut merged: Vec<f64> = family1
        .iter()
        .chain(family2)
        .flat_map(|l| (1..=k_max).map(move |n| (n as f64 * PI / l.value).powi(2)))
        .collect();
    merged.sort_by(f64::total_cmp);
    merged.truncate(k_max);
    let (c, argmin) = merged
        .windows(2)
        .enumerate()
        .map(|(k, w)| ((w[1] - w[0]) * ((k + 1) as f64).powf(epsilon), k + 1))
        .fold((f64::INFINITY, 0), |acc, x| if x.0 < acc.0 { x } else { acc });
    let rational_ratio = family1.iter().any(|a| {
        family2.iter().any(|b| a.expr.canonical().radicand == b.expr.canonical().radicand)
    });
    MergedGapReport { c, argmin, rational_ratio, flagged: rational_ratio || c <= MIN_CONSTANT }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squares_have_uniform_gap() {
        let l: Vec<f64> = (1..=50).map(|k| (k * k) as f64).collect();
        let r = fit_gap_constants(&l, 1).unwrap();
        assert_eq!(r.delta, 3.0);
        assert_eq!(r.d_tilde, Some(0.0));
        assert_eq!(r.c_fit, 3.0);
        assert!(r.violations.is_empty());
        let p = partition_classes(&l, 3.0, 1).unwrap();
        assert!(p.sizes().iter().all(|&s| s == 1));
    }

    #[test]
    fn interleaved_sequence() {
        let l: Vec<f64> = (1..=30).flat_map(|k| [(k * k) as f64, (k * k) as f64 + (-(k as f64)).exp()]).collect();
        let r1 = fit_gap_constants(&l, 1).unwrap();
        assert!(!r1.violations.is_empty());
        let r2 = fit_gap_constants(&l, 2).unwrap();
        assert!(r2.delta > 0.1);
    }

    #[test]
    fn small_grouping_example() {
        let p = partition_classes(&[0.0, 0.1, 5.0, 10.0], 1.0, 2).unwrap();
        assert_eq!(p.classes, vec![0..2, 2..3, 3..4]);
        assert!(matches!(partition_classes(&[0.0, 0.1, 0.2], 1.0, 2), Err(GapError::ClassTooLarge { .. })));
    }

    #[test]
    fn repeated_values_rejected() {
        assert_eq!(fit_gap_constants(&[1.0, 2.0, 2.0, 3.0], 1), Err(GapError::Repeated(2)));
        let r = fit_gap_collapsed(&[1.0, 2.0, 2.0, 3.0, 5.0], 1, 1e-12).unwrap();
        assert_eq!(r.collapse_map, vec![0, 1, 1, 2, 3]);
    }

    #[test]
    fn merged_gap_examples() {
        let one = [EdgeLength::ratio(1, 1)];
        assert_eq!(merged_dirichlet_gap(&one, &one, 0.5, 100).c, 0.0);
        let two = [EdgeLength::ratio(2, 1)];
        let r = merged_dirichlet_gap(&one, &two, 0.5, 100);
        assert!(r.flagged && r.c == 0.0);
        let r = merged_dirichlet_gap(&one, &[EdgeLength::sqrt(2)], 0.5, 500);
        assert!(r.c > 0.0 && !r.flagged);
    }

    #[test]
    fn interval_divisors_grow() {
        let one = [EdgeLength::ratio(1, 1)];
        let roots: Vec<f64> = (1..=10).map(|n| n as f64 * PI).collect();
        let r = small_divisor_check(&roots, &one, 0.1);
        assert_eq!(r.argmin, (1, 1));
        assert!((r.c_eps - PI.powf(1.1)).abs() < 1e-12);
    }
}
