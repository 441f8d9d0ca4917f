//! Divided-difference blocks and minimum-norm solutions of trigonometric
//! moment problems `∫₀^T u(t) e^{iω_k t} dt = x_k` with real `u`.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaps::{fit_gap_auto, ClassPartition};

/// Gram matrices above this condition number are refused.
pub const MAX_CONDITION: f64 = 1e12;
/// Minimum number of samples per frequency on the export grid.
pub const SAMPLES_PER_MODE: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("nodes {0} and {1} of a class coincide")]
    CoincidentNodes(usize, usize),
    #[error("partition covers {covered} indices but {expected} were given")]
    PartitionMismatch { covered: usize, expected: usize },
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("frequencies must be nonnegative and strictly increasing (index {0})")]
    Frequencies(usize),
    #[error("target for the zero frequency must be real, imaginary part {0:e}")]
    AsymmetricTarget(f64),
    #[error("horizon must be positive, got {0}")]
    Horizon(f64),
    #[error("Gram matrix condition number {0:e} exceeds the limit")]
    IllConditioned(f64),
    #[error("Gram factorization failed after jitter")]
    Factorization,
}

/// `∫₀^T e^{iwt} dt`.
pub fn exp_integral(w: f64, t: f64) -> Complex64 {
    let x = 0.5 * w * t;
    let sinc = if x.abs() < 1e-4 { 1.0 - x * x / 6.0 + x.powi(4) / 120.0 } else { x.sin() / x };
    Complex64::from_polar(t * sinc, x)
}

/// Triangular divided-difference matrix of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct DividedDifferenceBlock {
    pub class: usize,
    /// 0-based index of the first node in the full sequence.
    pub start: usize,
    pub nodes: Vec<f64>,
    pub matrix: DMatrix<f64>,
}

impl DividedDifferenceBlock {
    /// `F_{j,k} = Π_{l≠j, l≤k} (h_j − h_l)^{−1}` for `j ≤ k`.
    pub fn new(class: usize, start: usize, nodes: Vec<f64>) -> Result<Self, MomentError> {
        let n = nodes.len();
        for a in 0..n {
            for b in a + 1..n {
                if nodes[a] == nodes[b] {
                    return Err(MomentError::CoincidentNodes(start + a, start + b));
                }
            }
        }
        let matrix = DMatrix::from_fn(n, n, |j, k| {
            if j > k {
                0.0
            } else {
                (0..=k).filter(|&l| l != j).map(|l| 1.0 / (nodes[j] - nodes[l])).product()
            }
        });
        Ok(Self { class, start, nodes, matrix })
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    /// Newton-form inverse: `(F^{−1})_{k,j} = Π_{l<k} (h_j − h_l)` for `k ≤ j`.
    pub fn inverse(&self) -> DMatrix<f64> {
        let h = &self.nodes;
        DMatrix::from_fn(h.len(), h.len(), |k, j| if k > j { 0.0 } else { (0..k).map(|l| h[j] - h[l]).product() })
    }

    /// Squared Frobenius norm `tr(F^T F)`.
    pub fn trace_norm(&self) -> f64 {
        self.matrix.iter().map(|v| v * v).sum()
    }
}

pub fn build_blocks(lambdas: &[f64], partition: &ClassPartition) -> Result<Vec<DividedDifferenceBlock>, MomentError> {
    let covered: usize = partition.classes.iter().map(|r| r.len()).sum();
    let contiguous = partition.classes.windows(2).all(|w| w[0].end == w[1].start)
        && partition.classes.first().is_none_or(|r| r.start == 0);
    if covered != lambdas.len() || !contiguous {
        return Err(MomentError::PartitionMismatch { covered, expected: lambdas.len() });
    }
    partition
        .classes
        .iter()
        .enumerate()
        .map(|(m, r)| DividedDifferenceBlock::new(m, r.start, lambdas[r.clone()].to_vec()))
        .collect()
}

/// Blockwise `F(Λ) x`.
pub fn apply_f(blocks: &[DividedDifferenceBlock], x: &[Complex64]) -> Result<Vec<Complex64>, MomentError> {
    let n: usize = blocks.iter().map(DividedDifferenceBlock::size).sum();
    if n != x.len() {
        return Err(MomentError::Length(n, x.len()));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for b in blocks {
        for j in 0..b.size() {
            out[b.start + j] = (0..b.size()).map(|k| x[b.start + k] * b.matrix[(j, k)]).sum();
        }
    }
    Ok(out)
}

/// `C₃` with `‖F x‖²_{ℓ²} ≤ C₃ ‖x‖²_{h^{d̃}}`: the largest block trace norm
/// weighted by the smallest index in the block raised to `−2d̃`.
pub fn block_trace_bound(blocks: &[DividedDifferenceBlock], d_tilde: f64) -> f64 {
    blocks
        .iter()
        .map(|b| b.trace_norm() * ((b.start + 1) as f64).powf(-2.0 * d_tilde))
        .fold(0.0, f64::max)
}

/// `(Σ_k |k^s x_k|²)^{1/2}` with 1-based `k`.
pub fn weighted_norm(x: &[Complex64], s: f64) -> f64 {
    x.iter().enumerate().map(|(k, v)| v.norm_sqr() * ((k + 1) as f64).powf(2.0 * s)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentProblem {
    /// Nonnegative, strictly increasing.
    pub frequencies: Vec<f64>,
    pub targets: Vec<Complex64>,
    pub horizon: f64,
    /// Uniform gap used for the horizon warning; fitted when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

impl MomentProblem {
    pub fn new(frequencies: Vec<f64>, targets: Vec<Complex64>, horizon: f64) -> Self {
        Self { frequencies, targets, horizon, delta: None }
    }

    fn validate(&self) -> Result<(), MomentError> {
        if self.frequencies.len() != self.targets.len() {
            return Err(MomentError::Length(self.frequencies.len(), self.targets.len()));
        }
        if !(self.horizon > 0.0) {
            return Err(MomentError::Horizon(self.horizon));
        }
        if let Some(&w) = self.frequencies.first() {
            if w < 0.0 {
                return Err(MomentError::Frequencies(0));
            }
        }
        if let Some(i) = self.frequencies.windows(2).position(|w| w[1] <= w[0]) {
            return Err(MomentError::Frequencies(i + 1));
        }
        if self.frequencies.first() == Some(&0.0) {
            let x = self.targets[0];
            if x.im.abs() > 1e-14 * x.norm().max(1.0) {
                return Err(MomentError::AsymmetricTarget(x.im));
            }
        }
        Ok(())
    }

    /// `{±ω_k}` with conjugate targets, dropping the mirror of `ω = 0`.
    pub fn extended(&self) -> (Vec<f64>, Vec<Complex64>) {
        let mut freqs = Vec::with_capacity(2 * self.frequencies.len());
        let mut targets = Vec::with_capacity(freqs.capacity());
        for (&w, &x) in self.frequencies.iter().zip(&self.targets).rev() {
            if w > 0.0 {
                freqs.push(-w);
                targets.push(x.conj());
            }
        }
        for (&w, &x) in self.frequencies.iter().zip(&self.targets) {
            freqs.push(w);
            targets.push(if w == 0.0 { Complex64::new(x.re, 0.0) } else { x });
        }
        (freqs, targets)
    }
}

/// Real control `u(t) = Σ_j c_j e^{−iλ_j t}` on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    pub frequencies: Vec<f64>,
    pub coefficients: Vec<Complex64>,
    pub horizon: f64,
    /// `u` on a uniform grid including both endpoints.
    pub samples: Vec<f64>,
    /// Largest `|Im u|` seen on the grid.
    pub max_imag: f64,
    /// `ℓ²` distance between the moments of `u` and the targets.
    pub residual: f64,
    pub condition: f64,
    pub warnings: Vec<String>,
}

impl ControlSignal {
    pub fn zero(horizon: f64) -> Self {
        Self {
            frequencies: Vec::new(),
            coefficients: Vec::new(),
            horizon,
            samples: vec![0.0; SAMPLES_PER_MODE],
            max_imag: 0.0,
            residual: 0.0,
            condition: 1.0,
            warnings: Vec::new(),
        }
    }

    pub fn eval_complex(&self, t: f64) -> Complex64 {
        self.frequencies.iter().zip(&self.coefficients).map(|(&w, &c)| c * Complex64::from_polar(1.0, -w * t)).sum()
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_complex(t).re
    }

    /// `∫₀^T u(t) e^{iωt} dt` in closed form.
    pub fn moment(&self, omega: f64) -> Complex64 {
        self.frequencies.iter().zip(&self.coefficients).map(|(&w, &c)| c * exp_integral(omega - w, self.horizon)).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        let mut s = Complex64::new(0.0, 0.0);
        for (&wa, &ca) in self.frequencies.iter().zip(&self.coefficients) {
            for (&wb, &cb) in self.frequencies.iter().zip(&self.coefficients) {
                s += ca.conj() * cb * exp_integral(wa - wb, self.horizon);
            }
        }
        s.re.max(0.0).sqrt()
    }

    pub fn sample_times(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.samples.len();
        (0..n).map(move |i| self.horizon * i as f64 / (n - 1) as f64)
    }

    fn resample(&mut self, n: usize) {
        let n = n.max(2);
        let times: Vec<f64> = (0..n).map(|i| self.horizon * i as f64 / (n - 1) as f64).collect();
        let vals: Vec<Complex64> = times.par_iter().map(|&t| self.eval_complex(t)).collect();
        self.max_imag = vals.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        self.samples = vals.iter().map(|v| v.re).collect();
    }

    /// Pointwise sum on the same horizon; equal frequencies are merged.
    pub fn sum(&self, other: &ControlSignal) -> ControlSignal {
        let mut out = self.clone();
        for (&w, &c) in other.frequencies.iter().zip(&other.coefficients) {
            match out.frequencies.iter().position(|&v| v == w) {
                Some(i) => out.coefficients[i] += c,
                None => {
                    out.frequencies.push(w);
                    out.coefficients.push(c);
                }
            }
        }
        out.warnings.extend(other.warnings.iter().cloned());
        out.condition = self.condition.max(other.condition);
        out.residual = f64::NAN;
        let n = self.samples.len().max(other.samples.len());
        out.resample(n);
        out
    }

    pub fn scaled(&self, s: f64) -> ControlSignal {
        let mut out = self.clone();
        out.coefficients.iter_mut().for_each(|c| *c *= s);
        out.samples.iter_mut().for_each(|v| *v *= s);
        out.max_imag *= s.abs();
        out
    }
}

/// Hermitian Gram matrix `G_{kj} = ∫₀^T e^{i(λ_k − λ_j)t} dt`.
pub fn gram_matrix(freqs: &[f64], horizon: f64) -> DMatrix<Complex64> {
    let n = freqs.len();
    let entries: Vec<Complex64> =
        (0..n * n).into_par_iter().map(|i| exp_integral(freqs[i % n] - freqs[i / n], horizon)).collect();
    DMatrix::from_vec(n, n, entries)
}

fn condition_number(g: &DMatrix<Complex64>) -> f64 {
    let eig = g.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Minimum-`L²`-norm real solution.
pub fn solve_moments(p: &MomentProblem) -> Result<ControlSignal, MomentError> {
    p.validate()?;
    let mut warnings = Vec::new();
    if p.frequencies.is_empty() {
        return Ok(ControlSignal::zero(p.horizon));
    }
    let (freqs, targets) = p.extended();
    let delta = p.delta.or_else(|| {
        (p.frequencies.len() >= 3).then(|| fit_gap_auto(&p.frequencies, 4).ok().map(|r| r.delta)).flatten()
    });
    if let Some(d) = delta {
        if p.horizon <= 2.0 * std::f64::consts::PI / d {
            warnings.push(format!("horizon {} does not exceed 2π/δ = {}", p.horizon, 2.0 * std::f64::consts::PI / d));
        }
    }
    let g = gram_matrix(&freqs, p.horizon);
    let cond = condition_number(&g);
    if cond > MAX_CONDITION {
        return Err(MomentError::IllConditioned(cond));
    }
    let rhs = DVector::from_vec(targets.clone());
    let chol = match Cholesky::new(g.clone()) {
        Some(c) => c,
        None => {
            let n = freqs.len();
            let jitter = 1e-12 * g.trace().re / n as f64;
            warnings.push(format!("Gram factorization needed diagonal jitter {jitter:e}"));
            let mut gj = g.clone();
            for i in 0..n {
                gj[(i, i)] += jitter;
            }
            Cholesky::new(gj).ok_or(MomentError::Factorization)?
        }
    };
    let c = chol.solve(&rhs);
    let mut signal = ControlSignal {
        frequencies: freqs.clone(),
        coefficients: c.iter().cloned().collect(),
        horizon: p.horizon,
        samples: Vec::new(),
        max_imag: 0.0,
        residual: 0.0,
        condition: cond,
        warnings,
    };
    signal.residual = p
        .frequencies
        .iter()
        .zip(&p.targets)
        .map(|(&w, &x)| (signal.moment(w) - x).norm_sqr())
        .sum::<f64>()
        .sqrt();
    signal.resample(SAMPLES_PER_MODE * p.frequencies.len() + 1);
    Ok(signal)
}

/// Band-limited trial function `g(s) = Σ_n a_n e^{iν_n s}` on `[0, support]`.
#[derive(Debug, Clone)]
struct Trial {
    amps: Vec<Complex64>,
    freqs: Vec<f64>,
    support: f64,
}

impl Trial {
    fn random(rng: &mut ChaCha8Rng, band: f64, support: f64) -> Self {
        let n = 8;
        let mut amps: Vec<Complex64> =
            (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let freqs: Vec<f64> = (0..n).map(|_| rng.gen_range(-band..band)).collect();
        let mut norm2 = 0.0;
        for (a, &wa) in amps.iter().zip(&freqs) {
            for (b, &wb) in amps.iter().zip(&freqs) {
                norm2 += (a.conj() * b * exp_integral(wb - wa, support)).re;
            }
        }
        let s = 1.0 / norm2.sqrt();
        amps.iter_mut().for_each(|a| *a *= s);
        Self { amps, freqs, support }
    }

    /// `‖(∫₀^T e^{iλ_k s} g(s) ds)_k‖` for `g` zero-extended beyond its support.
    fn moment_norm(&self, lambdas: &[f64], horizon: f64) -> f64 {
        let t = self.support.min(horizon);
        lambdas
            .iter()
            .map(|&l| {
                self.amps.iter().zip(&self.freqs).map(|(&a, &w)| a * exp_integral(l + w, t)).sum::<Complex64>().norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// `C_emp(T)` for each horizon in increasing order.
///
/// Every horizon draws `trials` fresh unit-norm trial functions supported on
/// `[0, T]`; the trials of smaller horizons are kept, zero-extended, so the
/// trial sets are nested.
pub fn moment_bound_profile(lambdas: &[f64], horizons: &[f64], trials: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let band = lambdas.iter().fold(0.0f64, |a, l| a.max(l.abs())) + 1.0;
    let mut hs = horizons.to_vec();
    hs.sort_by(f64::total_cmp);
    let mut pool: Vec<Trial> = Vec::new();
    hs.into_iter()
        .map(|t| {
            pool.extend((0..trials).map(|_| Trial::random(&mut rng, band, t)));
            let c = pool.par_iter().map(|g| g.moment_norm(lambdas, t)).reduce(|| 0.0, f64::max);
            (t, c)
        })
        .collect()
}

pub fn moment_bound_constant(lambdas: &[f64], horizon: f64, trials: usize, seed: u64) -> f64 {
    moment_bound_profile(lambdas, &[horizon], trials, seed)[0].1
}
