//! Controllability experiments: linearized steering near the ground-state
//! trajectory, Lie-algebra rank of admissible rotation generators, and
//! exact factorization of finite-dimensional rotations.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaps::fit_gap_auto;
use crate::moments::{solve_moments, ControlSignal, MomentError, MomentProblem};
use crate::operator::ControlMatrix;
use crate::propagator::{propagate, PropagatorError, StateVector};

/// Steering stops once the graded error is at or below this.
pub const STEER_TOL: f64 = 1e-6;
/// Largest `|ω| dt` used when the step count is chosen automatically.
pub const PHASE_PER_STEP: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("target has norm {0}, expected 1")]
    TargetNorm(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("coupling B_{{{0},1}} vanishes")]
    VanishingCoupling(usize),
    #[error("mismatch is not tangent: Re x₁ = {0:e}")]
    NotTangent(f64),
    #[error("horizon must be positive, got {0}")]
    Horizon(f64),
    #[error("target has weight on mode {0}, unreachable through admissible pairs")]
    Unreachable(usize),
    #[error("pair ({0}, {1}) is outside the generator dimension")]
    PairOutOfRange(usize, usize),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
}

/// Local steering of `φ₁` to `target` at time `T`.
#[derive(Debug, Clone)]
pub struct SteeringProblem {
    pub lambdas: Vec<f64>,
    pub b: ControlMatrix,
    pub horizon: f64,
    pub target: StateVector,
    /// Index of the graded norm used for the error.
    pub s: f64,
    /// Propagator steps; chosen from the highest frequency when absent.
    pub steps: Option<usize>,
}

impl SteeringProblem {
    pub fn new(
        lambdas: Vec<f64>,
        b: ControlMatrix,
        horizon: f64,
        target: StateVector,
        s: f64,
    ) -> Result<Self, LabError> {
        let k = lambdas.len();
        if b.dim() != k || target.dim() != k {
            return Err(LabError::Dimension(k, b.dim().min(target.dim())));
        }
        if !(horizon > 0.0) {
            return Err(LabError::Horizon(horizon));
        }
        let n = target.norm();
        if (n - 1.0).abs() > 1e-12 {
            return Err(LabError::TargetNorm(n));
        }
        Ok(Self { lambdas, b, horizon, target, s, steps: None })
    }

    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    /// `φ₁(T) = e^{−iλ₁T} φ₁`.
    pub fn free_ground(&self) -> StateVector {
        StateVector::basis(self.dim(), 0).free_evolution(&self.lambdas, self.horizon)
    }

    pub fn step_count(&self) -> usize {
        self.steps.unwrap_or_else(|| {
            let w = self.lambdas.last().unwrap() - self.lambdas[0];
            ((self.horizon * w / PHASE_PER_STEP).ceil() as usize).max(64)
        })
    }

    /// `x_k = e^{iλ_k T}(target_k − ψ_k)`.
    pub fn mismatch(&self, psi_t: &StateVector) -> Vec<Complex64> {
        self.target
            .coeffs
            .iter()
            .zip(&psi_t.coeffs)
            .zip(&self.lambdas)
            .map(|((t, p), l)| Complex64::from_polar(1.0, l * self.horizon) * (t - p))
            .collect()
    }

    pub fn error(&self, psi_t: &StateVector) -> f64 {
        psi_t.sub(&self.target).graded_norm(self.s)
    }
}

/// `4π/δ` for the fitted uniform gap `δ`.
pub fn default_horizon(lambdas: &[f64]) -> Option<f64> {
    fit_gap_auto(lambdas, 4).ok().map(|r| 4.0 * PI / r.delta)
}

/// Control `v` whose first-order effect on `φ₁` is the mismatch `x`:
/// `−i B_{k,1} ∫₀^T v(s) e^{i(λ_k−λ₁)s} ds = x_k`.
///
/// The unit sphere forces `Re x₁ = −|x|²/2`, so `x₁` is accepted when
/// `|Re x₁| ≤ |x|²` and its real part is then dropped.
pub fn linearized_control_for(p: &SteeringProblem, x: &[Complex64]) -> Result<ControlSignal, LabError> {
    let k = p.dim();
    if x.len() != k {
        return Err(LabError::Dimension(k, x.len()));
    }
    let x2: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    if x[0].re.abs() > x2 + 1e-15 {
        return Err(LabError::NotTangent(x[0].re));
    }
    if x2 == 0.0 {
        return Ok(ControlSignal::zero(p.horizon));
    }
    let l1 = p.lambdas[0];
    let mut targets = Vec::with_capacity(k);
    for (j, xj) in x.iter().enumerate() {
        let b = p.b.get(j, 0);
        if b.norm() <= 1e-14 {
            return Err(LabError::VanishingCoupling(j + 1));
        }
        let xj = if j == 0 { Complex64::new(0.0, xj.im) } else { *xj };
        let y = Complex64::i() * xj / b;
        targets.push(if j == 0 { Complex64::new(y.re, 0.0) } else { y });
    }
    let freqs: Vec<f64> = p.lambdas.iter().map(|l| l - l1).collect();
    let mut problem = MomentProblem::new(freqs, targets, p.horizon);
    problem.delta = fit_gap_auto(&p.lambdas, 4).ok().map(|r| r.delta);
    Ok(solve_moments(&problem)?)
}

/// Linearized control for the mismatch between `φ₁(T)` and the target.
pub fn linearized_control(p: &SteeringProblem) -> Result<ControlSignal, LabError> {
    linearized_control_for(p, &p.mismatch(&p.free_ground()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteeringStatus {
    Converged,
    MaxIterations,
    Diverged,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteeringOutcome {
    pub control: ControlSignal,
    /// Graded error before the first update and after every iteration.
    pub history: Vec<f64>,
    pub status: SteeringStatus,
    pub steps: usize,
    pub final_state: StateVector,
}

/// Chord iteration on the mismatch, always linearizing at the free ground
/// trajectory. Updates are added to the current control; a failed step is
/// undone and the step length halved. Two failures in a row are divergence.
pub fn steer(p: &SteeringProblem, max_iters: usize) -> Result<SteeringOutcome, LabError> {
    let steps = p.step_count();
    let psi0 = StateVector::basis(p.dim(), 0);
    let run = |u: &ControlSignal| -> Result<StateVector, LabError> {
        if u.frequencies.is_empty() {
            return Ok(psi0.free_evolution(&p.lambdas, p.horizon));
        }
        Ok(propagate(&psi0, u, &p.lambdas, &p.b, steps)?.final_state().clone())
    };
    let mut best = ControlSignal::zero(p.horizon);
    let mut best_state = run(&best)?;
    let mut best_err = p.error(&best_state);
    let mut history = vec![best_err];
    let mut damping = 1.0;
    let mut failures = 0;
    let mut status = SteeringStatus::MaxIterations;
    for _ in 0..max_iters {
        if best_err <= STEER_TOL {
            status = SteeringStatus::Converged;
            break;
        }
        let x = p.mismatch(&best_state);
        // the iterate is on the sphere, so only the tangent part of x₁ is used
        let mut x = x;
        x[0].re = 0.0;
        let v = linearized_control_for(p, &x)?;
        let candidate = best.sum(&v.scaled(damping));
        let state = run(&candidate)?;
        let err = p.error(&state);
        history.push(err);
        if err < best_err {
            best = candidate;
            best_state = state;
            best_err = err;
            failures = 0;
        } else {
            failures += 1;
            damping *= 0.5;
            if failures >= 2 {
                status = SteeringStatus::Diverged;
                break;
            }
        }
    }
    if status == SteeringStatus::MaxIterations && best_err <= STEER_TOL {
        status = SteeringStatus::Converged;
    }
    Ok(SteeringOutcome { control: best, history, status, steps, final_state: best_state })
}

/// Unit target `e^{−iAT}(φ₁ + η)` with random `η`, `Re η₁ = 0`, decaying
/// like `k^{−s−1}`, scaled so that `‖target − φ₁(T)‖_(s) = 0.99 ε`.
pub fn random_tangent_target(lambdas: &[f64], horizon: f64, epsilon: f64, s: f64, rng: &mut impl Rng) -> StateVector {
    let k = lambdas.len();
    let mut eta: Vec<Complex64> = (0..k)
        .map(|j| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * ((j + 1) as f64).powf(-s - 1.0))
        .collect();
    eta[0].re = 0.0;
    let ground = StateVector::basis(k, 0).free_evolution(lambdas, horizon);
    if epsilon == 0.0 {
        return ground;
    }
    let build = |scale: f64| -> StateVector {
        let mut c: Vec<Complex64> = eta.iter().map(|e| e * scale).collect();
        c[0] += 1.0;
        let n = c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        StateVector::new(c.into_iter().map(|v| v / n).collect()).free_evolution(lambdas, horizon)
    };
    let mut scale = epsilon / StateVector::new(eta.clone()).graded_norm(s);
    for _ in 0..50 {
        let d = build(scale).sub(&ground).graded_norm(s);
        let next = scale * 0.99 * epsilon / d;
        if (next - scale).abs() <= 1e-15 * scale {
            break;
        }
        scale = next;
    }
    build(scale)
}

/// Admissible pairs and rotation angles generating the Lie algebra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LieGeneratorSet {
    pub n1: usize,
    /// 0-based index pairs.
    pub pairs: Vec<(usize, usize)>,
    pub thetas: Vec<f64>,
}

impl LieGeneratorSet {
    /// Angles `{0, π/2}` on every pair, which span the same real space as
    /// all `θ ∈ [0, 2π)`.
    pub fn new(n1: usize, pairs: Vec<(usize, usize)>) -> Self {
        Self { n1, pairs, thetas: vec![0.0, FRAC_PI_2] }
    }

    pub fn generators(&self) -> Result<Vec<DMatrix<Complex64>>, LabError> {
        let mut out = Vec::new();
        for &(j, k) in &self.pairs {
            if j >= self.n1 || k >= self.n1 || j == k {
                return Err(LabError::PairOutOfRange(j + 1, k + 1));
            }
            for &t in &self.thetas {
                out.push(rotation_generator(self.n1, j, k, t));
            }
        }
        Ok(out)
    }
}

/// `E^θ_{j,k}`: `e^{iθ}` at `(j,k)`, `−e^{−iθ}` at `(k,j)`.
pub fn rotation_generator(n: usize, j: usize, k: usize, theta: f64) -> DMatrix<Complex64> {
    let mut m = DMatrix::zeros(n, n);
    m[(j, k)] = Complex64::from_polar(1.0, theta);
    m[(k, j)] = -Complex64::from_polar(1.0, -theta);
    m
}

fn flatten(m: &DMatrix<Complex64>) -> Vec<f64> {
    m.iter().flat_map(|c| [c.re, c.im]).collect()
}

/// Real Gram–Schmidt span tracker.
struct Span {
    basis: Vec<Vec<f64>>,
}

impl Span {
    /// Adds `v` when independent and returns its normalized residual.
    fn insert(&mut self, v: &[f64]) -> Option<Vec<f64>> {
        let scale = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if scale == 0.0 {
            return None;
        }
        let mut r: Vec<f64> = v.iter().map(|x| x / scale).collect();
        for _ in 0..2 {
            for b in &self.basis {
                let d: f64 = r.iter().zip(b).map(|(x, y)| x * y).sum();
                r.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n <= 1e-8 {
            return None;
        }
        r.iter_mut().for_each(|x| *x /= n);
        self.basis.push(r.clone());
        Some(r)
    }
}

/// Dimension of the real Lie algebra generated by the set.
pub fn lie_rank(gen: &LieGeneratorSet) -> Result<usize, LabError> {
    Ok(lie_rank_of(gen.n1, gen.generators()?))
}

/// Dimension of the real Lie algebra generated by traceless skew-Hermitian
/// `n × n` matrices.
pub fn lie_rank_of(n: usize, gens: Vec<DMatrix<Complex64>>) -> usize {
    let cap = (n * n).saturating_sub(1);
    let unflatten = |v: Vec<f64>| DMatrix::from_iterator(n, n, v.chunks(2).map(|c| Complex64::new(c[0], c[1])));
    let mut span = Span { basis: Vec::new() };
    // brackets are taken between orthonormal residuals so that nested
    // commutators stay well scaled
    let mut elements: Vec<DMatrix<Complex64>> = Vec::new();
    let mut queue: VecDeque<DMatrix<Complex64>> = VecDeque::new();
    for g in gens {
        if let Some(r) = span.insert(&flatten(&g)) {
            let m = unflatten(r);
            elements.push(m.clone());
            queue.push_back(m);
        }
    }
    while let Some(x) = queue.pop_front() {
        if span.basis.len() >= cap {
            break;
        }
        for y in elements.clone() {
            let c = &x * &y - &y * &x;
            // unit inputs: a roundoff-sized bracket would normalize to noise
            if c.norm() <= 1e-9 {
                continue;
            }
            if let Some(r) = span.insert(&flatten(&c)) {
                let m = unflatten(r);
                elements.push(m.clone());
                queue.push_back(m);
            }
        }
    }
    span.basis.len()
}

/// Pairs `(j,k)`, `j < k < N₁`, with `B_{j,k} ≠ 0` whose gap `|λ_j − λ_k|`
/// is not shared, within `tol·λ_K`, by any other coupled pair of the
/// whole truncation.
pub fn resonant_pairs(lambdas: &[f64], b: &ControlMatrix, n1: usize, tol: f64) -> Vec<(usize, usize)> {
    let k = lambdas.len().min(b.dim());
    let n1 = n1.min(k);
    let coupled = |j: usize, m: usize| b.get(j, m).norm() > 1e-14;
    let abs_tol = tol * lambdas[..k].iter().fold(1.0f64, |a, l| a.max(l.abs()));
    let mut gaps: Vec<(f64, usize, usize)> = Vec::new();
    for j in 0..k {
        for m in j + 1..k {
            if coupled(j, m) {
                gaps.push(((lambdas[m] - lambdas[j]).abs(), j, m));
            }
        }
    }
    gaps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    for (i, &(g, j, m)) in gaps.iter().enumerate() {
        if m >= n1 {
            continue;
        }
        let clash = |o: &(f64, usize, usize)| (o.0 - g).abs() <= abs_tol;
        let before = gaps[..i].iter().rev().take_while(|o| clash(o)).count();
        let after = gaps[i + 1..].iter().take_while(|o| clash(o)).count();
        if before + after == 0 {
            out.push((j, m));
        }
    }
    out.sort_unstable();
    out
}

/// One factor `e^{α E^θ_{j,k}}` with `α ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationFactor {
    pub j: usize,
    pub k: usize,
    pub theta: f64,
    pub alpha: f64,
}

impl RotationFactor {
    pub fn matrix(&self, n: usize) -> DMatrix<Complex64> {
        let mut m = DMatrix::identity(n, n);
        let (c, s) = (self.alpha.cos(), self.alpha.sin());
        m[(self.j, self.j)] = Complex64::new(c, 0.0);
        m[(self.k, self.k)] = Complex64::new(c, 0.0);
        m[(self.j, self.k)] = Complex64::from_polar(s, self.theta);
        m[(self.k, self.j)] = -Complex64::from_polar(s, -self.theta);
        m
    }

    fn apply(&self, psi: &mut [Complex64]) {
        let (c, s) = (self.alpha.cos(), self.alpha.sin());
        let (a, b) = (psi[self.j], psi[self.k]);
        psi[self.j] = a * c + Complex64::from_polar(s, self.theta) * b;
        psi[self.k] = -Complex64::from_polar(s, -self.theta) * a + b * c;
    }

    fn inverse(&self) -> Self {
        Self { alpha: (2.0 * PI - self.alpha).rem_euclid(2.0 * PI), ..*self }
    }
}

/// Apply factors in list order (the first factor acts first).
pub fn apply_rotations(factors: &[RotationFactor], psi: &StateVector) -> StateVector {
    let mut c = psi.coeffs.clone();
    for f in factors {
        f.apply(&mut c);
    }
    StateVector::new(c)
}

/// Factors in `E_ad` whose product maps `φ₁` to the unit `target`.
///
/// Givens rotations along a spanning tree of the admissible pairs move the
/// target's weight onto mode 1, two half-turns fix the remaining phase, and
/// the inverses are returned in application order.
pub fn rotation_factorization(target: &StateVector, pairs: &[(usize, usize)]) -> Result<Vec<RotationFactor>, LabError> {
    let n = target.dim();
    let nrm = target.norm();
    if (nrm - 1.0).abs() > 1e-12 {
        return Err(LabError::TargetNorm(nrm));
    }
    for &(j, k) in pairs {
        if j >= n || k >= n || j == k {
            return Err(LabError::PairOutOfRange(j + 1, k + 1));
        }
    }
    // breadth-first tree from mode 0
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut order = vec![0usize];
    seen[0] = true;
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        for &(a, b) in pairs {
            for (x, y) in [(a, b), (b, a)] {
                if x == v && !seen[y] {
                    seen[y] = true;
                    parent[y] = Some(v);
                    order.push(y);
                }
            }
        }
    }
    if let Some(j) = (0..n).find(|&j| !seen[j] && target.coeffs[j].norm() > 1e-14) {
        return Err(LabError::Unreachable(j + 1));
    }
    let mut psi = target.coeffs.clone();
    let mut unwind = Vec::new();
    for &c in order.iter().skip(1).rev() {
        let p = parent[c].expect("tree nodes besides the root have parents");
        let (a, b) = (psi[p], psi[c]);
        if b.norm() == 0.0 {
            continue;
        }
        let f = RotationFactor { j: p, k: c, theta: (a.arg() - b.arg()).rem_euclid(2.0 * PI), alpha: b.norm().atan2(a.norm()) };
        f.apply(&mut psi);
        psi[c] = Complex64::new(0.0, 0.0);
        unwind.push(f);
    }
    let mut factors = Vec::new();
    let gamma = psi[0].arg();
    if gamma.abs() > 1e-15 {
        let partner = order.get(1).copied().ok_or(LabError::Unreachable(1))?;
        factors.push(RotationFactor { j: 0, k: partner, theta: 0.0, alpha: FRAC_PI_2 });
        factors.push(RotationFactor { j: 0, k: partner, theta: (gamma + PI).rem_euclid(2.0 * PI), alpha: FRAC_PI_2 });
    }
    factors.extend(unwind.iter().rev().map(RotationFactor::inverse));
    Ok(factors)
}
