//! Galerkin propagation of `i∂ₜψ = Aψ + u(t)Bψ` in the eigenbasis of `A`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrals::poly_exp_integral;
use crate::moments::ControlSignal;
use crate::operator::ControlMatrix;

/// Tail mass above this is reported as a truncation warning.
pub const TAIL_THRESHOLD: f64 = 1e-3;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagatorError {
    #[error("dimension mismatch: state {state}, eigenvalues {lambdas}, control matrix {matrix}")]
    Dimension { state: usize, lambdas: usize, matrix: usize },
    #[error("at least one step is required")]
    NoSteps,
    #[error("horizon must be positive, got {0}")]
    Horizon(f64),
    #[error("eigendecomposition did not converge at step {0}")]
    Eigen(usize),
}

/// Coefficients `ψ_k = ⟨ψ, φ_k⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub coeffs: Vec<Complex64>,
}

impl StateVector {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        Self { coeffs }
    }

    /// `φ_k` (0-based `k`) in a `dim`-mode truncation.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); dim];
        coeffs[k] = Complex64::new(1.0, 0.0);
        Self { coeffs }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn norm(&self) -> f64 {
        self.graded_norm(0.0)
    }

    /// `(Σ_k |k^s ψ_k|²)^{1/2}`.
    pub fn graded_norm(&self, s: f64) -> f64 {
        self.coeffs.iter().enumerate().map(|(k, c)| c.norm_sqr() * ((k + 1) as f64).powf(2.0 * s)).sum::<f64>().sqrt()
    }

    /// `(Σ_k |(λ_k + c)^{s/2} ψ_k|²)^{1/2}` with `c = 1` when `λ₁ = 0` and
    /// `c = 0` otherwise.
    pub fn spectral_norm(&self, lambdas: &[f64], s: f64) -> f64 {
        let shift = spectral_shift(lambdas);
        self.coeffs
            .iter()
            .zip(lambdas)
            .map(|(c, l)| c.norm_sqr() * (l + shift).powf(s))
            .sum::<f64>()
            .sqrt()
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn sub(&self, other: &StateVector) -> StateVector {
        StateVector::new(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect())
    }

    pub fn conj(&self) -> StateVector {
        StateVector::new(self.coeffs.iter().map(Complex64::conj).collect())
    }

    /// `e^{−iAt}ψ`.
    pub fn free_evolution(&self, lambdas: &[f64], t: f64) -> StateVector {
        StateVector::new(self.coeffs.iter().zip(lambdas).map(|(c, l)| c * Complex64::from_polar(1.0, -l * t)).collect())
    }

    fn as_dvector(&self) -> DVector<Complex64> {
        DVector::from_column_slice(&self.coeffs)
    }
}

/// Shift making `A + c` positive: `1` when the ground eigenvalue is zero.
pub fn spectral_shift(lambdas: &[f64]) -> f64 {
    if lambdas.first().is_some_and(|&l| l <= 0.0) {
        1.0
    } else {
        0.0
    }
}

/// A real control on `[0, T]`.
pub trait ControlInput: Sync {
    fn value(&self, t: f64) -> f64;
    fn horizon(&self) -> f64;
}

impl ControlInput for ControlSignal {
    fn value(&self, t: f64) -> f64 {
        self.eval(t)
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantControl {
    pub value: f64,
    pub horizon: f64,
}

impl ControlInput for ConstantControl {
    fn value(&self, _t: f64) -> f64 {
        self.value
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// Any `Fn(f64) -> f64` on a given horizon.
pub struct FnControl<F> {
    pub f: F,
    pub horizon: f64,
}

impl<F: Fn(f64) -> f64 + Sync> ControlInput for FnControl<F> {
    fn value(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// `t ↦ u(T − t)`.
pub struct TimeReversed<'a, C: ControlInput>(pub &'a C);

impl<C: ControlInput> ControlInput for TimeReversed<'_, C> {
    fn value(&self, t: f64) -> f64 {
        self.0.value(self.0.horizon() - t)
    }

    fn horizon(&self) -> f64 {
        self.0.horizon()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub lambdas: Vec<f64>,
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    /// Control value used on each step (step midpoints).
    pub controls: Vec<f64>,
    /// Largest `ℓ²` mass of `Bψ` in the top quarter of the modes.
    pub tail_mass: f64,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("trajectories hold the initial state")
    }

    /// Largest deviation of a snapshot norm from the initial norm.
    pub fn norm_drift(&self) -> f64 {
        let n0 = self.states[0].norm();
        self.states.iter().map(|s| (s.norm() - n0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub norm_drift: f64,
    pub tail_mass: f64,
    pub residual: f64,
}

/// `exp(−i dt (diag λ + u B))`.
pub fn step_propagator(lambdas: &[f64], b: &ControlMatrix, u: f64, dt: f64) -> Option<DMatrix<Complex64>> {
    let n = lambdas.len();
    if b.is_real() {
        let mut h = b.real_part() * u;
        for (i, l) in lambdas.iter().enumerate() {
            h[(i, i)] += l;
        }
        let eig = SymmetricEigen::try_new(h, f64::EPSILON, 0)?;
        let q = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
        let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| Complex64::from_polar(1.0, -e * dt)));
        Some(&q * phases * q.transpose())
    } else {
        let mut h = b.matrix() * Complex64::new(u, 0.0);
        for (i, l) in lambdas.iter().enumerate() {
            h[(i, i)] += l;
        }
        let eig = SymmetricEigen::try_new(h, f64::EPSILON, 0)?;
        let q = eig.eigenvectors;
        let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| Complex64::from_polar(1.0, -e * dt)));
        debug_assert_eq!(q.nrows(), n);
        Some(&q * phases * q.adjoint())
    }
}

fn tail_of(b: &ControlMatrix, psi: &DVector<Complex64>) -> f64 {
    let k = psi.len();
    let start = k - k / 4;
    let bpsi = b.matrix() * psi;
    bpsi.iter().skip(start).map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Exponential midpoint stepping with `steps` uniform steps on `[0, T]`.
pub fn propagate(
    psi0: &StateVector,
    u: &impl ControlInput,
    lambdas: &[f64],
    b: &ControlMatrix,
    steps: usize,
) -> Result<Trajectory, PropagatorError> {
    let k = psi0.dim();
    if lambdas.len() != k || b.dim() != k {
        return Err(PropagatorError::Dimension { state: k, lambdas: lambdas.len(), matrix: b.dim() });
    }
    if steps == 0 {
        return Err(PropagatorError::NoSteps);
    }
    let horizon = u.horizon();
    if !(horizon > 0.0) {
        return Err(PropagatorError::Horizon(horizon));
    }
    let dt = horizon / steps as f64;
    let mut psi = psi0.as_dvector();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps);
    times.push(0.0);
    states.push(psi0.clone());
    let mut tail = tail_of(b, &psi);
    for j in 0..steps {
        let uj = u.value((j as f64 + 0.5) * dt);
        let p = step_propagator(lambdas, b, uj, dt).ok_or(PropagatorError::Eigen(j))?;
        psi = p * psi;
        tail = tail.max(tail_of(b, &psi));
        controls.push(uj);
        times.push((j + 1) as f64 * dt);
        states.push(StateVector::new(psi.iter().cloned().collect()));
    }
    let mut warnings = Vec::new();
    if tail > TAIL_THRESHOLD {
        warnings.push(format!("tail mass {tail:e} of Bψ exceeds {TAIL_THRESHOLD:e}; increase K"));
    }
    Ok(Trajectory { lambdas: lambdas.to_vec(), times, states, controls, tail_mass: tail, warnings })
}

/// Undo a forward run: propagate `conj ψ_T` with `u(T − t)` and `conj B`,
/// then conjugate.
pub fn propagate_reversed(
    psi_t: &StateVector,
    u: &impl ControlInput,
    lambdas: &[f64],
    b: &ControlMatrix,
    steps: usize,
) -> Result<Trajectory, PropagatorError> {
    let bc = ControlMatrix::new(b.matrix().map(|x| x.conj())).expect("conjugate of a Hermitian matrix");
    let mut traj = propagate(&psi_t.conj(), &TimeReversed(u), lambdas, &bc, steps)?;
    traj.states.iter_mut().for_each(|s| *s = s.conj());
    Ok(traj)
}

/// Largest `ℓ²` norm over the snapshot grid of
/// `ψ(t) − e^{−iAt}ψ⁰ + i∫₀ᵗ e^{−iA(t−s)} u(s) Bψ(s) ds`.
///
/// In the interaction picture the integrand is `e^{i(λ_k−λ_j)s}` times the
/// slowly varying `u(s)e^{iλ_j s}ψ_j(s)`; the latter is interpolated linearly
/// between snapshots and the oscillatory factor integrated exactly.
pub fn duhamel_residual(traj: &Trajectory, u: &impl ControlInput, b: &ControlMatrix) -> f64 {
    let lam = &traj.lambdas;
    let k = lam.len();
    let n = traj.times.len();
    if n < 2 {
        return 0.0;
    }
    let psi0 = &traj.states[0];
    let rotated = |i: usize| -> Vec<Complex64> {
        let t = traj.times[i];
        let us = u.value(t);
        traj.states[i].coeffs.iter().zip(lam).map(|(c, l)| c * Complex64::from_polar(us, l * t)).collect()
    };
    let mut acc = vec![Complex64::new(0.0, 0.0); k];
    let mut worst = 0.0f64;
    let mut ha = rotated(0);
    for i in 1..n {
        let (sa, sb) = (traj.times[i - 1], traj.times[i]);
        let dt = sb - sa;
        let hb = rotated(i);
        for r in 0..k {
            let mut s = Complex64::new(0.0, 0.0);
            for c in 0..k {
                let bij = b.get(r, c);
                if bij == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let w = lam[r] - lam[c];
                let slope = (hb[c] - ha[c]) / dt;
                s += bij * Complex64::from_polar(1.0, w * sa) * poly_exp_integral(&[ha[c], slope], w, dt);
            }
            acc[r] += s;
        }
        // e^{iAt}·residual = e^{iAt}ψ(t) − ψ⁰ + i·acc
        let t = sb;
        let res: f64 = (0..k)
            .map(|r| {
                let phi = traj.states[i].coeffs[r] * Complex64::from_polar(1.0, lam[r] * t);
                (phi - psi0.coeffs[r] + I * acc[r]).norm_sqr()
            })
            .sum::<f64>()
            .sqrt();
        worst = worst.max(res);
        ha = hb;
    }
    worst
}

pub fn summarize(traj: &Trajectory, u: &impl ControlInput, b: &ControlMatrix) -> TrajectorySummary {
    TrajectorySummary { norm_drift: traj.norm_drift(), tail_mass: traj.tail_mass, residual: duhamel_residual(traj, u, b) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_norm_examples() {
        let d = StateVector::basis(5, 0);
        for s in [0.0, 1.0, 4.1] {
            assert_eq!(d.graded_norm(s), 1.0);
        }
        let psi = StateVector::new((1..=1000).map(|k| Complex64::new((k as f64).powi(-3), 0.0)).collect());
        let partial: f64 = (1..=1000).map(|k| (k as f64).powi(-2)).sum::<f64>().sqrt();
        assert!((psi.graded_norm(2.0) - partial).abs() < 1e-12);
        assert!((partial - std::f64::consts::PI / 6f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn shift_only_for_zero_mode() {
        assert_eq!(spectral_shift(&[0.0, 1.0]), 1.0);
        assert_eq!(spectral_shift(&[2.0, 3.0]), 0.0);
        let psi = StateVector::basis(2, 0);
        assert_eq!(psi.spectral_norm(&[0.0, 1.0], 2.0), 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        let b = ControlMatrix::from_real(DMatrix::identity(2, 2)).unwrap();
        let u = ConstantControl { value: 0.0, horizon: 1.0 };
        assert_eq!(
            propagate(&StateVector::basis(3, 0), &u, &[1.0, 2.0], &b, 4),
            Err(PropagatorError::Dimension { state: 3, lambdas: 2, matrix: 2 })
        );
        assert_eq!(propagate(&StateVector::basis(2, 0), &u, &[1.0, 2.0], &b, 0), Err(PropagatorError::NoSteps));
    }
}
