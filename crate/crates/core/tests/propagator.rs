use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use qgraph::graph::{EdgeLength, MetricGraph, VertexCondition::Dirichlet};
use qgraph::operator::{matrix_elements, preset, ControlMatrix};
use qgraph::propagator::{
    duhamel_residual, propagate, propagate_reversed, step_propagator, ConstantControl, FnControl, StateVector,
};
use qgraph::spectrum::compute_spectrum;
use qgraph::spectrum::weyl::weyl_fit;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn star4() -> MetricGraph {
    let ls = [EdgeLength::ratio(1, 1), EdgeLength::sqrt(2), EdgeLength::sqrt(3), EdgeLength::sqrt(5)];
    MetricGraph::star(&ls, Dirichlet).unwrap()
}

fn star_system(k: usize) -> (Vec<f64>, ControlMatrix) {
    let g = star4();
    let basis = compute_spectrum(&g, k).unwrap();
    let m = matrix_elements(&preset("thm1.2", &g).unwrap(), &basis).unwrap();
    (basis.lambdas(), m)
}

fn random_state(rng: &mut ChaCha8Rng, k: usize) -> StateVector {
    let c: Vec<Complex64> = (0..k).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let n = c.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    StateVector::new(c.into_iter().map(|x| x / n).collect())
}

/// A few random low-frequency sinusoids.
fn random_control(rng: &mut ChaCha8Rng, horizon: f64) -> FnControl<impl Fn(f64) -> f64 + Sync> {
    let terms: Vec<(f64, f64, f64)> =
        (0..4).map(|_| (rng.gen_range(-0.5..0.5), rng.gen_range(0.0..10.0), rng.gen_range(0.0..2.0 * PI))).collect();
    FnControl { f: move |t: f64| terms.iter().map(|(a, w, p)| a * (w * t + p).sin()).sum(), horizon }
}

#[test]
fn free_evolution_is_exact() {
    let (lam, b) = star_system(30);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let psi = random_state(&mut rng, 30);
    let u = ConstantControl { value: 0.0, horizon: 1.3 };
    let traj = propagate(&psi, &u, &lam, &b, 64).unwrap();
    let exact = psi.free_evolution(&lam, 1.3);
    assert!(traj.final_state().sub(&exact).norm() < 1e-12);
    assert!(duhamel_residual(&traj, &u, &b) < 1e-12);
}

#[test]
fn norm_and_unitarity() {
    let (lam, b) = star_system(30);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let psi = random_state(&mut rng, 30);
    let u = random_control(&mut rng, 2.0);
    let traj = propagate(&psi, &u, &lam, &b, 4096).unwrap();
    assert!(traj.norm_drift() < 1e-10, "{}", traj.norm_drift());
    for &v in &traj.controls[..5] {
        let p = step_propagator(&lam, &b, v, 2.0 / 4096.0).unwrap();
        let defect = (p.adjoint() * &p - DMatrix::<Complex64>::identity(30, 30)).norm();
        assert!(defect < 1e-10);
    }
}

/// `exp(−iHt)` for a 2×2 Hermitian `H`, in closed form.
fn rabi(h: [[Complex64; 2]; 2], t: f64, psi: [Complex64; 2]) -> [Complex64; 2] {
    let a = 0.5 * (h[0][0].re + h[1][1].re);
    let d = 0.5 * (h[0][0].re - h[1][1].re);
    let omega = (d * d + h[0][1].norm_sqr()).sqrt();
    let (c, s) = ((omega * t).cos(), (omega * t).sin() / omega);
    let i = Complex64::i();
    let ph = Complex64::from_polar(1.0, -a * t);
    [
        ph * ((c - i * s * d) * psi[0] - i * s * h[0][1] * psi[1]),
        ph * (-i * s * h[1][0] * psi[0] + (c + i * s * d) * psi[1]),
    ]
}

#[test]
fn two_level_rabi_oracle() {
    let (lam, b) = star_system(2);
    let u0 = 3.7;
    let h = [
        [Complex64::new(lam[0], 0.0) + b.get(0, 0) * u0, b.get(0, 1) * u0],
        [b.get(1, 0) * u0, Complex64::new(lam[1], 0.0) + b.get(1, 1) * u0],
    ];
    let psi = StateVector::basis(2, 0);
    let t = 2.5;
    let traj = propagate(&psi, &ConstantControl { value: u0, horizon: t }, &lam, &b, 17).unwrap();
    let exact = rabi(h, t, [psi.coeffs[0], psi.coeffs[1]]);
    for (a, e) in traj.final_state().coeffs.iter().zip(exact) {
        assert!((a - e).norm() < 1e-8);
    }
}

#[test]
fn forward_backward_returns() {
    let (lam, b) = star_system(30);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let psi = random_state(&mut rng, 30);
    let u = random_control(&mut rng, 1.5);
    let fwd = propagate(&psi, &u, &lam, &b, 1000).unwrap();
    let back = propagate_reversed(fwd.final_state(), &u, &lam, &b, 1000).unwrap();
    assert!(back.final_state().sub(&psi).norm() < 1e-8);
}

#[test]
fn duhamel_residual_second_order() {
    let (lam, b) = star_system(30);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let psi = StateVector::basis(30, 0);
    let u = random_control(&mut rng, 1.0);
    let r: Vec<f64> = [512, 1024, 2048]
        .iter()
        .map(|&n| duhamel_residual(&propagate(&psi, &u, &lam, &b, n).unwrap(), &u, &b))
        .collect();
    for w in r.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.0..5.0).contains(&ratio), "{r:?}");
    }
    let traj = propagate(&psi, &u, &lam, &b, 4096).unwrap();
    assert!(duhamel_residual(&traj, &u, &b) <= 1e-6);
}

#[test]
fn converges_to_fine_reference() {
    let (lam, b) = star_system(20);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let psi = StateVector::basis(20, 0);
    let u = random_control(&mut rng, 1.0);
    let reference = propagate(&psi, &u, &lam, &b, 10 * 1600).unwrap();
    let errs: Vec<f64> = [200, 400, 800]
        .iter()
        .map(|&n| propagate(&psi, &u, &lam, &b, n).unwrap().final_state().sub(reference.final_state()).norm())
        .collect();
    for w in errs.windows(2) {
        assert!(w[0] / w[1] > 3.0, "{errs:?}");
    }
}

#[test]
fn tail_mass_shrinks_with_truncation() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let u = random_control(&mut rng, 1.0);
    let tails: Vec<f64> = [12, 20, 32, 48]
        .iter()
        .map(|&k| {
            let (lam, b) = star_system(k);
            propagate(&StateVector::basis(k, 0), &u, &lam, &b, 400).unwrap().tail_mass
        })
        .collect();
    assert!(tails.windows(2).all(|w| w[1] <= w[0]), "{tails:?}");
}

#[test]
fn graded_norms_are_equivalent() {
    let g = star4();
    let lam = compute_spectrum(&g, 100).unwrap().lambdas();
    let fit = weyl_fit(&g, &lam, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for s in [1.0, 2.0, 4.1] {
        let (c1, c2) = (fit.fitted_low.powf(s / 2.0), fit.fitted_high.powf(s / 2.0));
        for _ in 0..100 {
            let psi = random_state(&mut rng, 100);
            let ratio = psi.spectral_norm(&lam, s) / psi.graded_norm(s);
            assert!(ratio >= c1 * (1.0 - 1e-12) && ratio <= c2 * (1.0 + 1e-12));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn propagation_conserves_norm(seed in 0u64..10_000, amp in 0.0f64..20.0, steps in 1usize..200) {
        let lam: Vec<f64> = (1..=8).map(|k| (k * k) as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(8, 8, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let b = ControlMatrix::new((&raw + raw.adjoint()) * Complex64::new(0.5, 0.0)).unwrap();
        let psi = random_state(&mut rng, 8);
        let u = FnControl { f: move |t: f64| amp * (3.0 * t).cos(), horizon: 1.0 };
        let traj = propagate(&psi, &u, &lam, &b, steps).unwrap();
        prop_assert!(traj.norm_drift() < 1e-10);
        let back = propagate_reversed(traj.final_state(), &u, &lam, &b, steps).unwrap();
        prop_assert!(back.final_state().sub(&psi).norm() < 1e-9);
    }
}
