use num_complex::Complex64;
use qgraph::graph::{EdgeLength, MetricGraph, VertexCondition::*};
use qgraph::operator::{
    assumption_i1_check, assumption_i2_check, i2_brute, i2_sorted, matrix_elements, perturbation_slope,
    perturbed_spectrum, preset, ControlOperator,
};
use qgraph::spectrum::compute_spectrum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod support;

fn star4() -> MetricGraph {
    let ls = [EdgeLength::ratio(1, 1), EdgeLength::sqrt(2), EdgeLength::sqrt(3), EdgeLength::sqrt(5)];
    MetricGraph::star(&ls, Dirichlet).unwrap()
}

fn tadpole() -> MetricGraph {
    MetricGraph::tadpole(EdgeLength::ratio(1, 1), EdgeLength::sqrt(2), Dirichlet).unwrap()
}

#[test]
fn elements_match_gauss_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (g, name) in [(star4(), "thm1.2"), (tadpole(), "thm1.3")] {
        let basis = compute_spectrum(&g, 40).unwrap();
        let op = preset(name, &g).unwrap();
        let m = matrix_elements(&op, &basis).unwrap();
        let ControlOperator::Multiplication(profiles) = &op else { unreachable!() };
        for _ in 0..20 {
            let (j, k) = (rng.gen_range(0..40), rng.gen_range(0..40));
            let q: Complex64 = g
                .edges()
                .iter()
                .enumerate()
                .map(|(e, edge)| {
                    support::gauss(
                        |x| basis.eval(j, e, x).conj() * profiles[e].eval(x) * basis.eval(k, e, x),
                        edge.len(),
                        400,
                    )
                })
                .sum();
            assert!((q - m.get(j, k)).norm() < 1e-9, "{name} ({j},{k}): {q} vs {}", m.get(j, k));
        }
    }
}

#[test]
fn quartic_star_closed_form() {
    let g = star4();
    let lengths = g.lengths();
    let basis = compute_spectrum(&g, 50).unwrap();
    let m = matrix_elements(&preset("thm1.2", &g).unwrap(), &basis).unwrap();
    let l = basis.lambdas();
    let b1 = basis.pairs()[0].coeffs[0].1.re;
    for j in 0..50 {
        let sign = (b1 * basis.pairs()[j].coeffs[0].1.re).signum();
        let closed = support::star_quartic_element(&lengths, l[0], l[j], j == 0);
        let got = m.get(0, j).re * sign;
        assert!((got - closed).abs() < 1e-10, "j={}: {got} vs {closed}", j + 1);
    }
}

#[test]
fn tadpole_parity_selection() {
    let g = tadpole();
    let basis = compute_spectrum(&g, 60).unwrap();
    let skew_field = ControlOperator::Multiplication(vec![
        qgraph::operator::EdgeProfile {
            poly: vec![],
            sine: Some(qgraph::operator::SineTerm { amp: 1.0, omega: 2.0 * std::f64::consts::PI, phase: 0.0 }),
        },
        Default::default(),
    ]);
    let m = matrix_elements(&skew_field, &basis).unwrap();
    let skew: Vec<bool> = basis.pairs().iter().map(|p| p.coeffs[1].0.norm() + p.coeffs[1].1.norm() < 1e-10).collect();
    assert!(skew.iter().filter(|&&s| s).count() >= 5);
    for j in 0..60 {
        for k in 0..60 {
            if skew[j] == skew[k] {
                assert!(m.get(j, k).norm() < 1e-12, "({j},{k}) {}", m.get(j, k));
            }
        }
    }
}

#[test]
fn coupling_decay_fits() {
    for (g, name) in [(star4(), "thm1.2"), (tadpole(), "thm1.3")] {
        let basis = compute_spectrum(&g, 100).unwrap();
        let m = matrix_elements(&preset(name, &g).unwrap(), &basis).unwrap();
        let fit = assumption_i1_check(&m, 4.1);
        assert!(fit.c_fit > 0.0 && fit.violations.is_empty(), "{name}: {fit:?}");
    }
}

#[test]
fn unit_field_orthogonality_at_k100() {
    let g = star4();
    let basis = compute_spectrum(&g, 100).unwrap();
    let m = matrix_elements(&ControlOperator::constant(&g, 1.0), &basis).unwrap();
    let fit = assumption_i1_check(&m, 2.1);
    assert_eq!(fit.violations, (2..=100).collect::<Vec<_>>());
}

#[test]
fn no_resonances_on_generic_star() {
    let g = star4();
    let basis = compute_spectrum(&g, 40).unwrap();
    let m = matrix_elements(&preset("thm1.2", &g).unwrap(), &basis).unwrap();
    assert!(assumption_i2_check(&m, &basis.lambdas(), 1e-9).is_empty());
    let zero = qgraph::operator::ControlMatrix::from_real(nalgebra::DMatrix::zeros(40, 40)).unwrap();
    let lambdas = basis.lambdas();
    assert_eq!(i2_brute(&zero, &lambdas, 1e-3), i2_sorted(&zero, &lambdas, 1e-3));
}

#[test]
fn perturbation_is_second_order_and_bounded() {
    let g = star4();
    let basis = compute_spectrum(&g, 30).unwrap();
    let m = matrix_elements(&preset("thm1.2", &g).unwrap(), &basis).unwrap();
    let l = basis.lambdas();
    let slope = perturbation_slope(&l, &m, 0, &[1e-1, 3e-2, 1e-2, 3e-3, 1e-3]).unwrap();
    assert!((1.9..=2.1).contains(&slope), "slope {slope}");
    let norm = m.norm();
    for u0 in [0.1, -0.05, 0.01] {
        let p = perturbed_spectrum(&l, &m, u0).unwrap();
        for (a, b) in p.eigenvalues.iter().zip(&l) {
            assert!((a - b).abs() <= u0.abs() * norm * (1.0 + 1e-12));
        }
    }
}
