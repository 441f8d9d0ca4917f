use std::f64::consts::PI;

use proptest::prelude::*;
use qgraph::gaps::{
    analyze_graph_gaps, GapViolation,
    fit_gap_auto, fit_gap_constants, merged_dirichlet_gap, neumann_star_roots, partition_classes, small_divisor_check,
};
use qgraph::graph::{EdgeLength, MetricGraph, VertexCondition::*};
use qgraph::spectrum::compute_spectrum;

fn check_partition(l: &[f64], delta: f64, m: usize) {
    let p = partition_classes(l, delta, m).unwrap();
    for (a, ra) in p.classes.iter().enumerate() {
        assert!(ra.len() <= m);
        for (b, rb) in p.classes.iter().enumerate() {
            for i in ra.clone() {
                for j in rb.clone() {
                    let d = (l[i] - l[j]).abs();
                    if a == b && i != j {
                        assert!(d < delta * (m - 1) as f64);
                    } else if a != b {
                        assert!(d >= delta);
                    }
                }
            }
        }
    }
}

#[test]
fn interval_constants_by_hand() {
    // λ_k = k²π²/L², L = 2: consecutive gaps (2k+1)π²/4
    let g = MetricGraph::interval(EdgeLength::ratio(2, 1), Dirichlet, Dirichlet).unwrap();
    let l = compute_spectrum(&g, 60).unwrap().lambdas();
    let r = fit_gap_constants(&l, 1).unwrap();
    let hand = 3.0 * PI * PI / 4.0;
    assert!((r.delta - hand).abs() < 1e-10 * hand);
    assert_eq!(r.d_tilde, Some(0.0));
    assert!((r.c_fit - hand).abs() < 1e-10 * hand);
    assert_eq!(r.worst_index, 1);
}

#[test]
fn test_graphs_satisfy_gap_hypotheses() {
    let tadpole = MetricGraph::tadpole(EdgeLength::ratio(1, 1), EdgeLength::sqrt(2), Dirichlet).unwrap();
    let star = MetricGraph::star(
        &[EdgeLength::ratio(1, 1), EdgeLength::sqrt(2), EdgeLength::sqrt(3), EdgeLength::sqrt(5)],
        Dirichlet,
    )
    .unwrap();
    for g in [tadpole, star] {
        let l = compute_spectrum(&g, 500).unwrap().lambdas();
        let r = fit_gap_auto(&l, 6).unwrap();
        assert!(r.violations.is_empty(), "{r:?}");
        assert!(r.d_tilde.unwrap() <= 1.0 && r.c_fit > 0.0);
        check_partition(&l, r.delta, r.m);
        // δ·M is monotone in M
        let dm: Vec<f64> = (1..=6).map(|m| fit_gap_constants(&l, m).unwrap().delta * m as f64).collect();
        assert!(dm.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn rational_tadpole_fails() {
    let g = MetricGraph::tadpole(EdgeLength::ratio(1, 1), EdgeLength::ratio(1, 2), Dirichlet).unwrap();
    let l = compute_spectrum(&g, 200).unwrap().lambdas();
    // numerically the gaps are fine; the declared lengths are what fails
    assert!(fit_gap_auto(&l, 4).unwrap().violations.is_empty());
    let r = analyze_graph_gaps(&g, &l, None, 4).unwrap();
    assert_eq!(r.violations, vec![GapViolation::RationalLengths { pairs: vec![(1, 2)] }]);
    let g = MetricGraph::tadpole(EdgeLength::ratio(1, 1), EdgeLength::sqrt(2), Dirichlet).unwrap();
    let l = compute_spectrum(&g, 200).unwrap().lambdas();
    assert!(analyze_graph_gaps(&g, &l, None, 4).unwrap().violations.is_empty());
}

#[test]
fn small_divisors_two_star() {
    let irr = [EdgeLength::ratio(1, 1), EdgeLength::sqrt(2)];
    let roots = neumann_star_roots(&irr, 300).unwrap();
    // independent check: roots of sin(ω(1+√2)) = 0
    let total = 1.0 + 2f64.sqrt();
    for (n, w) in roots.iter().enumerate() {
        let exact = (n + 1) as f64 * PI / total;
        assert!((w - exact).abs() < 1e-9 * exact);
    }
    let r = small_divisor_check(&roots, &irr, 0.1);
    assert!(r.c_eps > 0.0 && !r.flagged, "{r:?}");

    let rat = [EdgeLength::ratio(1, 1), EdgeLength::ratio(1, 2)];
    let roots = neumann_star_roots(&rat, 300).unwrap();
    assert!(small_divisor_check(&roots, &rat, 0.1).flagged);
}

#[test]
fn merged_gap_rational_decays() {
    let one = [EdgeLength::ratio(1, 1)];
    let two = [EdgeLength::ratio(2, 1)];
    let r = merged_dirichlet_gap(&one, &two, 0.5, 500);
    assert!(r.flagged && r.c == 0.0);
    let r = merged_dirichlet_gap(&one, &[EdgeLength::sqrt(2)], 0.5, 500);
    assert!(r.c > 0.0);
}

proptest! {
    #[test]
    fn partitions_satisfy_invariants(steps in prop::collection::vec(0.01f64..5.0, 5..60), m in 1usize..5) {
        let mut l = vec![0.0];
        for s in &steps { l.push(l.last().unwrap() + s); }
        let r = fit_gap_constants(&l, m).unwrap();
        if partition_classes(&l, r.delta, m).is_ok() {
            check_partition(&l, r.delta, m);
        }
        for mm in 1..m {
            let lower = fit_gap_constants(&l, mm).unwrap();
            prop_assert!(r.delta * m as f64 >= lower.delta * mm as f64 - 1e-12);
        }
    }
}
