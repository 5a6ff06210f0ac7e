//! Weighted-quadrature exactness against an independent integration oracle.

mod common;

use std::time::Instant;

use mfwq_core::spline::KnotVector;
use mfwq_core::wq::WqRule1D;

/// Largest `|Σ_q w_{iq} D^b b_j(x_q) − ∫ D^a b_i D^b b_j|` over all pairs.
pub fn exactness_defect(kv: &KnotVector) -> f64 {
    let rule = WqRule1D::new(kv).unwrap_or_else(|e| panic!("p={} knots={:?}: {e}", kv.degree(), kv.knots()));
    let p = kv.degree();
    let t = kv.knots();
    let m = kv.num_funcs();
    let pts = rule.points();
    let mut worst: f64 = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let w = rule.weights(a, b);
            for i in 0..m {
                let (qs, ws) = w.row(i);
                for j in 0..m {
                    let quad: f64 = qs
                        .iter()
                        .zip(ws)
                        .map(|(&q, &wq)| wq * common::bspline_d(t, j, p, b, pts[q]))
                        .sum();
                    let exact = common::integral(t, p, i, a, j, b);
                    worst = worst.max((quad - exact).abs());
                }
            }
        }
    }
    worst
}

#[test]
fn exactness_uniform_and_perturbed() {
    let start = Instant::now();
    for p in 1..=8 {
        for n_el in [4, 8, 16] {
            let uniform = KnotVector::uniform(p, n_el).unwrap();
            let defect = exactness_defect(&uniform);
            assert!(defect <= 1e-10, "uniform p={p} n_el={n_el}: {defect:e}");
            let breaks = common::perturbed_breaks(n_el, p as u64);
            let perturbed = KnotVector::from_breakpoints(p, &breaks).unwrap();
            let defect = exactness_defect(&perturbed);
            assert!(defect <= 1e-10, "perturbed p={p} n_el={n_el}: {defect:e}");
        }
    }
    eprintln!("exactness suite: {:.2} s", start.elapsed().as_secs_f64());
}

#[test]
fn weights_stay_in_test_support() {
    let kv = KnotVector::uniform(4, 8).unwrap();
    let rule = WqRule1D::new(&kv).unwrap();
    for a in 0..2 {
        for b in 0..2 {
            let w = rule.weights(a, b);
            for i in 0..kv.num_funcs() {
                let (lo, hi) = kv.support(i);
                let (qs, _) = w.row(i);
                for &q in qs {
                    let x = rule.points()[q];
                    assert!(x >= lo - 1e-15 && x <= hi + 1e-15);
                }
            }
        }
    }
}
