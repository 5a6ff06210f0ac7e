//! Manufactured solution, geometry maps and pullback coefficients.

use std::f64::consts::PI;

use mfwq_core::coefficients::{jacobian_determinant, stiffness_coefficient, TensorField};
use mfwq_core::geometry::{fd_jacobian, nurbs_quarter_ring_map, quarter_ring_map};
use mfwq_core::problem::{oscillating_grad, oscillating_source, oscillating_u, reference_h1_error};
use proptest::prelude::*;

fn ring_point() -> impl Strategy<Value = [f64; 3]> {
    (1.05f64..1.95, 0.05f64..1.5, 0.05f64..0.95).prop_map(|(r, t, z)| [r * t.cos(), r * t.sin(), z])
}

proptest! {
    #[test]
    fn source_is_negative_laplacian(x in ring_point()) {
        let h = 1e-3;
        let mut lap = 0.0;
        for l in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[l] += h;
            xm[l] -= h;
            lap += (oscillating_u(&xp) - 2.0 * oscillating_u(&x) + oscillating_u(&xm)) / (h * h);
        }
        let f = oscillating_source(&x);
        prop_assert!((f + lap).abs() <= 2e-3 * (1.0 + f.abs()), "f={f} fd={}", -lap);
    }

    #[test]
    fn gradient_matches_differences(x in ring_point()) {
        let h = 1e-6;
        let g = oscillating_grad(&x);
        for l in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[l] += h;
            xm[l] -= h;
            let fd = (oscillating_u(&xp) - oscillating_u(&xm)) / (2.0 * h);
            prop_assert!((fd - g[l]).abs() <= 1e-6 * (1.0 + g[l].abs()));
        }
    }

    #[test]
    fn ring_jacobians_match_differences(xi in prop::array::uniform3(0.01f64..0.99)) {
        for geom in [quarter_ring_map(), nurbs_quarter_ring_map()] {
            let diff = geom.jacobian(&xi) - fd_jacobian(&geom, &xi, 1e-6);
            prop_assert!(diff.amax() < 1e-7);
            let x = geom.map(&xi);
            let r = x[0].hypot(x[1]);
            prop_assert!((r - (1.0 + xi[0])).abs() < 1e-13);
            prop_assert!((x[2] - xi[2]).abs() < 1e-15);
        }
    }

    #[test]
    fn polar_ring_pullback_is_diagonal(xi in prop::array::uniform3(0.0f64..1.0)) {
        let geom = quarter_ring_map();
        let r = 1.0 + xi[0];
        let det = jacobian_determinant(&geom, &xi).unwrap();
        prop_assert!((det - PI / 2.0 * r).abs() < 1e-13);
        let c = stiffness_coefficient(&geom, &TensorField::Identity, &xi).unwrap();
        let want = [r * PI / 2.0, 2.0 / (r * PI), r * PI / 2.0];
        for i in 0..3 {
            prop_assert!((c[(i, i)] - want[i]).abs() < 1e-12);
            for j in 0..3 {
                if i != j {
                    prop_assert!(c[(i, j)].abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn solution_regression_value() {
    let s = 1.5 / 2f64.sqrt();
    let u = oscillating_u(&[s, s, 0.1]);
    assert!((u - (-1.4532371291069224)).abs() < 1e-13, "{u}");
}

#[test]
fn solution_vanishes_on_boundary() {
    for k in 0..=16 {
        let t = k as f64 / 16.0 * PI / 2.0;
        for r in [1.0, 2.0] {
            assert!(oscillating_u(&[r * t.cos(), r * t.sin(), 0.37]).abs() < 1e-12);
        }
    }
}

#[test]
fn reference_table_cells() {
    assert_eq!(reference_h1_error(2, 5), Some(7.1e-2));
    assert_eq!(reference_h1_error(3, 5), Some(3.3e-2));
    assert_eq!(reference_h1_error(5, 5), Some(6.8e-3));
    assert_eq!(reference_h1_error(8, 5), Some(9.2e-4));
    assert_eq!(reference_h1_error(3, 4), Some(4.5e-1));
    assert_eq!(reference_h1_error(3, 6), Some(2.5e-3));
    assert_eq!(reference_h1_error(10, 8), Some(2.8e-13));
}
