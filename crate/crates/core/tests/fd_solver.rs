//! Fast-diagonalization preconditioner and Krylov solvers on model problems.

use mfwq_core::assembly::{assemble_rhs, assemble_sgq, Form};
use mfwq_core::coefficients::{ScalarField, TensorField};
use mfwq_core::fd::FdPreconditioner;
use mfwq_core::geometry::GeometryMap;
use mfwq_core::krylov::{bicgstab, cg, IdentityPreconditioner};
use mfwq_core::norms::error_norms;
use mfwq_core::operators::{build_rules, SystemOperator};
use mfwq_core::spline::TensorSpace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Forward error `‖P⁻¹(P v) − v‖∞ / ‖v‖∞` and backward error
/// `‖P z − r‖∞ / ‖r‖∞` for `z = P⁻¹ r`, `r = P v`.
fn round_trip(space: &TensorSpace, sigma: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let fd = FdPreconditioner::setup(space, sigma).unwrap();
    let v: Vec<f64> = (0..space.num_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let r = fd.apply_operator(&v).unwrap();
    let z = fd.apply(&r).unwrap();
    let pz = fd.apply_operator(&z).unwrap();
    let inf = |x: &[f64]| x.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let gap = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    (gap(&z, &v) / inf(&v), gap(&pz, &r) / inf(&r))
}

#[test]
fn fd_inverts_kronecker_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in 1..=8 {
        for n_el in [4, 8, 32] {
            let space = TensorSpace::uniform(3, p, n_el).unwrap();
            let (forward, backward) = round_trip(&space, 0.0, &mut rng);
            assert!(backward <= 1e-13, "p={p} n_el={n_el}: backward {backward:e}");
            if p <= 6 {
                assert!(forward <= 1e-10, "p={p} n_el={n_el}: forward {forward:e}");
            }
        }
    }
    let space = TensorSpace::uniform(3, 3, 8).unwrap();
    let (forward, backward) = round_trip(&space, 2.5, &mut rng);
    assert!(forward <= 1e-10 && backward <= 1e-13);
}

#[test]
fn fd_cg_on_cube_converges_immediately() {
    let geom = GeometryMap::Identity { dim: 3 };
    for p in 1..=4 {
        for n_el in [4, 8] {
            let space = TensorSpace::uniform(3, p, n_el).unwrap();
            let k = assemble_sgq(&space, &geom, &Form::Stiffness(TensorField::Identity), p + 1).unwrap();
            let fd = FdPreconditioner::setup(&space, 0.0).unwrap();
            let f = ScalarField::function(|x| x[0] * (1.0 - x[1]) + x[2].sin());
            let b = assemble_rhs(&space, &geom, &f, p + 1).unwrap();
            let (_, report) = cg(&k, &fd, &b, 1e-8, 100).unwrap();
            assert!(report.converged);
            assert!(report.iterations <= 3, "p={p} n_el={n_el}: {} iterations", report.iterations);
            let (_, plain) = cg(&k, &IdentityPreconditioner, &b, 1e-8, 1000).unwrap();
            assert!(plain.iterations > report.iterations);
        }
    }
}

/// `u = Π x_l(1 − x_l)` lies in every space of degree ≥ 2, so both
/// discretizations reproduce it up to the solver tolerance.
#[test]
fn patch_test_reproduces_quadratic_bubble() {
    let geom = GeometryMap::Identity { dim: 3 };
    let bubble = |t: f64| t * (1.0 - t);
    let u = move |x: &[f64; 3]| bubble(x[0]) * bubble(x[1]) * bubble(x[2]);
    let grad = move |x: &[f64; 3]| {
        [
            (1.0 - 2.0 * x[0]) * bubble(x[1]) * bubble(x[2]),
            bubble(x[0]) * (1.0 - 2.0 * x[1]) * bubble(x[2]),
            bubble(x[0]) * bubble(x[1]) * (1.0 - 2.0 * x[2]),
        ]
    };
    let f = ScalarField::function(move |x| {
        2.0 * (bubble(x[1]) * bubble(x[2]) + bubble(x[0]) * bubble(x[2]) + bubble(x[0]) * bubble(x[1]))
    });
    for p in 2..=4 {
        let space = TensorSpace::uniform(3, p, 4).unwrap();
        let rules = build_rules(&space).unwrap();
        let b = assemble_rhs(&space, &geom, &f, p + 1).unwrap();
        let fd = FdPreconditioner::setup(&space, 0.0).unwrap();

        let op = SystemOperator::setup(&space, &rules, &geom, &TensorField::Identity, &ScalarField::Zero, None).unwrap();
        let (x, report) = bicgstab(&op, &fd, &b, 1e-13, 200).unwrap();
        assert!(report.converged);
        let e = error_norms(&space, &geom, &x, &u, &grad, p + 2).unwrap();
        assert!(e.h1_relative() < 1e-10, "weighted p={p}: {:e}", e.h1_relative());

        let k = assemble_sgq(&space, &geom, &Form::Stiffness(TensorField::Identity), p + 1).unwrap();
        let (x, _) = cg(&k, &fd, &b, 1e-13, 200).unwrap();
        let e = error_norms(&space, &geom, &x, &u, &grad, p + 2).unwrap();
        assert!(e.h1_relative() < 1e-10, "gauss p={p}: {:e}", e.h1_relative());
    }
}
