//! The oscillating manufactured Poisson benchmark.
//!
//! `u = sin(5πx1) sin(5πx2) sin(5πx3) (ρ − 1)(ρ − 4)` with `ρ = x1² + x2²`,
//! `K = I`, `α = 0` and `f = −Δu`. The solution vanishes on the boundary
//! of the thick quarter ring and of the unit cube.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::coefficients::{ScalarField, ScalarFn, TensorField};

pub type VectorFn = Arc<dyn Fn(&[f64; 3]) -> [f64; 3] + Send + Sync>;

/// Exact solution, its gradient and the data of `−div(K∇u) + αu = f`.
#[derive(Clone)]
pub struct ManufacturedCase {
    pub name: &'static str,
    pub u: ScalarFn,
    pub grad: VectorFn,
    pub f: ScalarField,
    pub k: TensorField,
    pub alpha: ScalarField,
}

impl std::fmt::Debug for ManufacturedCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManufacturedCase")
            .field("name", &self.name)
            .field("k", &self.k)
            .field("alpha", &self.alpha)
            .finish_non_exhaustive()
    }
}

const OMEGA: f64 = 5.0 * PI;

pub fn oscillating_u(x: &[f64; 3]) -> f64 {
    let rho = x[0] * x[0] + x[1] * x[1];
    (OMEGA * x[0]).sin() * (OMEGA * x[1]).sin() * (OMEGA * x[2]).sin() * (rho - 1.0) * (rho - 4.0)
}

pub fn oscillating_grad(x: &[f64; 3]) -> [f64; 3] {
    let (s1, c1) = (OMEGA * x[0]).sin_cos();
    let (s2, c2) = (OMEGA * x[1]).sin_cos();
    let (s3, c3) = (OMEGA * x[2]).sin_cos();
    let rho = x[0] * x[0] + x[1] * x[1];
    let r = (rho - 1.0) * (rho - 4.0);
    let dr = 2.0 * rho - 5.0;
    let s = s1 * s2 * s3;
    [
        OMEGA * c1 * s2 * s3 * r + s * dr * 2.0 * x[0],
        OMEGA * s1 * c2 * s3 * r + s * dr * 2.0 * x[1],
        OMEGA * s1 * s2 * c3 * r,
    ]
}

/// `−Δu`.
pub fn oscillating_source(x: &[f64; 3]) -> f64 {
    let (s1, c1) = (OMEGA * x[0]).sin_cos();
    let (s2, c2) = (OMEGA * x[1]).sin_cos();
    let s3 = (OMEGA * x[2]).sin();
    let rho = x[0] * x[0] + x[1] * x[1];
    let r = (rho - 1.0) * (rho - 4.0);
    let dr = 2.0 * rho - 5.0;
    let s = s1 * s2 * s3;
    let grad_dot = OMEGA * s3 * dr * 2.0 * (c1 * s2 * x[0] + s1 * c2 * x[1]);
    let lap = -3.0 * OMEGA * OMEGA * s * r + 2.0 * grad_dot + s * (16.0 * rho - 20.0);
    -lap
}

pub fn oscillating_case() -> ManufacturedCase {
    ManufacturedCase {
        name: "oscillating",
        u: Arc::new(oscillating_u),
        grad: Arc::new(oscillating_grad),
        f: ScalarField::function(oscillating_source),
        k: TensorField::Identity,
        alpha: ScalarField::Zero,
    }
}

/// Reference relative H¹ errors of the weighted-quadrature solver on the
/// quarter ring, rows `p = 1..=10`, columns `h = 2^-4 ..= 2^-8`.
pub const REFERENCE_H1_ERRORS: [[f64; 5]; 10] = [
    [5.8e-1, 2.8e-1, 1.4e-1, 6.8e-2, 3.4e-2],
    [5.3e-1, 7.1e-2, 1.2e-2, 2.6e-3, 6.2e-4],
    [4.5e-1, 3.3e-2, 2.5e-3, 2.7e-4, 3.2e-5],
    [5.1e-1, 1.4e-2, 3.8e-4, 1.8e-5, 1.0e-6],
    [4.4e-1, 6.8e-3, 7.1e-5, 1.5e-6, 4.3e-8],
    [4.9e-1, 3.3e-2, 1.3e-5, 1.2e-7, 1.6e-9],
    [4.1e-1, 1.7e-3, 2.5e-6, 1.1e-8, 6.7e-11],
    [4.7e-1, 9.2e-4, 5.1e-7, 9.3e-10, 2.8e-12],
    [3.8e-1, 5.2e-4, 1.0e-7, 8.4e-11, 1.4e-13],
    [4.4e-1, 3.0e-4, 2.2e-8, 7.8e-12, 2.8e-13],
];

/// Reference error for degree `p` and mesh size `h = 2^-k`, if tabulated.
pub fn reference_h1_error(p: usize, k: usize) -> Option<f64> {
    if !(1..=10).contains(&p) || !(4..=8).contains(&k) {
        return None;
    }
    Some(REFERENCE_H1_ERRORS[p - 1][k - 4])
}
