//! L² and H¹ errors of a discrete solution against an exact one.
//!
//! Integrals are evaluated by tensor Gauss quadrature on the parametric
//! domain, one last-direction span at a time: the discrete solution and
//! its parametric gradient are obtained at the slab points by
//! sum-factorization, then mapped to physical gradients with `J^{-T}`.

use crate::error::{Error, Result};
use crate::geometry::GeometryMap;
use crate::kron::kron_apply_into;
use crate::problem::ManufacturedCase;
use crate::quadrature::GaussGrid;
use crate::sparse::CsrMatrix;
use crate::spline::TensorSpace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub l2_error: f64,
    pub h1_semi_error: f64,
    pub l2_exact: f64,
    pub h1_semi_exact: f64,
}

impl ErrorNorms {
    /// `‖u − u_h‖_{H¹} / ‖u‖_{H¹}` with the full H¹ norm.
    pub fn h1_relative(&self) -> f64 {
        (self.l2_error.powi(2) + self.h1_semi_error.powi(2)).sqrt()
            / (self.l2_exact.powi(2) + self.h1_semi_exact.powi(2)).sqrt()
    }

    pub fn l2_relative(&self) -> f64 {
        self.l2_error / self.l2_exact
    }
}

/// Error norms of `Σ coeffs_i b_i ∘ F^{-1}` against `u` with gradient `grad`.
pub fn error_norms(
    space: &TensorSpace,
    geom: &GeometryMap,
    coeffs: &[f64],
    u: &dyn Fn(&[f64; 3]) -> f64,
    grad: &dyn Fn(&[f64; 3]) -> [f64; 3],
    per_span: usize,
) -> Result<ErrorNorms> {
    if coeffs.len() != space.num_dofs() {
        return Err(Error::ShapeMismatch {
            expected: space.num_dofs(),
            found: coeffs.len(),
        });
    }
    if geom.dim() != space.dim() {
        return Err(Error::InvalidArgument("geometry and space dimensions differ".into()));
    }
    let grid = GaussGrid::new(space.knot_vectors(), per_span);
    let d = grid.dim();
    let slab_len = grid.slab_len();
    let n_last = space.dims()[d - 1];
    let mut uh = vec![0.0; slab_len];
    let mut duh = vec![vec![0.0; slab_len]; d];
    let mut xi = vec![0.0; d];
    let mut acc = [0.0; 4];

    for e in 0..grid.num_slabs() {
        let rows = grid.slab_rows(e);
        let last_vals = grid.values[d - 1].submatrix(rows.clone(), 0..n_last);
        let last_ders = grid.derivatives[d - 1].submatrix(rows, 0..n_last);
        let factors = |deriv: Option<usize>| -> Vec<&CsrMatrix> {
            (0..d)
                .map(|l| match (l + 1 == d, deriv == Some(l)) {
                    (true, true) => &last_ders,
                    (true, false) => &last_vals,
                    (false, true) => &grid.derivatives[l],
                    (false, false) => &grid.values[l],
                })
                .collect()
        };
        kron_apply_into(&factors(None), coeffs, &mut uh, None)?;
        for (l, buf) in duh.iter_mut().enumerate() {
            kron_apply_into(&factors(Some(l)), coeffs, buf, None)?;
        }
        for k in 0..slab_len {
            let w = grid.slab_point(e, k, &mut xi);
            let (x, jac) = geom.map_and_jacobian(&xi);
            let det = jac.determinant();
            if !(det > 0.0) {
                let mut point = [0.0; 3];
                point[..d].copy_from_slice(&xi);
                return Err(Error::DegenerateJacobian { point, det });
            }
            let inv_t = jac.try_inverse().unwrap().transpose();
            let mut g_ref = nalgebra::Vector3::zeros();
            for l in 0..d {
                g_ref[l] = duh[l][k];
            }
            let g_h = inv_t * g_ref;
            let exact = u(&x);
            let g = grad(&x);
            let dw = w * det;
            acc[0] += dw * (exact - uh[k]).powi(2);
            acc[2] += dw * exact * exact;
            for c in 0..d {
                acc[1] += dw * (g[c] - g_h[c]).powi(2);
                acc[3] += dw * g[c] * g[c];
            }
        }
    }
    Ok(ErrorNorms {
        l2_error: acc[0].sqrt(),
        h1_semi_error: acc[1].sqrt(),
        l2_exact: acc[2].sqrt(),
        h1_semi_exact: acc[3].sqrt(),
    })
}

/// Relative H¹ error against a manufactured case.
pub fn h1_relative_error(
    space: &TensorSpace,
    geom: &GeometryMap,
    coeffs: &[f64],
    case: &ManufacturedCase,
    per_span: usize,
) -> Result<f64> {
    Ok(error_norms(space, geom, coeffs, &*case.u, &*case.grad, per_span)?.h1_relative())
}

/// Relative L² error against a manufactured case.
pub fn l2_relative_error(
    space: &TensorSpace,
    geom: &GeometryMap,
    coeffs: &[f64],
    case: &ManufacturedCase,
    per_span: usize,
) -> Result<f64> {
    Ok(error_norms(space, geom, coeffs, &*case.u, &*case.grad, per_span)?.l2_relative())
}
