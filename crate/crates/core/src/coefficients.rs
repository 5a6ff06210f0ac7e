//! Coefficient fields and their pullback to the parametric domain.
//!
//! Physical fields are functions of the padded physical point `F(ξ)`.
//! The pulled-back mass coefficient is `c = α(F(ξ)) det J` and the
//! stiffness coefficient matrix is `C = det J · J^{-1} K J^{-T}` with
//! `J_ij = ∂F_i/∂ξ_j`.

use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::geometry::GeometryMap;

pub type ScalarFn = Arc<dyn Fn(&[f64; 3]) -> f64 + Send + Sync>;
pub type TensorFn = Arc<dyn Fn(&[f64; 3]) -> Matrix3<f64> + Send + Sync>;

/// Scalar field `α` on the physical domain.
#[derive(Clone)]
pub enum ScalarField {
    Zero,
    Constant(f64),
    Function(ScalarFn),
}

impl ScalarField {
    pub fn function(f: impl Fn(&[f64; 3]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField::Function(Arc::new(f))
    }

    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        match self {
            ScalarField::Zero => 0.0,
            ScalarField::Constant(v) => *v,
            ScalarField::Function(f) => f(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ScalarField::Zero) || matches!(self, ScalarField::Constant(v) if *v == 0.0)
    }

    pub fn is_constant(&self) -> bool {
        !matches!(self, ScalarField::Function(_))
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Zero => write!(f, "Zero"),
            ScalarField::Constant(v) => write!(f, "Constant({v})"),
            ScalarField::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// Symmetric positive definite diffusion tensor `K` on the physical domain.
#[derive(Clone)]
pub enum TensorField {
    Identity,
    Constant(Matrix3<f64>),
    Function(TensorFn),
}

impl TensorField {
    pub fn function(f: impl Fn(&[f64; 3]) -> Matrix3<f64> + Send + Sync + 'static) -> Self {
        TensorField::Function(Arc::new(f))
    }

    pub fn eval(&self, x: &[f64; 3]) -> Matrix3<f64> {
        match self {
            TensorField::Identity => Matrix3::identity(),
            TensorField::Constant(k) => *k,
            TensorField::Function(f) => f(x),
        }
    }

    pub fn is_constant(&self) -> bool {
        !matches!(self, TensorField::Function(_))
    }
}

impl fmt::Debug for TensorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorField::Identity => write!(f, "Identity"),
            TensorField::Constant(k) => write!(f, "Constant({k:?})"),
            TensorField::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// Nominal flops of the pullback arithmetic per point (beyond the geometry).
pub const PULLBACK_FLOPS: u64 = 60;

fn checked_det(xi: &[f64], jac: &Matrix3<f64>) -> Result<f64> {
    let det = jac.determinant();
    if det > 0.0 && det.is_finite() {
        Ok(det)
    } else {
        let mut point = [0.0; 3];
        point[..xi.len()].copy_from_slice(xi);
        Err(Error::DegenerateJacobian { point, det })
    }
}

/// `α(F(ξ)) det J(ξ)`.
pub fn mass_coefficient(geom: &GeometryMap, alpha: &ScalarField, xi: &[f64]) -> Result<f64> {
    let (x, jac) = geom.map_and_jacobian(xi);
    let det = checked_det(xi, &jac)?;
    Ok(alpha.eval(&x) * det)
}

/// `det J · J^{-1} K(F(ξ)) J^{-T}`; only the leading `d × d` block is meaningful.
pub fn stiffness_coefficient(geom: &GeometryMap, k: &TensorField, xi: &[f64]) -> Result<Matrix3<f64>> {
    let (x, jac) = geom.map_and_jacobian(xi);
    let det = checked_det(xi, &jac)?;
    let inv = jac.try_inverse().ok_or_else(|| {
        let mut point = [0.0; 3];
        point[..xi.len()].copy_from_slice(xi);
        Error::DegenerateJacobian { point, det }
    })?;
    Ok(det * inv * k.eval(&x) * inv.transpose())
}

/// `det J` at `ξ`, rejecting non-positive values.
pub fn jacobian_determinant(geom: &GeometryMap, xi: &[f64]) -> Result<f64> {
    checked_det(xi, &geom.jacobian(xi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::quarter_ring_map;
    use std::f64::consts::PI;

    #[test]
    fn identity_pullbacks() {
        let g = GeometryMap::Identity { dim: 3 };
        let xi = [0.1, 0.2, 0.3];
        assert_eq!(mass_coefficient(&g, &ScalarField::Constant(1.0), &xi).unwrap(), 1.0);
        assert_eq!(stiffness_coefficient(&g, &TensorField::Identity, &xi).unwrap(), Matrix3::identity());
    }

    #[test]
    fn ring_closed_forms() {
        let g = quarter_ring_map();
        let xi = [0.4, 0.7, 0.2];
        let r = 1.4;
        let c = mass_coefficient(&g, &ScalarField::Constant(1.0), &xi).unwrap();
        assert!((c - PI / 2.0 * r).abs() < 1e-14);
        let k = stiffness_coefficient(&g, &TensorField::Identity, &xi).unwrap();
        let expected = Matrix3::new(r * PI / 2.0, 0.0, 0.0, 0.0, 2.0 / (r * PI), 0.0, 0.0, 0.0, r * PI / 2.0);
        assert!((k - expected).amax() < 1e-13);
    }

    #[test]
    fn degenerate_map_reported() {
        let g = GeometryMap::Affine {
            dim: 2,
            offset: [0.0; 3],
            matrix: Matrix3::new(1.0, 2.0, 0.0, 2.0, 4.0, 0.0, 0.0, 0.0, 1.0),
        };
        let err = mass_coefficient(&g, &ScalarField::Constant(1.0), &[0.5, 0.5]).unwrap_err();
        assert!(matches!(err, Error::DegenerateJacobian { point, .. } if point == [0.5, 0.5, 0.0]));
    }
}
