//! Geometry maps `F: [0,1]^d → Ω` with exact Jacobians.
//!
//! Parametric points are slices of length `d`; physical points and
//! Jacobians are always returned in padded 3D form (unused coordinates
//! zero, unused Jacobian block the identity) so `det` of the padded matrix
//! equals `det` of the `d × d` block.

use std::f64::consts::FRAC_PI_2;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::spline::KnotVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryKind {
    Identity,
    Affine,
    QuarterRing,
    NurbsQuarterRing,
    Spline,
}

/// Tensor B-spline map defined by a control net over the full univariate
/// bases (first direction fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct SplineGeometry {
    knots: Vec<KnotVector>,
    control: Vec<[f64; 3]>,
}

impl SplineGeometry {
    pub fn new(knots: Vec<KnotVector>, control: Vec<[f64; 3]>) -> Result<Self> {
        if knots.is_empty() || knots.len() > 3 {
            return Err(Error::InvalidArgument(format!(
                "spline geometry dimension {} not in 1..=3",
                knots.len()
            )));
        }
        let expected: usize = knots.iter().map(|k| k.num_funcs()).product();
        if control.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                found: control.len(),
            });
        }
        Ok(Self { knots, control })
    }

    /// Control net at the Greville abscissae mapped through `f`; exact for
    /// affine `f` by linear precision of B-splines.
    pub fn from_affine(knots: Vec<KnotVector>, f: impl Fn(&[f64]) -> [f64; 3]) -> Result<Self> {
        let grev: Vec<Vec<f64>> = knots.iter().map(|k| k.greville()).collect();
        let dims: Vec<usize> = grev.iter().map(|g| g.len()).collect();
        let total: usize = dims.iter().product();
        let mut control = Vec::with_capacity(total);
        let mut xi = vec![0.0; dims.len()];
        for idx in 0..total {
            let mut rest = idx;
            for (l, g) in grev.iter().enumerate() {
                xi[l] = g[rest % dims[l]];
                rest /= dims[l];
            }
            control.push(f(&xi));
        }
        Self::new(knots, control)
    }

    pub fn knot_vectors(&self) -> &[KnotVector] {
        &self.knots
    }

    pub fn control_points(&self) -> &[[f64; 3]] {
        &self.control
    }

    fn eval(&self, xi: &[f64]) -> ([f64; 3], Matrix3<f64>) {
        let d = self.knots.len();
        let mut vals = Vec::with_capacity(d);
        let mut ders = Vec::with_capacity(d);
        let mut firsts = Vec::with_capacity(d);
        for (l, kv) in self.knots.iter().enumerate() {
            let p = kv.degree();
            let mut v = vec![0.0; p + 1];
            let mut dv = vec![0.0; p + 1];
            firsts.push(kv.eval_nonzero(xi[l], &mut v, &mut dv));
            vals.push(v);
            ders.push(dv);
        }
        let strides: Vec<usize> = (0..d)
            .map(|l| self.knots[..l].iter().map(|k| k.num_funcs()).product())
            .collect();
        let counts: Vec<usize> = vals.iter().map(|v| v.len()).collect();
        let local: usize = counts.iter().product();
        let mut x = [0.0; 3];
        let mut jac = Matrix3::identity();
        for l in 0..d {
            jac[(l, l)] = 0.0;
        }
        for k in 0..local {
            let mut rest = k;
            let mut flat = 0;
            let mut r = [0usize; 3];
            for l in 0..d {
                r[l] = rest % counts[l];
                rest /= counts[l];
                flat += (firsts[l] + r[l]) * strides[l];
            }
            let cp = self.control[flat];
            let value: f64 = (0..d).map(|l| vals[l][r[l]]).product();
            for c in 0..3 {
                x[c] += value * cp[c];
            }
            for j in 0..d {
                let dj: f64 = (0..d)
                    .map(|l| if l == j { ders[l][r[l]] } else { vals[l][r[l]] })
                    .product();
                for i in 0..d {
                    jac[(i, j)] += dj * cp[i];
                }
            }
        }
        (x, jac)
    }
}

/// Parametrization of the physical domain.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometryMap {
    /// `F(ξ) = ξ` on the unit cube of dimension `dim`.
    Identity { dim: usize },
    /// `F(ξ) = offset + matrix·ξ` (upper-left `dim × dim` block used).
    Affine {
        dim: usize,
        offset: [f64; 3],
        matrix: Matrix3<f64>,
    },
    /// `F(ξ) = ((1+ξ1)cos(πξ2/2), (1+ξ1)sin(πξ2/2), ξ3)`.
    QuarterRing,
    /// Same domain with the angular direction given by the rational
    /// quadratic quarter circle (weights `1, 1/√2, 1`), linear in `ξ1`
    /// and `ξ3`.
    NurbsQuarterRing,
    Spline(SplineGeometry),
}

/// The thick quarter ring `{1 ≤ x1²+x2² ≤ 4, x1,x2 ≥ 0, 0 ≤ x3 ≤ 1}`.
pub fn quarter_ring_map() -> GeometryMap {
    GeometryMap::QuarterRing
}

/// The thick quarter ring with its rational quadratic parametrization.
pub fn nurbs_quarter_ring_map() -> GeometryMap {
    GeometryMap::NurbsQuarterRing
}

/// Unit quarter circle `t ↦ c(t)` as a rational quadratic and its derivative.
fn rational_quarter_circle(t: f64) -> ([f64; 2], [f64; 2]) {
    let w = std::f64::consts::FRAC_1_SQRT_2;
    let s = 1.0 - t;
    let n = [s * s + 2.0 * w * t * s, 2.0 * w * t * s + t * t];
    let dn = [-2.0 * s + 2.0 * w * (1.0 - 2.0 * t), 2.0 * w * (1.0 - 2.0 * t) + 2.0 * t];
    let den = s * s + 2.0 * w * t * s + t * t;
    let dden = -2.0 * s + 2.0 * w * (1.0 - 2.0 * t) + 2.0 * t;
    let c = [n[0] / den, n[1] / den];
    let dc = [
        (dn[0] * den - n[0] * dden) / (den * den),
        (dn[1] * den - n[1] * dden) / (den * den),
    ];
    (c, dc)
}

impl GeometryMap {
    pub fn dim(&self) -> usize {
        match self {
            GeometryMap::Identity { dim } | GeometryMap::Affine { dim, .. } => *dim,
            GeometryMap::QuarterRing | GeometryMap::NurbsQuarterRing => 3,
            GeometryMap::Spline(s) => s.knots.len(),
        }
    }

    pub fn kind(&self) -> GeometryKind {
        match self {
            GeometryMap::Identity { .. } => GeometryKind::Identity,
            GeometryMap::Affine { .. } => GeometryKind::Affine,
            GeometryMap::QuarterRing => GeometryKind::QuarterRing,
            GeometryMap::NurbsQuarterRing => GeometryKind::NurbsQuarterRing,
            GeometryMap::Spline(_) => GeometryKind::Spline,
        }
    }

    fn check_point(&self, xi: &[f64]) {
        assert_eq!(xi.len(), self.dim(), "parametric point has wrong dimension");
    }

    /// Physical image `F(ξ)`, zero-padded to three coordinates.
    pub fn map(&self, xi: &[f64]) -> [f64; 3] {
        self.check_point(xi);
        match self {
            GeometryMap::Identity { .. } => pad(xi),
            GeometryMap::Affine { dim, offset, matrix } => {
                let mut x = *offset;
                for i in 0..*dim {
                    for j in 0..*dim {
                        x[i] += matrix[(i, j)] * xi[j];
                    }
                }
                x
            }
            GeometryMap::QuarterRing => {
                let r = 1.0 + xi[0];
                let t = FRAC_PI_2 * xi[1];
                [r * t.cos(), r * t.sin(), xi[2]]
            }
            GeometryMap::NurbsQuarterRing => {
                let r = 1.0 + xi[0];
                let (c, _) = rational_quarter_circle(xi[1]);
                [r * c[0], r * c[1], xi[2]]
            }
            GeometryMap::Spline(s) => s.eval(xi).0,
        }
    }

    /// `J_ij = ∂F_i/∂ξ_j`, padded with the identity outside the `d × d` block.
    pub fn jacobian(&self, xi: &[f64]) -> Matrix3<f64> {
        self.check_point(xi);
        match self {
            GeometryMap::Identity { .. } => Matrix3::identity(),
            GeometryMap::Affine { dim, matrix, .. } => {
                let mut j = Matrix3::identity();
                for r in 0..*dim {
                    for c in 0..*dim {
                        j[(r, c)] = matrix[(r, c)];
                    }
                }
                j
            }
            GeometryMap::QuarterRing => {
                let r = 1.0 + xi[0];
                let t = FRAC_PI_2 * xi[1];
                let (s, c) = t.sin_cos();
                Matrix3::new(c, -FRAC_PI_2 * r * s, 0.0, s, FRAC_PI_2 * r * c, 0.0, 0.0, 0.0, 1.0)
            }
            GeometryMap::NurbsQuarterRing => {
                let r = 1.0 + xi[0];
                let (c, dc) = rational_quarter_circle(xi[1]);
                Matrix3::new(c[0], r * dc[0], 0.0, c[1], r * dc[1], 0.0, 0.0, 0.0, 1.0)
            }
            GeometryMap::Spline(s) => s.eval(xi).1,
        }
    }

    /// Image point and Jacobian in one evaluation.
    pub fn map_and_jacobian(&self, xi: &[f64]) -> ([f64; 3], Matrix3<f64>) {
        match self {
            GeometryMap::Spline(s) => {
                self.check_point(xi);
                s.eval(xi)
            }
            _ => (self.map(xi), self.jacobian(xi)),
        }
    }

    /// Nominal flops for one [`map_and_jacobian`](Self::map_and_jacobian).
    pub fn eval_cost(&self) -> u64 {
        match self {
            GeometryMap::Identity { .. } => 0,
            GeometryMap::Affine { dim, .. } => (2 * dim * dim) as u64,
            GeometryMap::QuarterRing => 40,
            GeometryMap::NurbsQuarterRing => 45,
            GeometryMap::Spline(s) => {
                let d = s.knots.len() as u64;
                let local: u64 = s.knots.iter().map(|k| k.degree() as u64 + 1).product();
                let per_fn: u64 = s.knots.iter().map(|k| 4 * (k.degree() as u64 + 1).pow(2)).sum();
                per_fn + local * (2 * 3 + d * (d + 2 * d))
            }
        }
    }
}

fn pad(xi: &[f64]) -> [f64; 3] {
    let mut x = [0.0; 3];
    x[..xi.len()].copy_from_slice(xi);
    x
}

/// Central finite-difference Jacobian with step `eps`.
pub fn fd_jacobian(geom: &GeometryMap, xi: &[f64], eps: f64) -> Matrix3<f64> {
    let d = geom.dim();
    let mut jac = Matrix3::identity();
    let mut plus = xi.to_vec();
    let mut minus = xi.to_vec();
    for j in 0..d {
        plus[j] = xi[j] + eps;
        minus[j] = xi[j] - eps;
        let fp = geom.map(&plus);
        let fm = geom.map(&minus);
        for i in 0..d {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * eps);
        }
        plus[j] = xi[j];
        minus[j] = xi[j];
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ring_corners() {
        let g = quarter_ring_map();
        let a = g.map(&[0.0, 0.0, 0.0]);
        assert_eq!(a, [1.0, 0.0, 0.0]);
        let b = g.map(&[1.0, 1.0, 1.0]);
        assert!(b[0].abs() < 1e-15 && (b[1] - 2.0).abs() < 1e-15 && b[2] == 1.0);
    }

    #[test]
    fn ring_determinant() {
        let g = quarter_ring_map();
        for xi in [[0.0, 0.3, 0.1], [0.5, 0.9, 0.7], [1.0, 0.0, 1.0]] {
            let det = g.jacobian(&xi).determinant();
            assert!((det - PI / 2.0 * (1.0 + xi[0])).abs() < 1e-14);
        }
    }

    #[test]
    fn ring_jacobian_matches_differences() {
        let g = quarter_ring_map();
        let xi = [0.37, 0.61, 0.22];
        let diff = g.jacobian(&xi) - fd_jacobian(&g, &xi, 1e-6);
        assert!(diff.amax() < 1e-8);
    }

    #[test]
    fn nurbs_ring_stays_on_circles() {
        let g = nurbs_quarter_ring_map();
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            for (a, r) in [(0.0, 1.0), (1.0, 2.0), (0.5, 1.5)] {
                let x = g.map(&[a, t, 0.3]);
                assert!((x[0].hypot(x[1]) - r).abs() < 1e-14);
            }
        }
        assert!((g.map(&[0.0, 0.0, 0.0])[0] - 1.0).abs() < 1e-15);
        assert!((g.map(&[1.0, 1.0, 1.0])[1] - 2.0).abs() < 1e-15);
        let xi = [0.37, 0.61, 0.22];
        let diff = g.jacobian(&xi) - fd_jacobian(&g, &xi, 1e-6);
        assert!(diff.amax() < 1e-8);
        assert!(g.jacobian(&xi).determinant() > 0.0);
    }

    #[test]
    fn spline_reproduces_affine_map() {
        let kv = KnotVector::uniform(3, 4).unwrap();
        let a = Matrix3::new(2.0, 0.5, 0.0, 0.1, 1.5, 0.0, 0.0, 0.0, 1.0);
        let off = [1.0, -2.0, 0.0];
        let affine = GeometryMap::Affine { dim: 2, offset: off, matrix: a };
        let spline = SplineGeometry::from_affine(vec![kv.clone(), kv], |xi| affine.map(xi)).unwrap();
        let sg = GeometryMap::Spline(spline);
        for xi in [[0.0, 0.0], [0.3, 0.8], [1.0, 0.45]] {
            let (x, j) = sg.map_and_jacobian(&xi);
            let y = affine.map(&xi);
            for c in 0..3 {
                assert!((x[c] - y[c]).abs() < 1e-13);
            }
            assert!((j - affine.jacobian(&xi)).amax() < 1e-12);
        }
    }

    #[test]
    fn identity_padding() {
        let g = GeometryMap::Identity { dim: 2 };
        assert_eq!(g.map(&[0.2, 0.4]), [0.2, 0.4, 0.0]);
        assert_eq!(g.jacobian(&[0.2, 0.4]).determinant(), 1.0);
    }
}
