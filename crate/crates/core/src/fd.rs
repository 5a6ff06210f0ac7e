//! Fast-diagonalization preconditioner.
//!
//! `P = Σ_l M̂_d ⊗ … ⊗ K̂_l ⊗ … ⊗ M̂_1 + σ M̂_d ⊗ … ⊗ M̂_1` built from the
//! exact parametric univariate stiffness and mass matrices of the
//! interior functions. With `K̂_l U_l = M̂_l U_l Λ_l` and `U_lᵀ M̂_l U_l = I`,
//! `P^{-1} = (U_d ⊗ … ⊗ U_1) diag(g) (U_dᵀ ⊗ … ⊗ U_1ᵀ)` with
//! `g = 1 / (Σ_l λ_l + σ)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kron::{kron_apply_into, CostMeter};
use crate::sparse::CsrMatrix;
use crate::spline::{gram_matrix, KnotVector, TensorSpace};

#[derive(Debug, Clone)]
pub struct FdPreconditioner {
    dims: Vec<usize>,
    mass: Vec<CsrMatrix>,
    stiffness: Vec<CsrMatrix>,
    eigenvalues: Vec<Vec<f64>>,
    u: Vec<CsrMatrix>,
    ut: Vec<CsrMatrix>,
    inv_diag: Vec<f64>,
    sigma: f64,
}

fn interior_banded(kv: &KnotVector, a: usize, b: usize) -> (DMatrix<f64>, CsrMatrix) {
    let g = gram_matrix(kv, a, b);
    let n = kv.num_funcs() - 2;
    let dense = g.view((1, 1), (n, n)).into_owned();
    let p = kv.degree();
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in i.saturating_sub(p)..(i + p + 1).min(n) {
            triplets.push((i, j, dense[(i, j)]));
        }
    }
    (dense, CsrMatrix::from_triplets(n, n, &triplets))
}

fn dense_to_csr(m: &DMatrix<f64>) -> CsrMatrix {
    let data: Vec<f64> = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
    CsrMatrix::from_dense(m.nrows(), m.ncols(), &data)
}

/// Solves `K u = λ M u` for symmetric `K` and SPD `M`, returning `(λ, U)`
/// with `Uᵀ M U = I`.
pub fn generalized_eigen(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Eigen("univariate mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Eigen("singular Cholesky factor".into()))?;
    let mut a = &linv * k * linv.transpose();
    a = (&a + a.transpose()) * 0.5;
    let size = a.nrows();
    let eig = a.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lambda: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let q = DMatrix::from_fn(size, size, |r, c| eig.eigenvectors[(r, order[c])]);
    let u = linv.transpose() * q;
    if lambda.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    Ok((lambda, u))
}

impl FdPreconditioner {
    /// Factorizes the univariate problems; `sigma ≥ 0` shifts by the mass term.
    pub fn setup(space: &TensorSpace, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("mass shift {sigma} must be nonnegative")));
        }
        let mut mass = Vec::new();
        let mut stiffness = Vec::new();
        let mut eigenvalues = Vec::new();
        let mut u = Vec::new();
        let mut ut = Vec::new();
        for kv in space.knot_vectors() {
            let (md, ms) = interior_banded(kv, 0, 0);
            let (kd, ks) = interior_banded(kv, 1, 1);
            let (lambda, vecs) = generalized_eigen(&kd, &md)?;
            if lambda[0] <= 0.0 {
                return Err(Error::Eigen(format!("nonpositive eigenvalue {}", lambda[0])));
            }
            u.push(dense_to_csr(&vecs));
            ut.push(dense_to_csr(&vecs.transpose()));
            eigenvalues.push(lambda);
            mass.push(ms);
            stiffness.push(ks);
        }
        let dims = space.dims();
        let n: usize = dims.iter().product();
        let inv_diag = (0..n)
            .map(|idx| {
                let mut rest = idx;
                let mut s = sigma;
                for (l, &nl) in dims.iter().enumerate() {
                    s += eigenvalues[l][rest % nl];
                    rest /= nl;
                }
                1.0 / s
            })
            .collect();
        Ok(Self {
            dims,
            mass,
            stiffness,
            eigenvalues,
            u,
            ut,
            inv_diag,
            sigma,
        })
    }

    pub fn size(&self) -> usize {
        self.inv_diag.len()
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn eigenvalues(&self, l: usize) -> &[f64] {
        &self.eigenvalues[l]
    }

    pub fn univariate_mass(&self, l: usize) -> &CsrMatrix {
        &self.mass[l]
    }

    pub fn univariate_stiffness(&self, l: usize) -> &CsrMatrix {
        &self.stiffness[l]
    }

    /// `max |K̂U − M̂UΛ| / (max|K̂| · max|U|)` in direction `l`.
    pub fn eigen_residual(&self, l: usize) -> f64 {
        let n = self.dims[l];
        let u = self.u[l].to_dense();
        let mut worst: f64 = 0.0;
        let mut col = vec![0.0; n];
        let mut ku = vec![0.0; n];
        let mut mu = vec![0.0; n];
        for c in 0..n {
            for r in 0..n {
                col[r] = u[r * n + c];
            }
            self.stiffness[l].mul_vec(&col, &mut ku);
            self.mass[l].mul_vec(&col, &mut mu);
            for r in 0..n {
                worst = worst.max((ku[r] - self.eigenvalues[l][c] * mu[r]).abs());
            }
        }
        worst / (self.stiffness[l].max_abs() * self.u[l].max_abs())
    }

    /// `max |UᵀM̂U − I|` in direction `l`.
    pub fn orthonormality_defect(&self, l: usize) -> f64 {
        let n = self.dims[l];
        let u = DMatrix::from_row_slice(n, n, &self.u[l].to_dense());
        let m = DMatrix::from_row_slice(n, n, &self.mass[l].to_dense());
        (u.transpose() * m * u - DMatrix::identity(n, n)).amax()
    }

    /// `z = P^{-1} r`.
    pub fn apply_into(&self, r: &[f64], z: &mut [f64], mut meter: Option<&mut CostMeter>) -> Result<()> {
        let n = self.size();
        for len in [r.len(), z.len()] {
            if len != n {
                return Err(Error::ShapeMismatch { expected: n, found: len });
            }
        }
        let mut tmp = vec![0.0; n];
        let ut: Vec<&CsrMatrix> = self.ut.iter().collect();
        kron_apply_into(&ut, r, &mut tmp, meter.as_deref_mut())?;
        for (t, g) in tmp.iter_mut().zip(&self.inv_diag) {
            *t *= g;
        }
        if let Some(m) = meter.as_deref_mut() {
            m.add_flops(n as u64);
        }
        let u: Vec<&CsrMatrix> = self.u.iter().collect();
        kron_apply_into(&u, &tmp, z, meter)
    }

    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        let mut z = vec![0.0; self.size()];
        self.apply_into(r, &mut z, None)?;
        Ok(z)
    }

    /// `P v` through the Kronecker-sum form.
    pub fn apply_operator(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n = self.size();
        if v.len() != n {
            return Err(Error::ShapeMismatch { expected: n, found: v.len() });
        }
        let d = self.dim();
        let mut out = vec![0.0; n];
        let mut part = vec![0.0; n];
        for l in 0..d {
            let factors: Vec<&CsrMatrix> = (0..d).map(|k| if k == l { &self.stiffness[k] } else { &self.mass[k] }).collect();
            kron_apply_into(&factors, v, &mut part, None)?;
            for (o, p) in out.iter_mut().zip(&part) {
                *o += p;
            }
        }
        if self.sigma != 0.0 {
            let factors: Vec<&CsrMatrix> = self.mass.iter().collect();
            kron_apply_into(&factors, v, &mut part, None)?;
            for (o, p) in out.iter_mut().zip(&part) {
                *o += self.sigma * p;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_is_exact_solve() {
        let space = TensorSpace::uniform(1, 3, 10).unwrap();
        let fd = FdPreconditioner::setup(&space, 0.0).unwrap();
        let v: Vec<f64> = (0..fd.size()).map(|i| (i as f64).sin()).collect();
        let pv = fd.apply_operator(&v).unwrap();
        let mut kv = vec![0.0; v.len()];
        fd.univariate_stiffness(0).mul_vec(&v, &mut kv);
        for (a, b) in pv.iter().zip(&kv) {
            assert!((a - b).abs() < 1e-14 * kv.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        }
        let back = fd.apply(&pv).unwrap();
        for (a, b) in back.iter().zip(&v) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn decomposition_checks() {
        for p in [1, 4, 8] {
            let space = TensorSpace::uniform(2, p, 12).unwrap();
            let fd = FdPreconditioner::setup(&space, 0.0).unwrap();
            for l in 0..2 {
                assert!(fd.eigen_residual(l) < 1e-10, "p={p}");
                assert!(fd.orthonormality_defect(l) < 1e-10, "p={p}");
                assert!(fd.eigenvalues(l).iter().all(|&x| x > 0.0));
            }
        }
    }

    #[test]
    fn zero_maps_to_zero_and_sizes_checked() {
        let space = TensorSpace::uniform(3, 2, 4).unwrap();
        let fd = FdPreconditioner::setup(&space, 1.0).unwrap();
        assert!(fd.apply(&vec![0.0; fd.size()]).unwrap().iter().all(|&x| x == 0.0));
        assert!(fd.apply(&[1.0]).is_err());
        assert!(FdPreconditioner::setup(&space, -1.0).is_err());
    }
}
