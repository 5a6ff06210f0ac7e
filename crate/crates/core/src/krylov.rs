//! Preconditioned CG and BiCGStab.
//!
//! Both solvers start from `x = 0` and stop when `‖r_k‖₂ / ‖b‖₂ ≤ tol`.
//! BiCGStab is right-preconditioned, so its recursive residual is the
//! residual of the original system.

use std::io::{self, Write};

use crate::assembly::AssembledMatrix;
use crate::error::{Error, Result};
use crate::fd::FdPreconditioner;
use crate::operators::{MassOperator, StiffnessOperator, SystemOperator};
use crate::sparse::CsrMatrix;

/// Default iteration cap.
pub const DEFAULT_MAXIT: usize = 1000;

/// Square linear map `y = A x`.
pub trait LinearOperator {
    fn size(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()>;
}

/// Approximate inverse `z = P^{-1} r`.
pub trait Preconditioner {
    fn precondition(&self, r: &[f64], z: &mut [f64]) -> Result<()>;
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn precondition(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        z.copy_from_slice(r);
        Ok(())
    }
}

impl Preconditioner for FdPreconditioner {
    fn precondition(&self, r: &[f64], z: &mut [f64]) -> Result<()> {
        self.apply_into(r, z, None)
    }
}

impl LinearOperator for CsrMatrix {
    fn size(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.ncols() || y.len() != self.nrows() {
            return Err(Error::ShapeMismatch {
                expected: self.ncols(),
                found: x.len(),
            });
        }
        self.mul_vec(x, y);
        Ok(())
    }
}

impl LinearOperator for AssembledMatrix {
    fn size(&self) -> usize {
        AssembledMatrix::size(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        LinearOperator::apply(self.matrix(), x, y)
    }
}

impl LinearOperator for MassOperator {
    fn size(&self) -> usize {
        MassOperator::size(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.apply_into(x, y, None)
    }
}

impl LinearOperator for StiffnessOperator {
    fn size(&self) -> usize {
        StiffnessOperator::size(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.apply_into(x, y, None)
    }
}

impl LinearOperator for SystemOperator {
    fn size(&self) -> usize {
        SystemOperator::size(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.apply_into(x, y, None)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrylovReport {
    pub iterations: usize,
    /// Relative residual norms, starting with the initial one.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub matvecs: usize,
    pub precond_applies: usize,
    /// `‖b − A x‖₂ / ‖b‖₂` recomputed at exit.
    pub true_residual: f64,
    pub restarts: usize,
}

impl KrylovReport {
    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().unwrap()
    }

    /// Writes `iteration,relative_residual` lines with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "iteration,relative_residual")?;
        for (k, r) in self.residuals.iter().enumerate() {
            writeln!(out, "{k},{r:.6e}")?;
        }
        Ok(())
    }
}

/// Relative-residual tolerance `η · e` for a known Galerkin error `e`.
pub fn stopping_tolerance(galerkin_rel_error: f64, eta: f64) -> Result<f64> {
    if !(galerkin_rel_error > 0.0) || !galerkin_rel_error.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "reference error {galerkin_rel_error} must be positive"
        )));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta {eta} must be positive")));
    }
    Ok(eta * galerkin_rel_error)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_sizes(a: &dyn LinearOperator, b: &[f64]) -> Result<()> {
    if a.size() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: a.size(),
            found: b.len(),
        });
    }
    Ok(())
}

fn true_residual(a: &dyn LinearOperator, x: &[f64], b: &[f64], bnorm: f64) -> Result<f64> {
    let mut ax = vec![0.0; b.len()];
    a.apply(x, &mut ax)?;
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    Ok(norm(&r) / bnorm)
}

fn zero_rhs_report() -> KrylovReport {
    KrylovReport {
        iterations: 0,
        residuals: vec![0.0],
        converged: true,
        matvecs: 0,
        precond_applies: 0,
        true_residual: 0.0,
        restarts: 0,
    }
}

/// Preconditioned conjugate gradients for symmetric positive definite `A`.
pub fn cg(
    a: &dyn LinearOperator,
    p: &dyn Preconditioner,
    b: &[f64],
    tol: f64,
    maxit: usize,
) -> Result<(Vec<f64>, KrylovReport)> {
    check_sizes(a, b)?;
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((x, zero_rhs_report()));
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    let mut q = vec![0.0; n];
    p.precondition(&r, &mut z)?;
    let mut dir = z.clone();
    let mut rz = dot(&r, &z);
    let mut report = KrylovReport {
        iterations: 0,
        residuals: vec![1.0],
        converged: 1.0 <= tol,
        matvecs: 0,
        precond_applies: 1,
        true_residual: 1.0,
        restarts: 0,
    };
    while !report.converged && report.iterations < maxit {
        a.apply(&dir, &mut q)?;
        report.matvecs += 1;
        let curvature = dot(&dir, &q);
        if !(curvature > 0.0) {
            return Err(Error::Indefinite {
                iteration: report.iterations,
                curvature,
            });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * dir[i];
            r[i] -= alpha * q[i];
        }
        report.iterations += 1;
        let rel = norm(&r) / bnorm;
        report.residuals.push(rel);
        if rel <= tol {
            report.converged = true;
            break;
        }
        p.precondition(&r, &mut z)?;
        report.precond_applies += 1;
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            dir[i] = z[i] + beta * dir[i];
        }
    }
    report.true_residual = true_residual(a, &x, b, bnorm)?;
    Ok((x, report))
}

enum Outcome {
    Converged,
    Exhausted,
    Breakdown,
}

/// Right-preconditioned BiCGStab. On breakdown the iteration restarts once
/// from the current iterate with a perturbed shadow residual.
pub fn bicgstab(
    a: &dyn LinearOperator,
    p: &dyn Preconditioner,
    b: &[f64],
    tol: f64,
    maxit: usize,
) -> Result<(Vec<f64>, KrylovReport)> {
    check_sizes(a, b)?;
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((x, zero_rhs_report()));
    }
    let mut report = KrylovReport {
        iterations: 0,
        residuals: vec![1.0],
        converged: 1.0 <= tol,
        matvecs: 0,
        precond_applies: 0,
        true_residual: 1.0,
        restarts: 0,
    };
    if !report.converged {
        let mut r = b.to_vec();
        let mut shadow = r.clone();
        loop {
            match bicgstab_cycle(a, p, &mut x, &mut r, &shadow, bnorm, tol, maxit, &mut report)? {
                Outcome::Converged => {
                    report.converged = true;
                    break;
                }
                Outcome::Exhausted => break,
                Outcome::Breakdown if report.restarts == 0 => {
                    report.restarts += 1;
                    let mut ax = vec![0.0; n];
                    a.apply(&x, &mut ax)?;
                    report.matvecs += 1;
                    for i in 0..n {
                        r[i] = b[i] - ax[i];
                    }
                    let scale = norm(&r) / (n as f64).sqrt();
                    shadow = r
                        .iter()
                        .enumerate()
                        .map(|(i, ri)| ri + 1e-2 * scale * ((i as f64 + 1.0) * 0.618_033_988_749_895).fract())
                        .collect();
                }
                Outcome::Breakdown => {
                    return Err(Error::Breakdown {
                        iteration: report.iterations,
                    })
                }
            }
        }
    }
    report.true_residual = true_residual(a, &x, b, bnorm)?;
    Ok((x, report))
}

#[allow(clippy::too_many_arguments)]
fn bicgstab_cycle(
    a: &dyn LinearOperator,
    p: &dyn Preconditioner,
    x: &mut [f64],
    r: &mut [f64],
    shadow: &[f64],
    bnorm: f64,
    tol: f64,
    maxit: usize,
    report: &mut KrylovReport,
) -> Result<Outcome> {
    let n = x.len();
    let tiny = f64::EPSILON * f64::EPSILON;
    let mut dir = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho_old, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let shadow_norm = norm(shadow);

    while report.iterations < maxit {
        let rho = dot(shadow, r);
        if rho.abs() <= tiny * shadow_norm * norm(r) {
            return Ok(Outcome::Breakdown);
        }
        let beta = (rho / rho_old) * (alpha / omega);
        for i in 0..n {
            dir[i] = r[i] + beta * (dir[i] - omega * v[i]);
        }
        p.precondition(&dir, &mut phat)?;
        a.apply(&phat, &mut v)?;
        report.precond_applies += 1;
        report.matvecs += 1;
        let sv = dot(shadow, &v);
        if sv.abs() <= tiny * shadow_norm * norm(&v) || sv == 0.0 {
            return Ok(Outcome::Breakdown);
        }
        alpha = rho / sv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        report.iterations += 1;
        let srel = norm(&s) / bnorm;
        if srel <= tol {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            r.copy_from_slice(&s);
            report.residuals.push(srel);
            return Ok(Outcome::Converged);
        }
        p.precondition(&s, &mut shat)?;
        a.apply(&shat, &mut t)?;
        report.precond_applies += 1;
        report.matvecs += 1;
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Ok(Outcome::Breakdown);
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        let rel = norm(r) / bnorm;
        report.residuals.push(rel);
        if rel <= tol {
            return Ok(Outcome::Converged);
        }
        if omega.abs() <= tiny {
            return Ok(Outcome::Breakdown);
        }
        rho_old = rho;
    }
    Ok(Outcome::Exhausted)
}
