//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};

/// Degree-0 indicator with the last nonempty span closed on the right.
fn indicator(t: &[f64], i: usize, x: f64) -> f64 {
    let (a, b) = (t[i], t[i + 1]);
    let last = *t.last().unwrap();
    if (a <= x && x < b) || (x == last && b == last && a < b) {
        1.0
    } else {
        0.0
    }
}

/// `B_{i,p}(x)` by the textbook recursion.
pub fn bspline(t: &[f64], i: usize, p: usize, x: f64) -> f64 {
    if p == 0 {
        return indicator(t, i, x);
    }
    let mut v = 0.0;
    let d1 = t[i + p] - t[i];
    if d1 > 0.0 {
        v += (x - t[i]) / d1 * bspline(t, i, p - 1, x);
    }
    let d2 = t[i + p + 1] - t[i + 1];
    if d2 > 0.0 {
        v += (t[i + p + 1] - x) / d2 * bspline(t, i + 1, p - 1, x);
    }
    v
}

/// `B'_{i,p}(x)` by the derivative recursion.
pub fn bspline_deriv(t: &[f64], i: usize, p: usize, x: f64) -> f64 {
    let mut v = 0.0;
    let d1 = t[i + p] - t[i];
    if d1 > 0.0 {
        v += p as f64 / d1 * bspline(t, i, p - 1, x);
    }
    let d2 = t[i + p + 1] - t[i + 1];
    if d2 > 0.0 {
        v -= p as f64 / d2 * bspline(t, i + 1, p - 1, x);
    }
    v
}

pub fn bspline_d(t: &[f64], i: usize, p: usize, deriv: usize, x: f64) -> f64 {
    match deriv {
        0 => bspline(t, i, p, x),
        _ => bspline_deriv(t, i, p, x),
    }
}

/// Gauss–Legendre rule on `[-1, 1]` from the eigenpairs of the Jacobi matrix.
pub fn golub_welsch(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], 2.0 * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// `∫_0^1 D^a B_i D^b B_j` by span-wise Gauss quadrature of the recursion.
pub fn integral(t: &[f64], p: usize, i: usize, a: usize, j: usize, b: usize) -> f64 {
    let (x, w) = golub_welsch(p + 1);
    let mut total = 0.0;
    for s in 0..t.len() - 1 {
        let (lo, hi) = (t[s], t[s + 1]);
        if hi <= lo {
            continue;
        }
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (xk, wk) in x.iter().zip(&w) {
            let y = mid + half * xk;
            total += half * wk * bspline_d(t, i, p, a, y) * bspline_d(t, j, p, b, y);
        }
    }
    total
}

/// Dense Kronecker product `A_d ⊗ … ⊗ A_1` of row-major matrices with the
/// first factor varying fastest.
pub fn dense_kron(factors: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut acc = DMatrix::from_element(1, 1, 1.0);
    for f in factors {
        acc = f.kronecker(&acc);
    }
    acc
}

/// Deterministic perturbation of uniform breakpoints.
pub fn perturbed_breaks(n_el: usize, seed: u64) -> Vec<f64> {
    let h = 1.0 / n_el as f64;
    (0..=n_el)
        .map(|k| {
            if k == 0 || k == n_el {
                k as f64 * h
            } else {
                let s = ((k as u64 * 7919 + seed * 104729) % 1000) as f64 / 1000.0;
                k as f64 * h + 0.3 * h * (s - 0.5)
            }
        })
        .collect()
}
