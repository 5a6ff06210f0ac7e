//! Weighted-quadrature rules.
//!
//! A univariate rule consists of one point set shared by all basis
//! functions and, for every test function `b_i` and derivative pair
//! `(a, b)`, weights `w^(a,b)_{i,q}` supported on `supp(b_i)` such that
//!
//! ```text
//! Σ_q w^(a,b)_{i,q} D^b b_j(x_q) = ∫ D^a b_i D^b b_j      for all j.
//! ```
//!
//! Points are the endpoints and midpoints of every span; the first and
//! last spans carry `2⌈p/2⌉ + 1` uniformly spaced points instead. Each row
//! is a small local system solved in the minimum-norm least-squares sense.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::spline::{eval_collocation, gram_matrix, KnotVector};

/// Maximum absolute exactness residual accepted for a weight row.
pub const EXACTNESS_TOL: f64 = 1e-11;

fn check_max_regularity(kv: &KnotVector) -> Result<()> {
    let mult = kv.max_interior_multiplicity();
    if mult > 1 {
        return Err(Error::RepeatedInteriorKnot(mult));
    }
    Ok(())
}

/// Endpoints and midpoints of all spans, without boundary refinement.
pub fn base_points(kv: &KnotVector) -> Result<Vec<f64>> {
    check_max_regularity(kv)?;
    let mut pts = Vec::new();
    for (a, b) in kv.spans() {
        pts.push(a);
        pts.push(0.5 * (a + b));
    }
    pts.push(1.0);
    Ok(pts)
}

fn boundary_subdivisions(p: usize) -> usize {
    2 * p.div_ceil(2).max(1)
}

/// Weighted-quadrature points: span endpoints and midpoints, with the
/// first and last span uniformly subdivided into `2⌈p/2⌉` pieces.
pub fn wq_points(kv: &KnotVector) -> Result<Vec<f64>> {
    check_max_regularity(kv)?;
    let spans = kv.spans();
    let sub = boundary_subdivisions(kv.degree());
    let last = spans.len() - 1;
    let mut pts = Vec::new();
    for (e, &(a, b)) in spans.iter().enumerate() {
        let k = if e == 0 || e == last { sub } else { 2 };
        pts.extend((0..k).map(|s| a + (b - a) * s as f64 / k as f64));
    }
    pts.push(1.0);
    Ok(pts)
}

/// Weight matrix `W^(a,b)` (rows: all `m` basis functions, columns: points)
/// for a given sorted point set.
pub fn wq_weights(kv: &KnotVector, points: &[f64], a: usize, b: usize) -> Result<CsrMatrix> {
    if a > 1 || b > 1 {
        return Err(Error::InvalidArgument(format!(
            "derivative pair ({a}, {b}) not supported"
        )));
    }
    check_max_regularity(kv)?;
    let trial = eval_collocation(kv, points, b)?;
    let gram = gram_matrix(kv, a, b);
    solve_weights(kv, points, trial.matrix(), &gram)
}

fn solve_weights(kv: &KnotVector, points: &[f64], trial: &CsrMatrix, gram: &DMatrix<f64>) -> Result<CsrMatrix> {
    let p = kv.degree();
    let m = kv.num_funcs();
    let mut indptr = vec![0];
    let mut indices = Vec::new();
    let mut values = Vec::new();

    for i in 0..m {
        let (lo, hi) = kv.support(i);
        let q0 = points.partition_point(|&x| x < lo - 1e-14);
        let q1 = points.partition_point(|&x| x <= hi + 1e-14);
        let eqs: Vec<usize> = (i.saturating_sub(p)..=(i + p).min(m - 1)).collect();
        let nq = q1 - q0;
        let mut mat = DMatrix::zeros(eqs.len(), nq);
        for (c, q) in (q0..q1).enumerate() {
            let (cols, vals) = trial.row(q);
            for (&j, &v) in cols.iter().zip(vals) {
                if let Some(r) = j.checked_sub(eqs[0]).filter(|&r| r < eqs.len()) {
                    mat[(r, c)] = v;
                }
            }
        }
        let rhs = DVector::from_iterator(eqs.len(), eqs.iter().map(|&j| gram[(i, j)]));
        let (w, residual) = min_norm_solve(mat, &rhs);
        if residual > EXACTNESS_TOL || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::RankDeficient { row: i, residual });
        }
        indices.extend(q0..q1);
        values.extend(w.iter());
        indptr.push(indices.len());
    }
    CsrMatrix::from_raw(m, points.len(), indptr, indices, values)
}

/// Minimum-norm least-squares solution and the max-norm residual.
fn min_norm_solve(mat: DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, f64) {
    let (rows, cols) = mat.shape();
    if cols == 0 {
        return (DVector::zeros(0), rhs.amax());
    }
    let a = faer::Mat::from_fn(rows, cols, |i, j| mat[(i, j)]);
    let Ok(svd) = a.thin_svd() else {
        return (DVector::from_element(cols, f64::NAN), f64::INFINITY);
    };
    let (u, v) = (svd.U(), svd.V());
    let s = svd.S().column_vector();
    let smax = (0..s.nrows()).map(|k| s[k]).fold(0.0, f64::max);
    let eps = smax * 1e-13 * rows.max(cols) as f64;
    let mut w = DVector::zeros(cols);
    for k in 0..s.nrows() {
        if s[k] <= eps {
            continue;
        }
        let coef = (0..rows).map(|i| u[(i, k)] * rhs[i]).sum::<f64>() / s[k];
        for j in 0..cols {
            w[j] += coef * v[(j, k)];
        }
    }
    let residual = (&mat * &w - rhs).amax();
    (w, residual)
}

/// Univariate weighted-quadrature rule with the four weight families and
/// the trial collocation matrices at the rule's points.
#[derive(Debug, Clone)]
pub struct WqRule1D {
    knots: KnotVector,
    points: Vec<f64>,
    weights: [[CsrMatrix; 2]; 2],
    basis: [CsrMatrix; 2],
}

impl WqRule1D {
    /// Builds the rule on [`wq_points`]; if a boundary row turns out to be
    /// ill-posed, points are added to the offending boundary span (at most
    /// `2p` extra per side) and the solve is retried.
    pub fn new(kv: &KnotVector) -> Result<Self> {
        let mut points = wq_points(kv)?;
        let p = kv.degree();
        let spans = kv.spans();
        let base = base_points(kv)?;
        let count_in = |pts: &[f64], (a, b): (f64, f64)| pts.iter().filter(|&&x| x >= a && x <= b).count();
        let first_base = count_in(&base, spans[0]);
        let last_base = count_in(&base, *spans.last().unwrap());
        loop {
            match Self::with_points(kv, points.clone()) {
                Ok(rule) => return Ok(rule),
                Err(Error::RankDeficient { row, residual }) => {
                    let (lo, hi) = kv.support(row);
                    let span = if lo == 0.0 {
                        spans[0]
                    } else if hi == 1.0 {
                        *spans.last().unwrap()
                    } else {
                        return Err(Error::RankDeficient { row, residual });
                    };
                    let limit = if lo == 0.0 { first_base } else { last_base } + 2 * p;
                    if count_in(&points, span) >= limit {
                        return Err(Error::RankDeficient { row, residual });
                    }
                    insert_in_largest_gap(&mut points, span);
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Builds the rule on a caller-supplied sorted, duplicate-free point set.
    pub fn with_points(kv: &KnotVector, points: Vec<f64>) -> Result<Self> {
        check_max_regularity(kv)?;
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("quadrature points must be strictly increasing".into()));
        }
        let b0 = eval_collocation(kv, &points, 0)?.into_matrix();
        let b1 = eval_collocation(kv, &points, 1)?.into_matrix();
        let mut grams = [[None, None], [None, None]];
        for (a, row) in grams.iter_mut().enumerate() {
            for (b, g) in row.iter_mut().enumerate() {
                *g = Some(gram_matrix(kv, a, b));
            }
        }
        let solve = |a: usize, b: usize| {
            let trial = if b == 0 { &b0 } else { &b1 };
            solve_weights(kv, &points, trial, grams[a][b].as_ref().unwrap())
        };
        let weights = [[solve(0, 0)?, solve(0, 1)?], [solve(1, 0)?, solve(1, 1)?]];
        Ok(Self {
            knots: kv.clone(),
            points,
            weights,
            basis: [b0, b1],
        })
    }

    pub fn knot_vector(&self) -> &KnotVector {
        &self.knots
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    /// `W^(a,b)` over all `m` test functions.
    pub fn weights(&self, a: usize, b: usize) -> &CsrMatrix {
        &self.weights[a][b]
    }

    /// Trial collocation (`deriv` 0 or 1) over all `m` functions.
    pub fn collocation(&self, deriv: usize) -> &CsrMatrix {
        &self.basis[deriv]
    }

    /// `W^(a,b)` restricted to the Dirichlet-interior test functions.
    pub fn interior_weights(&self, a: usize, b: usize) -> CsrMatrix {
        let m = self.knots.num_funcs();
        self.weights[a][b].submatrix(1..m - 1, 0..self.points.len())
    }

    /// Collocation restricted to the Dirichlet-interior trial functions.
    pub fn interior_collocation(&self, deriv: usize) -> CsrMatrix {
        let m = self.knots.num_funcs();
        self.basis[deriv].submatrix(0..self.points.len(), 1..m - 1)
    }
}

fn insert_in_largest_gap(points: &mut Vec<f64>, (a, b): (f64, f64)) {
    let inside: Vec<usize> = (0..points.len()).filter(|&k| points[k] >= a && points[k] <= b).collect();
    let mut best = (0.0, 0);
    for w in inside.windows(2) {
        let gap = points[w[1]] - points[w[0]];
        if gap > best.0 {
            best = (gap, w[0]);
        }
    }
    let k = best.1;
    let mid = 0.5 * (points[k] + points[k + 1]);
    points.insert(k + 1, mid);
}

/// Tensorized rule: the weight matrix of direction pair families is
/// `W_d ⊗ … ⊗ W_1` and is never formed.
#[derive(Debug, Clone)]
pub struct TensorRule {
    rules: Vec<WqRule1D>,
}

/// Tensorizes one univariate rule per direction.
pub fn tensorize_rule(rules: Vec<WqRule1D>) -> TensorRule {
    TensorRule { rules }
}

impl TensorRule {
    pub fn rules(&self) -> &[WqRule1D] {
        &self.rules
    }

    pub fn dim(&self) -> usize {
        self.rules.len()
    }

    /// Points per direction.
    pub fn point_dims(&self) -> Vec<usize> {
        self.rules.iter().map(|r| r.num_points()).collect()
    }

    pub fn num_points(&self) -> usize {
        self.point_dims().iter().product()
    }

    /// Parametric coordinates of grid point with multi-index `q`.
    pub fn point(&self, q: &[usize]) -> Vec<f64> {
        q.iter().zip(&self.rules).map(|(&ql, r)| r.points()[ql]).collect()
    }

    /// All grid points, first direction fastest.
    pub fn grid(&self) -> Vec<Vec<f64>> {
        let dims = self.point_dims();
        (0..self.num_points())
            .map(|idx| {
                let mut rest = idx;
                dims.iter()
                    .zip(&self.rules)
                    .map(|(&n, r)| {
                        let q = rest % n;
                        rest /= n;
                        r.points()[q]
                    })
                    .collect()
            })
            .collect()
    }

    /// Implicit entry `w^(α,β)_{i,q} = Π_l w^(a_l,b_l)_{l,i_l,q_l}` where the
    /// derivative orders per direction are given by `orders[l] = (a_l, b_l)`.
    /// Indices refer to the full (boundary-inclusive) univariate bases.
    pub fn weight(&self, i: &[usize], q: &[usize], orders: &[(usize, usize)]) -> f64 {
        self.rules
            .iter()
            .enumerate()
            .map(|(l, r)| r.weights(orders[l].0, orders[l].1).get(i[l], q[l]))
            .product()
    }
}
