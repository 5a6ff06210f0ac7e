//! Univariate B-spline spaces and tensor-product index bookkeeping.
//!
//! Knot vectors are open: the first and last knots are repeated `p + 1`
//! times and sit at 0 and 1. Basis functions are numbered `0..m` where
//! `m = knots.len() - p - 1`; the Dirichlet-interior space drops the first
//! and the last function in every direction.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::quadrature::gauss_on_interval;
use crate::sparse::CsrMatrix;

const KNOT_TOL: f64 = 1e-14;

/// Open knot vector of a univariate spline space.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

impl KnotVector {
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        if degree < 1 {
            return Err(Error::InvalidDegree(degree));
        }
        let p = degree;
        if knots.len() < 2 * (p + 1) {
            return Err(Error::InvalidKnots(format!(
                "{} knots cannot form an open vector of degree {p}",
                knots.len()
            )));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidKnots("knots must be nondecreasing".into()));
        }
        let n = knots.len();
        if knots[..=p].iter().any(|&k| k != 0.0) || knots[n - p - 1..].iter().any(|&k| k != 1.0) {
            return Err(Error::InvalidKnots(format!(
                "first and last knots must be 0 and 1 repeated {} times",
                p + 1
            )));
        }
        if knots[p + 1] == 0.0 || knots[n - p - 2] == 1.0 {
            return Err(Error::InvalidKnots(format!(
                "end knots repeated more than {} times",
                p + 1
            )));
        }
        let kv = Self { degree, knots };
        let mult = kv.max_interior_multiplicity();
        if mult > p {
            return Err(Error::InvalidKnots(format!(
                "interior multiplicity {mult} exceeds degree {p}"
            )));
        }
        Ok(kv)
    }

    /// Open knot vector with `n_el` uniform spans and simple interior knots.
    pub fn uniform(degree: usize, n_el: usize) -> Result<Self> {
        if degree < 1 {
            return Err(Error::InvalidDegree(degree));
        }
        if n_el < 1 {
            return Err(Error::InvalidElementCount(n_el));
        }
        let mut knots = vec![0.0; degree + 1];
        knots.extend((1..n_el).map(|k| k as f64 / n_el as f64));
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Self::new(degree, knots)
    }

    /// Open knot vector over the given strictly increasing breakpoints.
    pub fn from_breakpoints(degree: usize, breaks: &[f64]) -> Result<Self> {
        if breaks.len() < 2 {
            return Err(Error::InvalidElementCount(0));
        }
        let mut knots = vec![breaks[0]; degree];
        knots.extend_from_slice(breaks);
        knots.extend(std::iter::repeat_n(*breaks.last().unwrap(), degree));
        Self::new(degree, knots)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of univariate B-splines `m`.
    pub fn num_funcs(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Distinct knot values in increasing order.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for &k in &self.knots {
            if out.last().is_none_or(|&last| k > last) {
                out.push(k);
            }
        }
        out
    }

    /// Nonempty knot spans `[ξ_k, ξ_{k+1}]`.
    pub fn spans(&self) -> Vec<(f64, f64)> {
        self.breakpoints().windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn num_elements(&self) -> usize {
        self.breakpoints().len() - 1
    }

    /// Largest multiplicity among interior knots (0 when there are none).
    pub fn max_interior_multiplicity(&self) -> usize {
        let p = self.degree;
        let interior = &self.knots[p + 1..self.knots.len() - p - 1];
        let mut best = 0;
        let mut run = 0;
        for (k, &v) in interior.iter().enumerate() {
            run = if k > 0 && v == interior[k - 1] { run + 1 } else { 1 };
            best = best.max(run);
        }
        best
    }

    /// Closed support `[ξ_i, ξ_{i+p+1}]` of basis function `i`.
    pub fn support(&self, i: usize) -> (f64, f64) {
        (self.knots[i], self.knots[i + self.degree + 1])
    }

    /// Knot index `k` with `ξ_k <= x < ξ_{k+1}`; the right endpoint maps to
    /// the last nonempty span.
    pub fn find_span(&self, x: f64) -> usize {
        let p = self.degree;
        let m = self.num_funcs();
        if x >= self.knots[m] {
            return m - 1;
        }
        if x <= self.knots[p] {
            return p;
        }
        // last k in [p, m-1] with knots[k] <= x
        let slice = &self.knots[p..=m];
        let pos = slice.partition_point(|&k| k <= x);
        p + pos - 1
    }

    /// Values of the `p + 1` functions nonzero on span `span` at `x`
    /// (functions `span - p ..= span`).
    pub fn basis_funs(&self, span: usize, x: f64) -> Vec<f64> {
        basis_funs_degree(&self.knots, self.degree, span, x)
    }

    /// Values and first derivatives of the functions nonzero at `x`.
    /// Returns the index of the first nonzero function.
    pub fn eval_nonzero(&self, x: f64, values: &mut [f64], derivs: &mut [f64]) -> usize {
        let p = self.degree;
        let span = self.find_span(x);
        values.copy_from_slice(&self.basis_funs(span, x));
        let lower = basis_funs_degree(&self.knots, p - 1, span, x);
        let first = span - p;
        for r in 0..=p {
            let i = first + r;
            let mut d = 0.0;
            if r >= 1 {
                let den = self.knots[i + p] - self.knots[i];
                if den > 0.0 {
                    d += lower[r - 1] / den;
                }
            }
            if r < p {
                let den = self.knots[i + p + 1] - self.knots[i + 1];
                if den > 0.0 {
                    d -= lower[r] / den;
                }
            }
            derivs[r] = p as f64 * d;
        }
        first
    }

    /// Greville abscissae `(ξ_{i+1} + … + ξ_{i+p}) / p`.
    pub fn greville(&self) -> Vec<f64> {
        let p = self.degree;
        (0..self.num_funcs())
            .map(|i| self.knots[i + 1..=i + p].iter().sum::<f64>() / p as f64)
            .collect()
    }

    /// Coefficients of the spline interpolating `f` at the Greville points.
    pub fn interpolate<F: Fn(f64) -> f64>(&self, f: F) -> Result<Vec<f64>> {
        let pts = self.greville();
        let m = self.num_funcs();
        let b = eval_collocation(self, &pts, 0)?;
        let dense = DMatrix::from_row_slice(m, m, &b.matrix().to_dense());
        let rhs = DVector::from_iterator(m, pts.iter().map(|&x| f(x)));
        let sol = dense
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidArgument("singular Greville collocation".into()))?;
        Ok(sol.iter().copied().collect())
    }

    /// Evaluates `Σ c_i b_i(x)`.
    pub fn eval_spline(&self, coeffs: &[f64], x: f64) -> f64 {
        let p = self.degree;
        let span = self.find_span(x);
        let vals = self.basis_funs(span, x);
        (0..=p).map(|r| coeffs[span - p + r] * vals[r]).sum()
    }
}

/// Cox–de Boor triangle for the `deg + 1` functions of degree `deg` that are
/// nonzero on knot span `span`.
fn basis_funs_degree(knots: &[f64], deg: usize, span: usize, x: f64) -> Vec<f64> {
    let mut n = vec![0.0; deg + 1];
    let mut left = vec![0.0; deg + 1];
    let mut right = vec![0.0; deg + 1];
    n[0] = 1.0;
    for j in 1..=deg {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let den = right[r + 1] + left[j - r];
            let temp = if den != 0.0 { n[r] / den } else { 0.0 };
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    n
}

/// Values (`deriv = 0`) or first derivatives (`deriv = 1`) of every basis
/// function at a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationMatrix {
    matrix: CsrMatrix,
    deriv: usize,
}

impl CollocationMatrix {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CsrMatrix {
        self.matrix
    }

    pub fn deriv_order(&self) -> usize {
        self.deriv
    }
}

/// Collocation matrix `(B)_{q,j} = D^a b_j(x_q)` over the full basis.
pub fn eval_collocation(kv: &KnotVector, points: &[f64], deriv: usize) -> Result<CollocationMatrix> {
    if deriv > 1 {
        return Err(Error::InvalidArgument(format!(
            "derivative order {deriv} not supported (0 or 1)"
        )));
    }
    let p = kv.degree();
    let mut indptr = Vec::with_capacity(points.len() + 1);
    let mut indices = Vec::with_capacity(points.len() * (p + 1));
    let mut values = Vec::with_capacity(points.len() * (p + 1));
    indptr.push(0);
    let mut vals = vec![0.0; p + 1];
    let mut ders = vec![0.0; p + 1];
    for &x in points {
        if !(-KNOT_TOL..=1.0 + KNOT_TOL).contains(&x) || x.is_nan() {
            return Err(Error::PointOutOfRange(x));
        }
        let x = x.clamp(0.0, 1.0);
        let first = kv.eval_nonzero(x, &mut vals, &mut ders);
        let src = if deriv == 0 { &vals } else { &ders };
        for (r, &v) in src.iter().enumerate() {
            indices.push(first + r);
            values.push(v);
        }
        indptr.push(indices.len());
    }
    let matrix = CsrMatrix::from_raw(points.len(), kv.num_funcs(), indptr, indices, values)?;
    Ok(CollocationMatrix { matrix, deriv })
}

/// Exact univariate Gram matrix `∫ D^a b_i D^b b_j` over the full basis,
/// integrated span by span with `p + 1` Gauss nodes.
pub fn gram_matrix(kv: &KnotVector, a: usize, b: usize) -> DMatrix<f64> {
    let p = kv.degree();
    let m = kv.num_funcs();
    let mut out = DMatrix::zeros(m, m);
    let mut vals = vec![0.0; p + 1];
    let mut ders = vec![0.0; p + 1];
    for (lo, hi) in kv.spans() {
        let (xs, ws) = gauss_on_interval(lo, hi, p + 1);
        for (&x, &w) in xs.iter().zip(&ws) {
            // evaluate inside the span so right-continuity picks this span
            let first = kv.eval_nonzero(x, &mut vals, &mut ders);
            let fa = if a == 0 { &vals } else { &ders };
            let fb = if b == 0 { &vals } else { &ders };
            for r in 0..=p {
                for s in 0..=p {
                    out[(first + r, first + s)] += w * fa[r] * fb[s];
                }
            }
        }
    }
    out
}

/// Tensor-product spline space with homogeneous Dirichlet conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpace {
    knots: Vec<KnotVector>,
}

impl TensorSpace {
    pub fn new(knots: Vec<KnotVector>) -> Result<Self> {
        if knots.is_empty() || knots.len() > 3 {
            return Err(Error::InvalidArgument(format!(
                "spatial dimension {} not supported (1..=3)",
                knots.len()
            )));
        }
        if let Some(kv) = knots.iter().find(|kv| kv.num_funcs() < 3) {
            return Err(Error::InvalidArgument(format!(
                "direction with {} functions has an empty interior space",
                kv.num_funcs()
            )));
        }
        Ok(Self { knots })
    }

    /// Same uniform knot vector in all `dim` directions.
    pub fn uniform(dim: usize, degree: usize, n_el: usize) -> Result<Self> {
        let kv = KnotVector::uniform(degree, n_el)?;
        Self::new(vec![kv; dim])
    }

    pub fn dim(&self) -> usize {
        self.knots.len()
    }

    pub fn knot_vectors(&self) -> &[KnotVector] {
        &self.knots
    }

    pub fn knot_vector(&self, l: usize) -> &KnotVector {
        &self.knots[l]
    }

    /// Interior function count per direction (`m - 2`).
    pub fn dims(&self) -> Vec<usize> {
        self.knots.iter().map(|kv| kv.num_funcs() - 2).collect()
    }

    pub fn num_dofs(&self) -> usize {
        self.dims().iter().product()
    }
}

/// Scalar index of a zero-based multi-index, first direction fastest:
/// `i = i_1 + s_1 (i_2 + s_2 (i_3 + …))`.
pub fn multi_to_scalar(multi: &[usize], dims: &[usize]) -> Result<usize> {
    if multi.len() != dims.len() {
        return Err(Error::ShapeMismatch {
            expected: dims.len(),
            found: multi.len(),
        });
    }
    let mut idx = 0;
    for l in (0..dims.len()).rev() {
        if multi[l] >= dims[l] {
            return Err(Error::IndexOutOfRange {
                component: l,
                value: multi[l],
                bound: dims[l],
            });
        }
        idx = idx * dims[l] + multi[l];
    }
    Ok(idx)
}

/// Inverse of [`multi_to_scalar`].
pub fn scalar_to_multi(index: usize, dims: &[usize]) -> Result<Vec<usize>> {
    let total: usize = dims.iter().product();
    if index >= total {
        return Err(Error::IndexOutOfRange {
            component: 0,
            value: index,
            bound: total,
        });
    }
    let mut rest = index;
    Ok(dims
        .iter()
        .map(|&s| {
            let i = rest % s;
            rest /= s;
            i
        })
        .collect())
}
