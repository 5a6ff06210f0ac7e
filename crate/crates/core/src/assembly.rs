//! Explicitly assembled matrices and load vectors.
//!
//! These are oracles and baselines for the matrix-free operators:
//! element-wise Gauss assembly (SGQ), row-by-row weighted-quadrature
//! assembly, the Gauss load vector and a matrix-free Gauss mass product
//! used only for cost comparisons.

use std::io::{self, Write};

use crate::coefficients::{jacobian_determinant, mass_coefficient, stiffness_coefficient, ScalarField, TensorField, PULLBACK_FLOPS};
use crate::error::{Error, Result};
use crate::geometry::GeometryMap;
use crate::kron::{kron_apply_into, kron_apply_scaled_into, meter_acquire, meter_flops, meter_release, CostMeter};
use crate::quadrature::{GaussGrid, SpanGauss};
use crate::sparse::CsrMatrix;
use crate::spline::{KnotVector, TensorSpace};
use crate::wq::WqRule1D;

/// Default ceiling on estimated stored entries of an assembled matrix.
pub const NNZ_LIMIT: u64 = 50_000_000;

/// Bilinear form with its coefficient.
#[derive(Debug, Clone)]
pub enum Form {
    /// `∫ α u v`.
    Mass(ScalarField),
    /// `∫ K ∇u · ∇v`.
    Stiffness(TensorField),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Sgq { points_per_span: usize },
    WqExplicit,
}

#[derive(Debug, Clone)]
pub struct AssembledMatrix {
    matrix: CsrMatrix,
    provenance: Provenance,
}

impl AssembledMatrix {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CsrMatrix {
        self.matrix
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    pub fn max_row_nnz(&self) -> usize {
        self.matrix.max_row_nnz()
    }

    /// `max |A - Aᵀ| / max |A|`.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.matrix.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        self.matrix.max_abs_diff(&self.matrix.transpose()) / scale
    }

    /// Entry-wise sum with a matrix of identical shape.
    pub fn add(&self, other: &AssembledMatrix) -> Result<AssembledMatrix> {
        let (a, b) = (&self.matrix, &other.matrix);
        if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
            return Err(Error::ShapeMismatch {
                expected: a.nrows(),
                found: b.nrows(),
            });
        }
        let mut triplets = Vec::with_capacity(a.nnz() + b.nnz());
        for m in [a, b] {
            for r in 0..m.nrows() {
                let (cols, vals) = m.row(r);
                triplets.extend(cols.iter().zip(vals).map(|(&c, &v)| (r, c, v)));
            }
        }
        Ok(AssembledMatrix {
            matrix: CsrMatrix::from_triplets(a.nrows(), a.ncols(), &triplets),
            provenance: self.provenance,
        })
    }

    pub fn write_coordinate<W: Write>(&self, out: W) -> io::Result<()> {
        self.matrix.write_coordinate(out)
    }
}

/// Tensor sparsity pattern given by a contiguous column range per
/// direction and row.
struct Pattern {
    dims: [usize; 3],
    lo: [Vec<usize>; 3],
    hi: [Vec<usize>; 3],
}

impl Pattern {
    fn new(dims: &[usize], ranges: Vec<Vec<(usize, usize)>>) -> Self {
        let mut p = Pattern {
            dims: [1; 3],
            lo: [vec![0], vec![0], vec![0]],
            hi: [vec![0], vec![0], vec![0]],
        };
        for (l, r) in ranges.into_iter().enumerate() {
            p.dims[l] = dims[l];
            p.lo[l] = r.iter().map(|x| x.0).collect();
            p.hi[l] = r.iter().map(|x| x.1).collect();
        }
        p
    }

    fn width(&self, l: usize, i: usize) -> usize {
        self.hi[l][i] - self.lo[l][i] + 1
    }

    fn estimated_nnz(&self) -> u64 {
        (0..3)
            .map(|l| (0..self.dims[l]).map(|i| self.width(l, i) as u64).sum::<u64>())
            .product()
    }

    fn row_multi(&self, r: usize) -> [usize; 3] {
        [r % self.dims[0], (r / self.dims[0]) % self.dims[1], r / (self.dims[0] * self.dims[1])]
    }

    fn build(&self) -> (Vec<usize>, Vec<usize>) {
        let n = self.dims.iter().product::<usize>();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for r in 0..n {
            let i = self.row_multi(r);
            for j3 in self.lo[2][i[2]]..=self.hi[2][i[2]] {
                for j2 in self.lo[1][i[1]]..=self.hi[1][i[1]] {
                    for j1 in self.lo[0][i[0]]..=self.hi[0][i[0]] {
                        indices.push(j1 + self.dims[0] * (j2 + self.dims[1] * j3));
                    }
                }
            }
            indptr.push(indices.len());
        }
        (indptr, indices)
    }

    /// Offset of column multi-index `j` inside row `i`.
    fn offset(&self, i: &[usize; 3], j: &[usize; 3]) -> usize {
        let w1 = self.width(0, i[0]);
        let w2 = self.width(1, i[1]);
        ((j[2] - self.lo[2][i[2]]) * w2 + (j[1] - self.lo[1][i[1]])) * w1 + (j[0] - self.lo[0][i[0]])
    }
}

fn guard(pattern: &Pattern, limit: u64) -> Result<()> {
    let estimated = pattern.estimated_nnz();
    if estimated > limit {
        return Err(Error::SizeGuard { estimated, limit });
    }
    Ok(())
}

/// Banded pattern `|i - j| ≤ p` of the Galerkin matrices.
fn galerkin_ranges(space: &TensorSpace) -> Vec<Vec<(usize, usize)>> {
    space
        .knot_vectors()
        .iter()
        .map(|kv| {
            let n = kv.num_funcs() - 2;
            let p = kv.degree();
            (0..n).map(|i| (i.saturating_sub(p), (i + p).min(n - 1))).collect()
        })
        .collect()
}

/// Estimated stored entries of the Galerkin matrix on `space`.
pub fn estimated_nnz(space: &TensorSpace) -> u64 {
    Pattern::new(&space.dims(), galerkin_ranges(space)).estimated_nnz()
}

/// Largest row count of the Galerkin pattern, `Π_l (2p_l + 1)` on fine meshes.
pub fn max_row_nnz(space: &TensorSpace) -> usize {
    galerkin_ranges(space)
        .iter()
        .map(|r| r.iter().map(|(lo, hi)| hi - lo + 1).max().unwrap_or(0))
        .product()
}

/// Dense row-major local factor with `rows` quadrature points.
struct Local {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Local {
    fn ones() -> Self {
        Local {
            rows: 1,
            cols: 1,
            data: vec![1.0],
        }
    }
}

/// `out[i][j] = Σ_q coef_q Π_l test_l[q_l][i_l] trial_l[q_l][j_l]` by
/// successive one-direction contractions; `i`, `j`, `q` are flattened with
/// the first direction fastest.
fn contract3(test: [&Local; 3], trial: [&Local; 3], coef: &[f64], out: &mut Vec<f64>) {
    let q = [test[0].rows, test[1].rows, test[2].rows];
    let ni = [test[0].cols, test[1].cols, test[2].cols];
    let nj = [trial[0].cols, trial[1].cols, trial[2].cols];
    let pairs: Vec<Vec<f64>> = (0..3)
        .map(|l| {
            let mut tt = Vec::with_capacity(q[l] * ni[l] * nj[l]);
            for ql in 0..q[l] {
                for il in 0..ni[l] {
                    let a = test[l].data[ql * ni[l] + il];
                    for jl in 0..nj[l] {
                        tt.push(a * trial[l].data[ql * nj[l] + jl]);
                    }
                }
            }
            tt
        })
        .collect();
    let p = [ni[0] * nj[0], ni[1] * nj[1], ni[2] * nj[2]];

    let mut t1 = vec![0.0; q[1] * q[2] * p[0]];
    for blk in 0..q[1] * q[2] {
        let dst = &mut t1[blk * p[0]..(blk + 1) * p[0]];
        for q1 in 0..q[0] {
            let c = coef[blk * q[0] + q1];
            if c == 0.0 {
                continue;
            }
            for (d, t) in dst.iter_mut().zip(&pairs[0][q1 * p[0]..(q1 + 1) * p[0]]) {
                *d += c * t;
            }
        }
    }
    let mut t2 = vec![0.0; q[2] * p[1] * p[0]];
    for q3 in 0..q[2] {
        for q2 in 0..q[1] {
            let src = &t1[(q3 * q[1] + q2) * p[0]..(q3 * q[1] + q2 + 1) * p[0]];
            for p2 in 0..p[1] {
                let a = pairs[1][q2 * p[1] + p2];
                if a == 0.0 {
                    continue;
                }
                let dst = &mut t2[(q3 * p[1] + p2) * p[0]..(q3 * p[1] + p2 + 1) * p[0]];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
    }
    let plane = p[1] * p[0];
    let mut t3 = vec![0.0; p[2] * plane];
    for q3 in 0..q[2] {
        let src = &t2[q3 * plane..(q3 + 1) * plane];
        for p3 in 0..p[2] {
            let a = pairs[2][q3 * p[2] + p3];
            if a == 0.0 {
                continue;
            }
            for (d, s) in t3[p3 * plane..(p3 + 1) * plane].iter_mut().zip(src) {
                *d += a * s;
            }
        }
    }

    let total_i = ni.iter().product::<usize>();
    let total_j = nj.iter().product::<usize>();
    out.clear();
    out.resize(total_i * total_j, 0.0);
    for p3 in 0..p[2] {
        let (i3, j3) = (p3 / nj[2], p3 % nj[2]);
        for p2 in 0..p[1] {
            let (i2, j2) = (p2 / nj[1], p2 % nj[1]);
            for p1 in 0..p[0] {
                let (i1, j1) = (p1 / nj[0], p1 % nj[0]);
                let i = i1 + ni[0] * (i2 + ni[1] * i3);
                let j = j1 + nj[0] * (j2 + nj[1] * j3);
                out[i * total_j + j] = t3[(p3 * p[1] + p2) * p[0] + p1];
            }
        }
    }
}


/// Univariate data of one knot span for element assembly.
struct SpanData {
    first: usize,
    vals: Local,
    ders: Local,
    points: Vec<f64>,
    weights: Vec<f64>,
}

fn span_data(kv: &KnotVector, per_span: usize) -> Vec<SpanData> {
    let rule = SpanGauss::new(kv, per_span);
    let p = kv.degree();
    let mut out = Vec::new();
    let mut v = vec![0.0; p + 1];
    let mut dv = vec![0.0; p + 1];
    for e in 0..rule.num_spans() {
        let range = e * per_span..(e + 1) * per_span;
        let mut vals = Vec::with_capacity(per_span * (p + 1));
        let mut ders = Vec::with_capacity(per_span * (p + 1));
        let mut first = 0;
        for &x in &rule.points[range.clone()] {
            first = kv.eval_nonzero(x, &mut v, &mut dv);
            vals.extend_from_slice(&v);
            ders.extend_from_slice(&dv);
        }
        let local = |data| Local {
            rows: per_span,
            cols: p + 1,
            data,
        };
        out.push(SpanData {
            first,
            vals: local(vals),
            ders: local(ders),
            points: rule.points[range.clone()].to_vec(),
            weights: rule.weights[range].to_vec(),
        });
    }
    out
}

/// Pulled-back coefficient at one parametric point: `c` for the mass form,
/// the row-major 3×3 `C` for the stiffness form.
fn coefficient_at(form: &Form, geom: &GeometryMap, xi: &[f64]) -> Result<[f64; 9]> {
    let mut out = [0.0; 9];
    match form {
        Form::Mass(alpha) => out[0] = mass_coefficient(geom, alpha, xi)?,
        Form::Stiffness(k) => {
            let c = stiffness_coefficient(geom, k, xi)?;
            for a in 0..3 {
                for b in 0..3 {
                    out[3 * a + b] = c[(a, b)];
                }
            }
        }
    }
    Ok(out)
}

/// `(test, trial)` derivative flags per direction and coefficient slot for
/// each term of the form.
fn form_terms(form: &Form, d: usize) -> Vec<([bool; 3], [bool; 3], usize)> {
    match form {
        Form::Mass(_) => vec![([false; 3], [false; 3], 0)],
        Form::Stiffness(_) => {
            let mut terms = Vec::new();
            for alpha in 0..d {
                for beta in 0..d {
                    let test = [alpha == 0, alpha == 1, alpha == 2];
                    let trial = [beta == 0, beta == 1, beta == 2];
                    terms.push((test, trial, 3 * alpha + beta));
                }
            }
            terms
        }
    }
}

fn check_dims(space: &TensorSpace, geom: &GeometryMap) -> Result<()> {
    if space.dim() != geom.dim() {
        return Err(Error::InvalidArgument(format!(
            "geometry dimension {} does not match space dimension {}",
            geom.dim(),
            space.dim()
        )));
    }
    Ok(())
}

fn flat3(i: &[usize; 3], dims: &[usize; 3]) -> usize {
    i[0] + dims[0] * (i[1] + dims[1] * i[2])
}

/// Element-wise Gauss assembly with `per_span` points per span and direction.
pub fn assemble_sgq(space: &TensorSpace, geom: &GeometryMap, form: &Form, per_span: usize) -> Result<AssembledMatrix> {
    assemble_sgq_with_limit(space, geom, form, per_span, NNZ_LIMIT)
}

pub fn assemble_sgq_with_limit(
    space: &TensorSpace,
    geom: &GeometryMap,
    form: &Form,
    per_span: usize,
    limit: u64,
) -> Result<AssembledMatrix> {
    check_dims(space, geom)?;
    if per_span == 0 {
        return Err(Error::InvalidArgument("at least one Gauss point per span".into()));
    }
    let d = space.dim();
    let pattern = Pattern::new(&space.dims(), galerkin_ranges(space));
    guard(&pattern, limit)?;
    let (indptr, indices) = pattern.build();
    let mut values = vec![0.0; indices.len()];

    let kvs = space.knot_vectors();
    let spans: Vec<Vec<SpanData>> = kvs.iter().map(|kv| span_data(kv, per_span)).collect();
    let counts: Vec<usize> = spans.iter().map(Vec::len).collect();
    let ones = Local::ones();
    let terms = form_terms(form, d);
    let mut local = Vec::new();
    let mut sum = Vec::new();
    let mut coef = Vec::new();
    let mut xi = vec![0.0; d];

    for el in 0..counts.iter().product::<usize>() {
        let mut rest = el;
        let sd: Vec<&SpanData> = (0..d)
            .map(|l| {
                let e = rest % counts[l];
                rest /= counts[l];
                &spans[l][e]
            })
            .collect();
        let nq: usize = sd.iter().map(|s| s.points.len()).product();
        let mut cvals = Vec::with_capacity(nq);
        for q in 0..nq {
            let mut r = q;
            let mut w = 1.0;
            for (l, s) in sd.iter().enumerate() {
                let k = r % s.points.len();
                r /= s.points.len();
                xi[l] = s.points[k];
                w *= s.weights[k];
            }
            let mut c = coefficient_at(form, geom, &xi)?;
            for v in c.iter_mut() {
                *v *= w;
            }
            cvals.push(c);
        }
        let pick = |l: usize, deriv: bool| -> &Local {
            match (l < d, deriv) {
                (false, _) => &ones,
                (true, true) => &sd[l].ders,
                (true, false) => &sd[l].vals,
            }
        };
        sum.clear();
        for (test, trial, slot) in &terms {
            coef.clear();
            coef.extend(cvals.iter().map(|c| c[*slot]));
            contract3(
                [pick(0, test[0]), pick(1, test[1]), pick(2, test[2])],
                [pick(0, trial[0]), pick(1, trial[1]), pick(2, trial[2])],
                &coef,
                &mut local,
            );
            if sum.is_empty() {
                sum.extend_from_slice(&local);
            } else {
                for (s, v) in sum.iter_mut().zip(&local) {
                    *s += v;
                }
            }
        }

        // local functions that are Dirichlet-interior, with their multi-index
        let widths: Vec<usize> = (0..3).map(|l| if l < d { sd[l].vals.cols } else { 1 }).collect();
        let nloc: usize = widths.iter().product();
        let interior: Vec<(usize, [usize; 3])> = (0..nloc)
            .filter_map(|a| {
                let mut out = [0usize; 3];
                let mut rest = a;
                for l in 0..3 {
                    let r = rest % widths[l];
                    rest /= widths[l];
                    if l < d {
                        let full = sd[l].first + r;
                        if full == 0 || full + 1 == kvs[l].num_funcs() {
                            return None;
                        }
                        out[l] = full - 1;
                    }
                }
                Some((a, out))
            })
            .collect();
        for &(a, i) in &interior {
            let base = indptr[flat3(&i, &pattern.dims)];
            for &(b, j) in &interior {
                values[base + pattern.offset(&i, &j)] += sum[a * nloc + b];
            }
        }
    }

    let n = space.num_dofs();
    Ok(AssembledMatrix {
        matrix: CsrMatrix::from_raw(n, n, indptr, indices, values)?,
        provenance: Provenance::Sgq {
            points_per_span: per_span,
        },
    })
}

/// Per-direction local factors of one weighted-quadrature row.
struct WqRowData {
    q0: usize,
    /// `[a][b]` weights as a column (points × 1).
    tests: [[Local; 2]; 2],
    /// `[b]` trial collocation restricted to the row's column range.
    trials: [Local; 2],
    lo: usize,
    hi: usize,
}

fn wq_row_data(rule: &WqRule1D) -> Vec<WqRowData> {
    let w: Vec<Vec<CsrMatrix>> = (0..2)
        .map(|a| (0..2).map(|b| rule.interior_weights(a, b)).collect())
        .collect();
    let bmat = [rule.interior_collocation(0), rule.interior_collocation(1)];
    let n = w[0][0].nrows();
    (0..n)
        .map(|i| {
            let (cols, _) = w[0][0].row(i);
            let q0 = cols[0];
            let q1 = cols[cols.len() - 1] + 1;
            let mut lo = usize::MAX;
            let mut hi = 0;
            for b in &bmat {
                for q in q0..q1 {
                    let (c, _) = b.row(q);
                    if let (Some(&f), Some(&l)) = (c.first(), c.last()) {
                        lo = lo.min(f);
                        hi = hi.max(l);
                    }
                }
            }
            let nq = q1 - q0;
            let column = |m: &CsrMatrix| Local {
                rows: nq,
                cols: 1,
                data: (q0..q1).map(|q| m.get(i, q)).collect(),
            };
            let block = |m: &CsrMatrix| Local {
                rows: nq,
                cols: hi - lo + 1,
                data: (q0..q1).flat_map(|q| (lo..=hi).map(move |j| m.get(q, j))).collect(),
            };
            WqRowData {
                q0,
                tests: [[column(&w[0][0]), column(&w[0][1])], [column(&w[1][0]), column(&w[1][1])]],
                trials: [block(&bmat[0]), block(&bmat[1])],
                lo,
                hi,
            }
        })
        .collect()
}

/// Row-by-row materialization of the weighted-quadrature matrix: entry
/// `(i, j)` is `Σ_q w_{i,q} c(x_q) B_{q,j}`, summed over the term families
/// of the form.
pub fn assemble_wq_explicit(space: &TensorSpace, rules: &[WqRule1D], geom: &GeometryMap, form: &Form) -> Result<AssembledMatrix> {
    assemble_wq_explicit_with_limit(space, rules, geom, form, NNZ_LIMIT)
}

pub fn assemble_wq_explicit_with_limit(
    space: &TensorSpace,
    rules: &[WqRule1D],
    geom: &GeometryMap,
    form: &Form,
    limit: u64,
) -> Result<AssembledMatrix> {
    check_dims(space, geom)?;
    let d = space.dim();
    if rules.len() != d {
        return Err(Error::ShapeMismatch {
            expected: d,
            found: rules.len(),
        });
    }
    for (l, r) in rules.iter().enumerate() {
        if r.knot_vector() != space.knot_vector(l) {
            return Err(Error::InvalidArgument(format!(
                "rule in direction {l} was built on a different knot vector"
            )));
        }
    }
    let rows: Vec<Vec<WqRowData>> = rules.iter().map(wq_row_data).collect();
    let ranges = rows.iter().map(|r| r.iter().map(|x| (x.lo, x.hi)).collect()).collect();
    let pattern = Pattern::new(&space.dims(), ranges);
    guard(&pattern, limit)?;
    let (indptr, indices) = pattern.build();
    let mut values = vec![0.0; indices.len()];

    let mut qdims = [1usize; 3];
    for (l, r) in rules.iter().enumerate() {
        qdims[l] = r.num_points();
    }
    let nq: usize = qdims.iter().product();
    let mut grid = Vec::with_capacity(nq);
    let mut xi = vec![0.0; d];
    for q in 0..nq {
        let mut rest = q;
        for (l, r) in rules.iter().enumerate() {
            xi[l] = r.points()[rest % qdims[l]];
            rest /= qdims[l];
        }
        grid.push(coefficient_at(form, geom, &xi)?);
    }

    let padded = WqRowData {
        q0: 0,
        tests: [[Local::ones(), Local::ones()], [Local::ones(), Local::ones()]],
        trials: [Local::ones(), Local::ones()],
        lo: 0,
        hi: 0,
    };
    let terms = form_terms(form, d);
    let mut local = Vec::new();
    let mut sum = Vec::new();
    let mut coef = Vec::new();
    let n = space.num_dofs();
    for r in 0..n {
        let i = pattern.row_multi(r);
        let rd: Vec<&WqRowData> = (0..3).map(|l| if l < d { &rows[l][i[l]] } else { &padded }).collect();
        let box_dims: Vec<usize> = rd.iter().map(|x| x.tests[0][0].rows).collect();
        sum.clear();
        for (test, trial, slot) in &terms {
            coef.clear();
            for k3 in 0..box_dims[2] {
                for k2 in 0..box_dims[1] {
                    for k1 in 0..box_dims[0] {
                        let q = (rd[0].q0 + k1) + qdims[0] * ((rd[1].q0 + k2) + qdims[1] * (rd[2].q0 + k3));
                        coef.push(grid[q][*slot]);
                    }
                }
            }
            let t = |l: usize| &rd[l].tests[usize::from(test[l])][usize::from(trial[l])];
            let b = |l: usize| &rd[l].trials[usize::from(trial[l])];
            contract3([t(0), t(1), t(2)], [b(0), b(1), b(2)], &coef, &mut local);
            if sum.is_empty() {
                sum.extend_from_slice(&local);
            } else {
                for (s, v) in sum.iter_mut().zip(&local) {
                    *s += v;
                }
            }
        }
        // contract3 orders the row's columns exactly like the pattern
        values[indptr[r]..indptr[r + 1]].copy_from_slice(&sum);
    }

    Ok(AssembledMatrix {
        matrix: CsrMatrix::from_raw(n, n, indptr, indices, values)?,
        provenance: Provenance::WqExplicit,
    })
}

/// Load vector `f_i = ∫ b_i f(F(ξ)) det J dξ` by tensor Gauss quadrature
/// with `per_span` points per span, processed one last-direction span at a
/// time.
pub fn assemble_rhs(space: &TensorSpace, geom: &GeometryMap, f: &ScalarField, per_span: usize) -> Result<Vec<f64>> {
    check_dims(space, geom)?;
    let n = space.num_dofs();
    let mut rhs = vec![0.0; n];
    if f.is_zero() {
        return Ok(rhs);
    }
    let grid = GaussGrid::new(space.knot_vectors(), per_span);
    let d = grid.dim();
    let transposed: Vec<CsrMatrix> = grid.values[..d - 1].iter().map(CsrMatrix::transpose).collect();
    let slab_len = grid.slab_len();
    let mut vals = vec![0.0; slab_len];
    let mut part = vec![0.0; n];
    let mut xi = vec![0.0; d];
    for e in 0..grid.num_slabs() {
        let last = grid.values[d - 1].submatrix(grid.slab_rows(e), 0..space.dims()[d - 1]).transpose();
        for (k, v) in vals.iter_mut().enumerate() {
            let w = grid.slab_point(e, k, &mut xi);
            let (x, _) = geom.map_and_jacobian(&xi);
            *v = w * f.eval(&x) * jacobian_determinant(geom, &xi)?;
        }
        let mut factors: Vec<&CsrMatrix> = transposed.iter().collect();
        factors.push(&last);
        kron_apply_into(&factors, &vals, &mut part, None)?;
        for (r, p) in rhs.iter_mut().zip(&part) {
            *r += p;
        }
    }
    Ok(rhs)
}

/// Matrix-free mass product with standard Gauss quadrature,
/// `(B_gᵀ ⊗ …) diag(w c) (B_g ⊗ …)`, kept as an instrumented baseline.
#[derive(Debug, Clone)]
pub struct GaussMassOperator {
    values: Vec<CsrMatrix>,
    transposed: Vec<CsrMatrix>,
    last_by_col: CsrMatrix,
    grid: Vec<f64>,
    setup_flops: u64,
}

impl GaussMassOperator {
    pub fn setup(
        space: &TensorSpace,
        geom: &GeometryMap,
        alpha: &ScalarField,
        per_span: usize,
        mut meter: Option<&mut CostMeter>,
    ) -> Result<Self> {
        check_dims(space, geom)?;
        let grid_data = GaussGrid::new(space.knot_vectors(), per_span);
        let d = grid_data.dim();
        let mut grid = Vec::with_capacity(grid_data.num_slabs() * grid_data.slab_len());
        let mut xi = vec![0.0; d];
        for e in 0..grid_data.num_slabs() {
            for k in 0..grid_data.slab_len() {
                let w = grid_data.slab_point(e, k, &mut xi);
                grid.push(w * mass_coefficient(geom, alpha, &xi)?);
            }
        }
        let setup_flops = grid.len() as u64 * (geom.eval_cost() + PULLBACK_FLOPS);
        meter_flops(&mut meter, setup_flops);
        let transposed: Vec<CsrMatrix> = grid_data.values.iter().map(CsrMatrix::transpose).collect();
        Ok(Self {
            last_by_col: grid_data.values[d - 1].clone(),
            values: grid_data.values,
            transposed,
            grid,
            setup_flops,
        })
    }

    pub fn size(&self) -> usize {
        self.values.iter().map(CsrMatrix::ncols).product()
    }

    pub fn coefficient_scalars(&self) -> usize {
        self.grid.len()
    }

    pub fn setup_flops(&self) -> u64 {
        self.setup_flops
    }

    pub fn apply(&self, v: &[f64], mut meter: Option<&mut CostMeter>) -> Result<Vec<f64>> {
        let nq = self.grid.len();
        let mut t = vec![0.0; nq];
        meter_acquire(&mut meter, nq);
        let factors: Vec<&CsrMatrix> = self.values.iter().collect();
        kron_apply_into(&factors, v, &mut t, meter.as_deref_mut())?;
        let tfactors: Vec<&CsrMatrix> = self.transposed.iter().collect();
        let plane = nq / self.values.last().unwrap().nrows();
        let grid = &self.grid;
        let mut scale = |c: usize, x: &[f64], s: &mut [f64]| {
            for ((sk, xk), gk) in s.iter_mut().zip(x).zip(&grid[c * plane..(c + 1) * plane]) {
                *sk = gk * xk;
            }
        };
        meter_flops(&mut meter, nq as u64);
        let mut out = vec![0.0; self.size()];
        kron_apply_scaled_into(&tfactors, &self.last_by_col, &t, &mut scale, &mut out, meter.as_deref_mut())?;
        meter_release(&mut meter, nq);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kron::KronOperator;
    use crate::spline::gram_matrix;

    fn interior_gram(kv: &KnotVector, a: usize, b: usize) -> CsrMatrix {
        let g = gram_matrix(kv, a, b);
        let n = kv.num_funcs() - 2;
        let data: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| g[(i + 1, j + 1)]).collect();
        CsrMatrix::from_dense(n, n, &data)
    }

    #[test]
    fn one_dimensional_hat_mass() {
        let space = TensorSpace::uniform(1, 1, 2).unwrap();
        let geom = GeometryMap::Identity { dim: 1 };
        let m = assemble_sgq(&space, &geom, &Form::Mass(ScalarField::Constant(1.0)), 2).unwrap();
        assert_eq!(m.size(), 1);
        assert!((m.matrix().get(0, 0) - 1.0 / 3.0).abs() < 1e-15);
        let space = TensorSpace::uniform(1, 1, 3).unwrap();
        let m = assemble_sgq(&space, &geom, &Form::Mass(ScalarField::Constant(1.0)), 2).unwrap();
        let h = 1.0 / 3.0;
        assert!((m.matrix().get(0, 0) - 2.0 * h / 3.0).abs() < 1e-15);
        assert!((m.matrix().get(0, 1) - h / 6.0).abs() < 1e-15);
    }

    #[test]
    fn cube_matrices_are_kronecker_products() {
        let space = TensorSpace::uniform(3, 2, 3).unwrap();
        let geom = GeometryMap::Identity { dim: 3 };
        let kv = space.knot_vector(0).clone();
        let m0 = interior_gram(&kv, 0, 0);
        let k0 = interior_gram(&kv, 1, 1);
        let mass = assemble_sgq(&space, &geom, &Form::Mass(ScalarField::Constant(1.0)), 3).unwrap();
        let expected = KronOperator::new(vec![m0.clone(), m0.clone(), m0.clone()]).unwrap().materialize().unwrap();
        assert!(mass.matrix().max_abs_diff(&expected) < 1e-15);

        let stiff = assemble_sgq(&space, &geom, &Form::Stiffness(TensorField::Identity), 3).unwrap();
        let mut expected = vec![0.0; stiff.size() * stiff.size()];
        for l in 0..3 {
            let mut f = vec![m0.clone(), m0.clone(), m0.clone()];
            f[l] = k0.clone();
            let t = KronOperator::new(f).unwrap().materialize().unwrap().to_dense();
            for (e, v) in expected.iter_mut().zip(t) {
                *e += v;
            }
        }
        let expected = CsrMatrix::from_dense(stiff.size(), stiff.size(), &expected);
        assert!(stiff.matrix().max_abs_diff(&expected) < 1e-13);
        assert!(stiff.symmetry_defect() < 1e-14);
    }

    #[test]
    fn pattern_row_counts() {
        let space = TensorSpace::uniform(3, 2, 8).unwrap();
        assert_eq!(max_row_nnz(&space), 125);
        let m = assemble_sgq(&TensorSpace::uniform(2, 2, 8).unwrap(), &GeometryMap::Identity { dim: 2 }, &Form::Mass(ScalarField::Constant(1.0)), 3)
            .unwrap();
        assert_eq!(m.max_row_nnz(), 25);
    }

    #[test]
    fn guard_rejects_before_allocation() {
        let space = TensorSpace::uniform(3, 3, 8).unwrap();
        let geom = GeometryMap::Identity { dim: 3 };
        let err = assemble_sgq_with_limit(&space, &geom, &Form::Mass(ScalarField::Constant(1.0)), 4, 1000).unwrap_err();
        assert!(matches!(err, Error::SizeGuard { limit: 1000, .. }));
    }

    #[test]
    fn rhs_of_constant_is_basis_integral() {
        let space = TensorSpace::uniform(3, 1, 4).unwrap();
        let geom = GeometryMap::Identity { dim: 3 };
        let rhs = assemble_rhs(&space, &geom, &ScalarField::Constant(1.0), 2).unwrap();
        // every interior hat integrates to h = 1/4
        assert!(rhs.iter().all(|&r| (r - 0.25f64.powi(3)).abs() < 1e-15));
        let zero = assemble_rhs(&space, &geom, &ScalarField::Zero, 2).unwrap();
        assert!(zero.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn wq_explicit_mass_on_cube_matches_gauss() {
        let space = TensorSpace::uniform(2, 3, 4).unwrap();
        let geom = GeometryMap::Identity { dim: 2 };
        let rules = crate::operators::build_rules(&space).unwrap();
        let form = Form::Mass(ScalarField::Constant(1.0));
        let wq = assemble_wq_explicit(&space, &rules, &geom, &form).unwrap();
        let sgq = assemble_sgq(&space, &geom, &form, 4).unwrap();
        assert!(wq.matrix().max_abs_diff(sgq.matrix()) < 1e-14);
    }

    #[test]
    fn gauss_matfree_mass_matches_assembly() {
        let space = TensorSpace::uniform(3, 2, 3).unwrap();
        let geom = crate::geometry::quarter_ring_map();
        let alpha = ScalarField::Constant(1.0);
        let op = GaussMassOperator::setup(&space, &geom, &alpha, 3, None).unwrap();
        let m = assemble_sgq(&space, &geom, &Form::Mass(alpha), 3).unwrap();
        let v: Vec<f64> = (0..op.size()).map(|i| (i as f64 * 0.37).cos()).collect();
        let a = op.apply(&v, None).unwrap();
        let mut b = vec![0.0; v.len()];
        m.matrix().mul_vec(&v, &mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}
