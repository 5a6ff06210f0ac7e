//! Kronecker products applied by sum-factorization.
//!
//! Factors are listed from the first (fastest varying) direction to the
//! last: `factors[0]` is `A^(1)`. Vectors are indexed with the first
//! direction fastest, so `(A^(d) ⊗ … ⊗ A^(1))_{ij} = Π_l A^(l)_{i_l j_l}`.
//! Modes are contracted from the last direction down to the first, and the
//! Kronecker matrix itself is never formed.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Flop and buffer instrumentation for sum-factorized kernels.
///
/// One multiply plus one add counts as two flops. Buffer sizes are in
/// scalars (`f64` values), tracked as live and peak totals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CostMeter {
    pub flops: u64,
    live: usize,
    peak: usize,
}

impl CostMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_flops(&mut self, flops: u64) {
        self.flops += flops;
    }

    /// Records an auxiliary buffer of `scalars` entries becoming live.
    pub fn acquire(&mut self, scalars: usize) {
        self.live += scalars;
        self.peak = self.peak.max(self.live);
    }

    pub fn release(&mut self, scalars: usize) {
        self.live = self.live.saturating_sub(scalars);
    }

    /// Peak simultaneously-live auxiliary scalars.
    pub fn peak_scalars(&self) -> usize {
        self.peak
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

pub(crate) fn meter_flops(meter: &mut Option<&mut CostMeter>, flops: u64) {
    if let Some(m) = meter.as_deref_mut() {
        m.add_flops(flops);
    }
}

pub(crate) fn meter_acquire(meter: &mut Option<&mut CostMeter>, scalars: usize) {
    if let Some(m) = meter.as_deref_mut() {
        m.acquire(scalars);
    }
}

pub(crate) fn meter_release(meter: &mut Option<&mut CostMeter>, scalars: usize) {
    if let Some(m) = meter.as_deref_mut() {
        m.release(scalars);
    }
}

/// `y[a, r, b] = Σ_c A[r, c] x[a, c, b]` with `a < pre`, `b < post`.
fn contract_mode(a: &CsrMatrix, x: &[f64], y: &mut [f64], pre: usize, post: usize) {
    let s = a.nrows();
    let t = a.ncols();
    debug_assert_eq!(x.len(), pre * t * post);
    debug_assert_eq!(y.len(), pre * s * post);
    if pre == 1 {
        for b in 0..post {
            let xs = &x[b * t..(b + 1) * t];
            let ys = &mut y[b * s..(b + 1) * s];
            for (r, yr) in ys.iter_mut().enumerate() {
                let (cols, vals) = a.row(r);
                *yr = cols.iter().zip(vals).map(|(&c, &v)| v * xs[c]).sum();
            }
        }
        return;
    }
    for b in 0..post {
        for r in 0..s {
            let yrow = &mut y[(b * s + r) * pre..(b * s + r + 1) * pre];
            yrow.fill(0.0);
            let (cols, vals) = a.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let xrow = &x[(b * t + c) * pre..(b * t + c + 1) * pre];
                for (yy, xx) in yrow.iter_mut().zip(xrow) {
                    *yy += v * xx;
                }
            }
        }
    }
}

/// Contracts `factors` (directions `0..factors.len()`) of a tensor that
/// carries an extra passive trailing dimension of size `trailing`.
fn contract_all(
    factors: &[&CsrMatrix],
    x: &[f64],
    out: &mut [f64],
    trailing: usize,
    meter: &mut Option<&mut CostMeter>,
) {
    let d = factors.len();
    if d == 0 {
        out.copy_from_slice(x);
        return;
    }
    let mut dims: Vec<usize> = factors.iter().map(|f| f.ncols()).collect();
    // sizes of the intermediate results (all stages but the last)
    let mut sizes = Vec::with_capacity(d);
    {
        let mut tmp = dims.clone();
        for l in (0..d).rev() {
            tmp[l] = factors[l].nrows();
            sizes.push(tmp.iter().product::<usize>() * trailing);
        }
    }
    let scratch = sizes[..d - 1].iter().copied().max().unwrap_or(0);
    let mut bufs = [vec![0.0; scratch], vec![0.0; if d > 2 { scratch } else { 0 }]];
    let live = scratch * if d > 2 { 2 } else { usize::from(d > 1) };
    meter_acquire(meter, live);

    for (stage, l) in (0..d).rev().enumerate() {
        let pre: usize = dims[..l].iter().product();
        let post: usize = dims[l + 1..].iter().product::<usize>() * trailing;
        let f = factors[l];
        meter_flops(meter, 2 * (f.nnz() * pre * post) as u64);
        let size = pre * f.nrows() * post;
        let last = stage == d - 1;
        let [b0, b1] = &mut bufs;
        let (src, dst): (&[f64], &mut [f64]) = match (stage, last) {
            (0, true) => (x, &mut out[..]),
            (0, false) => (x, &mut b0[..size]),
            (s, true) if s % 2 == 1 => (&b0[..], &mut out[..]),
            (_, true) => (&b1[..], &mut out[..]),
            (s, false) if s % 2 == 1 => (&b0[..], &mut b1[..size]),
            (_, false) => (&b1[..], &mut b0[..size]),
        };
        let in_size = pre * f.ncols() * post;
        contract_mode(f, &src[..in_size], dst, pre, post);
        dims[l] = f.nrows();
    }
    meter_release(meter, live);
}

fn check_shapes(factors: &[&CsrMatrix], x_len: usize, out_len: usize) -> Result<()> {
    if factors.is_empty() {
        return Err(Error::InvalidArgument("Kronecker product needs at least one factor".into()));
    }
    let cols: usize = factors.iter().map(|f| f.ncols()).product();
    let rows: usize = factors.iter().map(|f| f.nrows()).product();
    if x_len != cols {
        return Err(Error::ShapeMismatch {
            expected: cols,
            found: x_len,
        });
    }
    if out_len != rows {
        return Err(Error::ShapeMismatch {
            expected: rows,
            found: out_len,
        });
    }
    Ok(())
}

/// `out = (A^(d) ⊗ … ⊗ A^(1)) x` by sum-factorization.
pub fn kron_apply_into(
    factors: &[&CsrMatrix],
    x: &[f64],
    out: &mut [f64],
    mut meter: Option<&mut CostMeter>,
) -> Result<()> {
    check_shapes(factors, x.len(), out.len())?;
    contract_all(factors, x, out, 1, &mut meter);
    Ok(())
}

/// Sum-factorized product fused with a diagonal scaling of the input.
///
/// Computes `(A^(d) ⊗ … ⊗ A^(1)) diag(s) x` where `s` is never stored:
/// the input is streamed one hyperplane (fixed last-direction index `c`)
/// at a time, and `scale(c, plane_in, plane_out)` writes the scaled plane.
/// `last_by_col` must be the transpose of `factors[d-1]`.
pub fn kron_apply_scaled_into(
    factors: &[&CsrMatrix],
    last_by_col: &CsrMatrix,
    x: &[f64],
    scale: &mut dyn FnMut(usize, &[f64], &mut [f64]),
    out: &mut [f64],
    mut meter: Option<&mut CostMeter>,
) -> Result<()> {
    check_shapes(factors, x.len(), out.len())?;
    let d = factors.len();
    let last = factors[d - 1];
    if last_by_col.nrows() != last.ncols() || last_by_col.ncols() != last.nrows() {
        return Err(Error::ShapeMismatch {
            expected: last.ncols(),
            found: last_by_col.nrows(),
        });
    }
    let plane: usize = factors[..d - 1].iter().map(|f| f.ncols()).product();
    let reduced = plane * last.nrows();

    let mut scaled = vec![0.0; plane];
    meter_acquire(&mut meter, plane);
    let stage_one_into_out = d == 1;
    let mut y = if stage_one_into_out { Vec::new() } else { vec![0.0; reduced] };
    meter_acquire(&mut meter, y.len());
    {
        let target: &mut [f64] = if stage_one_into_out { &mut out[..] } else { &mut y[..] };
        target.fill(0.0);
        for c in 0..last.ncols() {
            let (rows, vals) = last_by_col.row(c);
            if rows.is_empty() {
                continue;
            }
            scale(c, &x[c * plane..(c + 1) * plane], &mut scaled);
            for (&r, &v) in rows.iter().zip(vals) {
                let dst = &mut target[r * plane..(r + 1) * plane];
                for (yy, ss) in dst.iter_mut().zip(&scaled) {
                    *yy += v * ss;
                }
            }
        }
    }
    meter_flops(&mut meter, 2 * (last.nnz() * plane) as u64);
    meter_release(&mut meter, plane);
    if !stage_one_into_out {
        contract_all(&factors[..d - 1], &y, out, last.nrows(), &mut meter);
    }
    meter_release(&mut meter, y.len());
    Ok(())
}

/// Flop count of a sum-factorized product with the given factors.
pub fn kron_flops(factors: &[&CsrMatrix]) -> u64 {
    let d = factors.len();
    let mut dims: Vec<usize> = factors.iter().map(|f| f.ncols()).collect();
    let mut total = 0u64;
    for l in (0..d).rev() {
        let pre: usize = dims[..l].iter().product();
        let post: usize = dims[l + 1..].iter().product();
        total += 2 * (factors[l].nnz() * pre * post) as u64;
        dims[l] = factors[l].nrows();
    }
    total
}

/// Default ceiling on stored entries when materializing a product.
pub const MATERIALIZE_LIMIT: u64 = 10_000_000;

/// Owned Kronecker product `A^(d) ⊗ … ⊗ A^(1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KronOperator {
    factors: Vec<CsrMatrix>,
}

impl KronOperator {
    /// `factors[0]` is the first direction.
    pub fn new(factors: Vec<CsrMatrix>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidArgument("Kronecker product needs at least one factor".into()));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[CsrMatrix] {
        &self.factors
    }

    fn refs(&self) -> Vec<&CsrMatrix> {
        self.factors.iter().collect()
    }

    /// `(rows, cols)` of the implicit product.
    pub fn shape(&self) -> (usize, usize) {
        (
            self.factors.iter().map(|f| f.nrows()).product(),
            self.factors.iter().map(|f| f.ncols()).product(),
        )
    }

    pub fn apply(&self, x: &[f64], meter: Option<&mut CostMeter>) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.shape().0];
        kron_apply_into(&self.refs(), x, &mut out, meter)?;
        Ok(out)
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64], meter: Option<&mut CostMeter>) -> Result<()> {
        kron_apply_into(&self.refs(), x, out, meter)
    }

    /// Predicted flops of [`apply`](Self::apply).
    pub fn flops(&self) -> u64 {
        kron_flops(&self.refs())
    }

    /// Explicit sparse matrix with entries `Π_l A^(l)_{i_l j_l}`.
    pub fn materialize(&self) -> Result<CsrMatrix> {
        self.materialize_with_limit(MATERIALIZE_LIMIT)
    }

    pub fn materialize_with_limit(&self, limit: u64) -> Result<CsrMatrix> {
        let estimated: u64 = self.factors.iter().map(|f| f.nnz() as u64).product();
        if estimated > limit {
            return Err(Error::SizeGuard { estimated, limit });
        }
        if self.factors.len() == 1 {
            return Ok(self.factors[0].clone());
        }
        let (rows, cols) = self.shape();
        let mut triplets = vec![(0usize, 0usize, 1.0f64)];
        let mut row_stride = 1;
        let mut col_stride = 1;
        for f in &self.factors {
            let mut next = Vec::with_capacity(triplets.len() * f.nnz());
            for &(r0, c0, v0) in &triplets {
                for r in 0..f.nrows() {
                    let (cs, vs) = f.row(r);
                    for (&c, &v) in cs.iter().zip(vs) {
                        next.push((r0 + r * row_stride, c0 + c * col_stride, v0 * v));
                    }
                }
            }
            triplets = next;
            row_stride *= f.nrows();
            col_stride *= f.ncols();
        }
        Ok(CsrMatrix::from_triplets(rows, cols, &triplets))
    }
}
