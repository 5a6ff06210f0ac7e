//! Gauss–Legendre rules and per-span tensor Gauss grids.

use std::f64::consts::PI;

use crate::sparse::CsrMatrix;
use crate::spline::{eval_collocation, KnotVector};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut x = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss rule mapped to `[a, b]`.
pub fn gauss_on_interval(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|v| v * half).collect(),
    )
}

/// Composite Gauss rule with a fixed number of nodes in every knot span.
#[derive(Debug, Clone)]
pub struct SpanGauss {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub per_span: usize,
}

impl SpanGauss {
    pub fn new(kv: &KnotVector, per_span: usize) -> Self {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (a, b) in kv.spans() {
            let (x, w) = gauss_on_interval(a, b, per_span);
            points.extend(x);
            weights.extend(w);
        }
        Self {
            points,
            weights,
            per_span,
        }
    }

    pub fn num_spans(&self) -> usize {
        self.points.len() / self.per_span
    }
}

/// Per-direction Gauss data on a tensor space: points, weights and the
/// interior collocation matrices (values and first derivatives).
#[derive(Debug, Clone)]
pub struct GaussGrid {
    pub rules: Vec<SpanGauss>,
    pub values: Vec<CsrMatrix>,
    pub derivatives: Vec<CsrMatrix>,
}

impl GaussGrid {
    /// `per_span` Gauss nodes per span in every direction; collocation
    /// columns are restricted to the Dirichlet-interior functions.
    pub fn new(knots: &[KnotVector], per_span: usize) -> Self {
        let mut rules = Vec::new();
        let mut values = Vec::new();
        let mut derivatives = Vec::new();
        for kv in knots {
            let rule = SpanGauss::new(kv, per_span);
            let m = kv.num_funcs();
            let b0 = eval_collocation(kv, &rule.points, 0).expect("Gauss nodes lie in [0,1]");
            let b1 = eval_collocation(kv, &rule.points, 1).expect("Gauss nodes lie in [0,1]");
            let nq = rule.points.len();
            values.push(b0.matrix().submatrix(0..nq, 1..m - 1));
            derivatives.push(b1.matrix().submatrix(0..nq, 1..m - 1));
            rules.push(rule);
        }
        Self {
            rules,
            values,
            derivatives,
        }
    }

    pub fn dim(&self) -> usize {
        self.rules.len()
    }

    /// Points per direction.
    pub fn point_dims(&self) -> Vec<usize> {
        self.rules.iter().map(|r| r.points.len()).collect()
    }

    /// Number of slabs: spans of the last direction.
    pub fn num_slabs(&self) -> usize {
        self.rules.last().unwrap().num_spans()
    }

    /// Points in one slab (all directions but the last, times one span).
    pub fn slab_len(&self) -> usize {
        let d = self.dim();
        self.rules[..d - 1].iter().map(|r| r.points.len()).product::<usize>() * self.rules[d - 1].per_span
    }

    /// Rows of the last-direction collocation belonging to slab `e`.
    pub fn slab_rows(&self, e: usize) -> std::ops::Range<usize> {
        let g = self.rules.last().unwrap().per_span;
        e * g..(e + 1) * g
    }

    /// Coordinates of point `k` of slab `e` (first direction fastest) and
    /// its tensor quadrature weight.
    pub fn slab_point(&self, e: usize, k: usize, xi: &mut [f64]) -> f64 {
        let d = self.dim();
        let mut rest = k;
        let mut w = 1.0;
        for l in 0..d {
            let r = &self.rules[l];
            let (n, offset) = if l + 1 == d { (r.per_span, e * r.per_span) } else { (r.points.len(), 0) };
            let q = offset + rest % n;
            rest /= n;
            xi[l] = r.points[q];
            w *= r.weights[q];
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_integrates_monomials_exactly() {
        for n in 1..=12 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((approx - exact).abs() < 1e-14, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn nodes_sorted_and_symmetric() {
        let (x, w) = gauss_legendre(7);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
        for k in 0..7 {
            assert!((x[k] + x[6 - k]).abs() < 1e-15);
            assert!((w[k] - w[6 - k]).abs() < 1e-15);
        }
    }

    #[test]
    fn interval_rule_length() {
        let (_, w) = gauss_on_interval(0.25, 0.75, 3);
        assert!((w.iter().sum::<f64>() - 0.5).abs() < 1e-15);
    }
}
