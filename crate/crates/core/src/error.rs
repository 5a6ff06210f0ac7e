use thiserror::Error;

/// Errors raised by spline construction, quadrature, operators and solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid degree {0}: must be at least 1")]
    InvalidDegree(usize),

    #[error("invalid element count {0}: must be at least 1")]
    InvalidElementCount(usize),

    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),

    #[error("point {0} lies outside the parametric interval [0, 1]")]
    PointOutOfRange(f64),

    #[error("index component {component} = {value} outside 0..{bound}")]
    IndexOutOfRange {
        component: usize,
        value: usize,
        bound: usize,
    },

    #[error("interior knot multiplicity {0} is not supported by weighted quadrature (maximum regularity requires 1)")]
    RepeatedInteriorKnot(usize),

    #[error("weighted quadrature exactness unachievable for basis function {row} (residual {residual:e})")]
    RankDeficient { row: usize, residual: f64 },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("estimated {estimated} stored entries exceed the limit of {limit}")]
    SizeGuard { estimated: u64, limit: u64 },

    #[error("degenerate geometry: det J = {det:e} at parametric point {point:?}")]
    DegenerateJacobian { point: [f64; 3], det: f64 },

    #[error("generalized eigenproblem failed: {0}")]
    Eigen(String),

    #[error("operator is not positive definite: p^T A p = {curvature:e} at iteration {iteration}")]
    Indefinite { iteration: usize, curvature: f64 },

    #[error("BiCGStab breakdown at iteration {iteration} after restart")]
    Breakdown { iteration: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
