//! Matrix-free isogeometric Galerkin solver built on weighted quadrature.
//!
//! The crate is organised bottom-up:
//!
//! * [`spline`]: univariate B-spline spaces, collocation matrices and
//!   tensor-product index bookkeeping.
//! * [`wq`]: weighted-quadrature points and the four families of
//!   univariate weight matrices.
//! * [`kron`]: Kronecker products applied by sum-factorization, with flop
//!   and buffer instrumentation.
//! * [`operators`]: matrix-free mass and stiffness operators.
//! * [`assembly`]: explicitly assembled matrices (standard Gauss and
//!   weighted quadrature) used as oracles and baselines.
//! * [`fd`] and [`krylov`]: the fast-diagonalization preconditioner and
//!   the CG / BiCGStab solvers.
//! * [`geometry`], [`coefficients`], [`problem`] and [`norms`]: geometry
//!   maps, coefficient fields, the manufactured benchmark and error norms.

pub mod assembly;
pub mod coefficients;
pub mod error;
pub mod fd;
pub mod geometry;
pub mod kron;
pub mod krylov;
pub mod norms;
pub mod operators;
pub mod problem;
pub mod quadrature;
pub mod sparse;
pub mod spline;
pub mod wq;

pub use error::{Error, Result};
