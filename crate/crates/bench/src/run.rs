//! Solve, convergence and profile runs.

use std::time::Instant;

use mfwq_core::assembly::{assemble_rhs, assemble_sgq, assemble_wq_explicit, AssembledMatrix, Form};
use mfwq_core::fd::FdPreconditioner;
use mfwq_core::geometry::{nurbs_quarter_ring_map, quarter_ring_map, GeometryMap};
use mfwq_core::kron::CostMeter;
use mfwq_core::krylov::{bicgstab, cg, stopping_tolerance, KrylovReport, LinearOperator};
use mfwq_core::norms::error_norms;
use mfwq_core::operators::{build_rules, SystemOperator};
use mfwq_core::problem::{oscillating_case, reference_h1_error, ManufacturedCase};
use mfwq_core::spline::TensorSpace;

use crate::config::{GeometryChoice, Method, RunConfig, SolverKind};
use crate::BenchError;

/// Tolerance of the calibration solve when no reference error is known.
pub const CALIBRATION_TOL: f64 = 1e-8;

/// Outcome of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub method: Method,
    pub p: usize,
    pub k: u32,
    pub n: usize,
    pub error_h1: f64,
    pub error_l2: f64,
    pub iters: usize,
    pub setup_s: f64,
    pub solve_s: f64,
    pub total_s: f64,
    pub matvec_flops: u64,
    pub setup_flops: Option<u64>,
    pub coeff_scalars: Option<usize>,
    pub nnz: Option<usize>,
    pub converged: bool,
    pub tolerance: f64,
    pub residuals: Vec<f64>,
}

/// Setup cost and per-product cost of one discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRecord {
    pub method: Method,
    pub p: usize,
    pub k: u32,
    pub n: usize,
    pub setup_s: f64,
    pub setup_flops: Option<u64>,
    pub matvec_s: f64,
    pub matvec_flops: u64,
    pub coeff_scalars: Option<usize>,
    pub peak_aux_scalars: Option<usize>,
    pub nnz: Option<usize>,
}

pub fn geometry(choice: GeometryChoice) -> GeometryMap {
    match choice {
        GeometryChoice::Cube => GeometryMap::Identity { dim: 3 },
        GeometryChoice::Ring => nurbs_quarter_ring_map(),
        GeometryChoice::PolarRing => quarter_ring_map(),
    }
}

/// The discrete system in either representation.
pub enum Discrete {
    MatrixFree(SystemOperator),
    Assembled(AssembledMatrix),
}

impl LinearOperator for Discrete {
    fn size(&self) -> usize {
        match self {
            Discrete::MatrixFree(op) => op.size(),
            Discrete::Assembled(m) => m.size(),
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> mfwq_core::Result<()> {
        match self {
            Discrete::MatrixFree(op) => op.apply_into(x, y, None),
            Discrete::Assembled(m) => LinearOperator::apply(m, x, y),
        }
    }
}

impl Discrete {
    /// Builds the operator or matrix of `−div(K∇u) + αu`.
    pub fn setup(
        cfg: &RunConfig,
        space: &TensorSpace,
        geom: &GeometryMap,
        case: &ManufacturedCase,
        meter: Option<&mut CostMeter>,
    ) -> Result<Self, BenchError> {
        let p = cfg.degree;
        Ok(match cfg.method {
            Method::Mfwq => {
                let rules = build_rules(space)?;
                let mut op = SystemOperator::setup(space, &rules, geom, &case.k, &case.alpha, meter)?;
                op.set_on_the_fly(cfg.on_the_fly);
                Discrete::MatrixFree(op)
            }
            Method::Wq => {
                let rules = build_rules(space)?;
                let mut m = assemble_wq_explicit(space, &rules, geom, &Form::Stiffness(case.k.clone()))?;
                if !case.alpha.is_zero() {
                    m = m.add(&assemble_wq_explicit(space, &rules, geom, &Form::Mass(case.alpha.clone()))?)?;
                }
                Discrete::Assembled(m)
            }
            Method::Sgq => {
                let mut m = assemble_sgq(space, geom, &Form::Stiffness(case.k.clone()), p + 1)?;
                if !case.alpha.is_zero() {
                    m = m.add(&assemble_sgq(space, geom, &Form::Mass(case.alpha.clone()), p + 1)?)?;
                }
                Discrete::Assembled(m)
            }
        })
    }

    pub fn setup_flops(&self) -> Option<u64> {
        match self {
            Discrete::MatrixFree(op) => Some(op.setup_flops()),
            Discrete::Assembled(_) => None,
        }
    }

    pub fn coeff_scalars(&self) -> Option<usize> {
        match self {
            Discrete::MatrixFree(op) => Some(op.coefficient_scalars()),
            Discrete::Assembled(_) => None,
        }
    }

    pub fn nnz(&self) -> Option<usize> {
        match self {
            Discrete::MatrixFree(_) => None,
            Discrete::Assembled(m) => Some(m.nnz()),
        }
    }

    /// Flops of one product, metered for the matrix-free operator and
    /// `2·nnz` for a stored matrix.
    pub fn matvec_flops(&self, x: &[f64], meter: &mut CostMeter) -> Result<u64, BenchError> {
        match self {
            Discrete::MatrixFree(op) => {
                let before = meter.flops;
                op.apply(x, Some(meter))?;
                Ok(meter.flops - before)
            }
            Discrete::Assembled(m) => Ok(2 * m.nnz() as u64),
        }
    }
}

fn krylov(
    kind: SolverKind,
    a: &dyn LinearOperator,
    fd: &FdPreconditioner,
    b: &[f64],
    tol: f64,
    maxit: usize,
) -> Result<(Vec<f64>, KrylovReport), BenchError> {
    Ok(match kind {
        SolverKind::Cg => cg(a, fd, b, tol, maxit)?,
        SolverKind::Bicgstab => bicgstab(a, fd, b, tol, maxit)?,
    })
}

/// Reference Galerkin error used by the stopping rule, if tabulated.
pub fn reference_error(cfg: &RunConfig) -> Option<f64> {
    match cfg.geometry {
        GeometryChoice::Ring | GeometryChoice::PolarRing => reference_h1_error(cfg.degree, cfg.mesh_exp as usize),
        GeometryChoice::Cube => None,
    }
}

/// Sets up, solves and measures one configuration of the oscillating
/// benchmark.
pub fn cmd_solve(cfg: &RunConfig) -> Result<RunRecord, BenchError> {
    cfg.validate()?;
    let case = oscillating_case();
    let space = TensorSpace::uniform(3, cfg.degree, cfg.num_elements())?;
    let geom = geometry(cfg.geometry);

    let start = Instant::now();
    let system = Discrete::setup(cfg, &space, &geom, &case, None)?;
    let rhs = assemble_rhs(&space, &geom, &case.f, cfg.rhs_points())?;
    let fd = FdPreconditioner::setup(&space, 0.0)?;
    let setup_s = start.elapsed().as_secs_f64();

    let kind = cfg.solver_kind();
    let errors = |x: &[f64]| error_norms(&space, &geom, x, &*case.u, &*case.grad, cfg.error_points());
    let tolerance = match (cfg.tol, reference_error(cfg)) {
        (Some(t), _) => t,
        (None, Some(e)) => stopping_tolerance(e, cfg.eta)?,
        (None, None) => {
            let (x, _) = krylov(kind, &system, &fd, &rhs, CALIBRATION_TOL, cfg.maxit)?;
            let e = errors(&x)?.h1_relative();
            stopping_tolerance(e, cfg.eta)?.max(CALIBRATION_TOL)
        }
    };

    let start = Instant::now();
    let (x, report) = krylov(kind, &system, &fd, &rhs, tolerance, cfg.maxit)?;
    let solve_s = start.elapsed().as_secs_f64();
    let norms = errors(&x)?;
    let mut meter = CostMeter::new();
    let matvec_flops = system.matvec_flops(&x, &mut meter)?;

    Ok(RunRecord {
        method: cfg.method,
        p: cfg.degree,
        k: cfg.mesh_exp,
        n: space.num_dofs(),
        error_h1: norms.h1_relative(),
        error_l2: norms.l2_relative(),
        iters: report.iterations,
        setup_s,
        solve_s,
        total_s: setup_s + solve_s,
        matvec_flops,
        setup_flops: system.setup_flops(),
        coeff_scalars: system.coeff_scalars(),
        nnz: system.nnz(),
        converged: report.converged,
        tolerance,
        residuals: report.residuals,
    })
}

/// Failure of one configuration inside a sweep.
#[derive(Debug)]
pub struct RunFailure {
    pub method: Method,
    pub p: usize,
    pub k: u32,
    pub error: BenchError,
}

/// Runs every `(p, k)` pair; failures are collected and the sweep continues.
pub fn cmd_convergence(base: &RunConfig, p_list: &[usize], k_list: &[u32]) -> Vec<Result<RunRecord, RunFailure>> {
    let mut out = Vec::new();
    for &p in p_list {
        for &k in k_list {
            let cfg = RunConfig {
                degree: p,
                mesh_exp: k,
                ..base.clone()
            };
            out.push(cmd_solve(&cfg).map_err(|error| RunFailure {
                method: cfg.method,
                p,
                k,
                error,
            }));
        }
    }
    out
}

/// Number of products averaged per profile entry.
pub const PROFILE_APPLIES: usize = 10;

/// Setup and product cost for every degree at a fixed mesh.
pub fn cmd_profile(base: &RunConfig, p_list: &[usize]) -> Vec<Result<ProfileRecord, RunFailure>> {
    p_list
        .iter()
        .map(|&p| {
            let cfg = RunConfig {
                degree: p,
                ..base.clone()
            };
            profile_one(&cfg).map_err(|error| RunFailure {
                method: cfg.method,
                p,
                k: cfg.mesh_exp,
                error,
            })
        })
        .collect()
}

fn profile_one(cfg: &RunConfig) -> Result<ProfileRecord, BenchError> {
    cfg.validate()?;
    let case = oscillating_case();
    let space = TensorSpace::uniform(3, cfg.degree, cfg.num_elements())?;
    let geom = geometry(cfg.geometry);
    let start = Instant::now();
    let system = Discrete::setup(cfg, &space, &geom, &case, None)?;
    let setup_s = start.elapsed().as_secs_f64();

    let n = space.num_dofs();
    let x: Vec<f64> = (0..n).map(|i| ((i % 97) as f64 * 0.173).sin()).collect();
    let mut y = vec![0.0; n];
    let start = Instant::now();
    for _ in 0..PROFILE_APPLIES {
        system.apply(&x, &mut y)?;
    }
    let matvec_s = start.elapsed().as_secs_f64() / PROFILE_APPLIES as f64;
    let mut meter = CostMeter::new();
    let matvec_flops = system.matvec_flops(&x, &mut meter)?;
    let peak = matches!(system, Discrete::MatrixFree(_)).then(|| meter.peak_scalars());

    Ok(ProfileRecord {
        method: cfg.method,
        p: cfg.degree,
        k: cfg.mesh_exp,
        n,
        setup_s,
        setup_flops: system.setup_flops(),
        matvec_s,
        matvec_flops,
        coeff_scalars: system.coeff_scalars(),
        peak_aux_scalars: peak,
        nnz: system.nnz(),
    })
}
