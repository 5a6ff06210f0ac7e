//! Run configuration, loadable from a TOML file and overridable by flags.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Matrix-free weighted quadrature.
    Mfwq,
    /// Explicitly assembled weighted-quadrature matrix.
    Wq,
    /// Explicitly assembled standard Gauss matrix.
    Sgq,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mfwq => "mfwq",
            Method::Wq => "wq",
            Method::Sgq => "sgq",
        }
    }

    /// Gauss matrices are symmetric and use CG; weighted-quadrature
    /// matrices are not and use BiCGStab.
    pub fn solver(self) -> SolverKind {
        match self {
            Method::Sgq => SolverKind::Cg,
            Method::Mfwq | Method::Wq => SolverKind::Bicgstab,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Bicgstab,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GeometryChoice {
    /// Unit cube with the identity map.
    Cube,
    /// Thick quarter ring, rational quadratic in the angular direction.
    Ring,
    /// Thick quarter ring with the polar angle linear in the parameter.
    #[serde(rename = "polar-ring")]
    #[value(name = "polar-ring")]
    PolarRing,
}

/// Largest mesh exponent accepted without `allow_large`.
pub const DEFAULT_MAX_MESH_EXP: u32 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub degree: usize,
    /// `h = 2^-mesh_exp`, `2^mesh_exp` elements per direction.
    pub mesh_exp: u32,
    pub geometry: GeometryChoice,
    pub method: Method,
    /// Must agree with the method when given.
    pub solver: Option<SolverKind>,
    pub eta: f64,
    pub maxit: usize,
    /// Fixed relative-residual tolerance, bypassing the error-based rule.
    pub tol: Option<f64>,
    /// Gauss points per span for the load vector (default `p + 1`).
    pub rhs_gauss: Option<usize>,
    /// Gauss points per span for error norms (default `p + 2`).
    pub error_gauss: Option<usize>,
    pub on_the_fly: bool,
    pub allow_large: bool,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            degree: 2,
            mesh_exp: 4,
            geometry: GeometryChoice::Ring,
            method: Method::Mfwq,
            solver: None,
            eta: 0.1,
            maxit: mfwq_core::krylov::DEFAULT_MAXIT,
            tol: None,
            rhs_gauss: None,
            error_gauss: None,
            on_the_fly: false,
            allow_large: false,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, BenchError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn num_elements(&self) -> usize {
        1usize << self.mesh_exp
    }

    pub fn rhs_points(&self) -> usize {
        self.rhs_gauss.unwrap_or(self.degree + 1)
    }

    pub fn error_points(&self) -> usize {
        self.error_gauss.unwrap_or(self.degree + 2)
    }

    pub fn solver_kind(&self) -> SolverKind {
        self.method.solver()
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |msg: String| Err(BenchError::Config(msg));
        if self.degree == 0 {
            return bad("degree must be at least 1".into());
        }
        if self.mesh_exp == 0 && self.degree < 2 {
            return bad("a single linear element has no interior functions".into());
        }
        if self.mesh_exp > DEFAULT_MAX_MESH_EXP && !self.allow_large {
            return bad(format!(
                "mesh exponent {} exceeds {DEFAULT_MAX_MESH_EXP}; pass --allow-large to run it",
                self.mesh_exp
            ));
        }
        if self.mesh_exp > 12 {
            return bad(format!("mesh exponent {} is out of range", self.mesh_exp));
        }
        if !(self.eta > 0.0) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if self.maxit == 0 {
            return bad("maxit must be positive".into());
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return bad(format!("tolerance must be positive, got {t}"));
            }
        }
        if let Some(s) = self.solver {
            if s != self.method.solver() {
                return bad(format!(
                    "method {} requires solver {:?}, got {:?}",
                    self.method.name(),
                    self.method.solver(),
                    s
                ));
            }
        }
        if self.rhs_gauss == Some(0) || self.error_gauss == Some(0) {
            return bad("Gauss point counts must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = RunConfig::from_toml_str("degree = 3\nmesh_exp = 5\ngeometry = \"cube\"\nmethod = \"sgq\"\n").unwrap();
        assert_eq!(cfg.degree, 3);
        assert_eq!(cfg.geometry, GeometryChoice::Cube);
        assert_eq!(cfg.solver_kind(), SolverKind::Cg);
        assert_eq!(cfg.eta, 0.1);
        assert_eq!(cfg.maxit, 1000);
        assert!(RunConfig::from_toml_str("degre = 3").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.mesh_exp = 7;
        assert!(cfg.validate().is_err());
        cfg.allow_large = true;
        assert!(cfg.validate().is_ok());
        cfg.solver = Some(SolverKind::Cg);
        assert!(cfg.validate().is_err());
    }
}
