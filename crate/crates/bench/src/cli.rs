//! Command-line interface: `solve`, `convergence` and `profile`.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{GeometryChoice, Method, RunConfig, SolverKind};
use crate::output::{companion, write_profile, write_residuals, write_runs, write_time_error, RunEntry};
use crate::run::{cmd_convergence, cmd_profile, cmd_solve, RunFailure};
use crate::BenchError;

#[derive(Debug, Parser)]
#[command(name = "mfwq", about = "Matrix-free weighted-quadrature benchmark driver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one configuration and print its record.
    Solve {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Sweep degrees and mesh exponents.
    Convergence {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated degrees.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8")]
        p_list: Vec<usize>,
        /// Comma-separated mesh exponents.
        #[arg(long, value_delimiter = ',', default_value = "4,5")]
        k_list: Vec<u32>,
    },
    /// Setup and product cost across degrees at the mesh of `--mesh-exp`.
    Profile {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated degrees.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8")]
        p_list: Vec<usize>,
    },
}

/// Flags shared by all subcommands; each one overrides the config file.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// TOML file with the same keys as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub mesh_exp: Option<u32>,
    #[arg(long, value_enum)]
    pub geometry: Option<GeometryChoice>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverKind>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub maxit: Option<usize>,
    /// Fixed relative-residual tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub rhs_gauss: Option<usize>,
    #[arg(long)]
    pub error_gauss: Option<usize>,
    #[arg(long)]
    pub on_the_fly: bool,
    #[arg(long)]
    pub allow_large: bool,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig, BenchError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { cfg.$f = v; } )* };
        }
        set!(degree, mesh_exp, geometry, method, eta, maxit);
        macro_rules! set_opt {
            ($($f:ident),*) => { $( if self.$f.is_some() { cfg.$f = self.$f.clone(); } )* };
        }
        set_opt!(solver, tol, rhs_gauss, error_gauss, out);
        cfg.on_the_fly |= self.on_the_fly;
        cfg.allow_large |= self.allow_large;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, BenchError> {
    Ok(match out {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn report_failure(f: &RunFailure) {
    eprintln!("{} p={} k={} failed: {}", f.method.name(), f.p, f.k, f.error);
}

/// Executes a parsed command line.
pub fn execute(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Solve { run } => {
            let cfg = run.resolve()?;
            let record = cmd_solve(&cfg)?;
            write_runs(sink(&cfg.out)?, &[RunEntry::Done(&record)])?;
            if let Some(path) = &cfg.out {
                write_residuals(std::fs::File::create(companion(path, "residuals"))?, &record.residuals)?;
            }
            if !record.converged {
                eprintln!(
                    "warning: not converged to {:.3e} after {} iterations",
                    record.tolerance, record.iters
                );
            }
            Ok(())
        }
        Command::Convergence { run, p_list, k_list } => {
            let cfg = run.resolve()?;
            let results = cmd_convergence(&cfg, &p_list, &k_list);
            let entries: Vec<RunEntry<'_>> = results
                .iter()
                .map(|r| match r {
                    Ok(rec) => RunEntry::Done(rec),
                    Err(f) => {
                        report_failure(f);
                        RunEntry::Failed {
                            method: f.method.name(),
                            p: f.p,
                            k: f.k,
                        }
                    }
                })
                .collect();
            write_runs(sink(&cfg.out)?, &entries)?;
            if let Some(path) = &cfg.out {
                let done: Vec<_> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
                write_time_error(std::fs::File::create(companion(path, "time_error"))?, &done)?;
            }
            Ok(())
        }
        Command::Profile { run, p_list } => {
            let cfg = run.resolve()?;
            let results = cmd_profile(&cfg, &p_list);
            let done: Vec<_> = results
                .iter()
                .filter_map(|r| r.as_ref().map_err(report_failure).ok())
                .collect();
            write_profile(sink(&cfg.out)?, &done)?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = std::env::temp_dir().join(format!("mfwq-cli-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.toml");
        std::fs::write(&path, "degree = 5\nmesh_exp = 3\nmethod = \"sgq\"\n").unwrap();
        let cli = Cli::try_parse_from(["mfwq", "solve", "--config", path.to_str().unwrap(), "--degree", "3"]).unwrap();
        let Command::Solve { run } = cli.command else {
            panic!("expected solve");
        };
        let cfg = run.resolve().unwrap();
        assert_eq!(cfg.degree, 3);
        assert_eq!(cfg.mesh_exp, 3);
        assert_eq!(cfg.method, Method::Sgq);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn lists_parse() {
        let cli = Cli::try_parse_from(["mfwq", "convergence", "--p-list", "1,3", "--k-list", "2"]).unwrap();
        let Command::Convergence { p_list, k_list, .. } = cli.command else {
            panic!("expected convergence");
        };
        assert_eq!(p_list, vec![1, 3]);
        assert_eq!(k_list, vec![2]);
    }
}
