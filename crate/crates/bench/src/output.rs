//! CSV writers for run records, residual histories and profiles.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::run::{ProfileRecord, RunRecord};
use crate::BenchError;

/// Column order of convergence and solve CSV files.
pub const RUN_HEADER: [&str; 14] = [
    "method",
    "p",
    "k",
    "N",
    "error_h1",
    "error_l2",
    "iters",
    "setup_s",
    "solve_s",
    "total_s",
    "matvec_flops",
    "setup_flops",
    "coeff_scalars",
    "nnz",
];

#[derive(Debug, Default, Serialize)]
struct RunRow<'a> {
    method: &'a str,
    p: usize,
    k: u32,
    #[serde(rename = "N")]
    n: Option<usize>,
    error_h1: Option<f64>,
    error_l2: Option<f64>,
    iters: Option<usize>,
    setup_s: Option<f64>,
    solve_s: Option<f64>,
    total_s: Option<f64>,
    matvec_flops: Option<u64>,
    setup_flops: Option<u64>,
    coeff_scalars: Option<usize>,
    nnz: Option<usize>,
}

impl<'a> From<&'a RunRecord> for RunRow<'a> {
    fn from(r: &'a RunRecord) -> Self {
        Self {
            method: r.method.name(),
            p: r.p,
            k: r.k,
            n: Some(r.n),
            error_h1: Some(r.error_h1),
            error_l2: Some(r.error_l2),
            iters: Some(r.iters),
            setup_s: Some(r.setup_s),
            solve_s: Some(r.solve_s),
            total_s: Some(r.total_s),
            matvec_flops: Some(r.matvec_flops),
            setup_flops: r.setup_flops,
            coeff_scalars: r.coeff_scalars,
            nnz: r.nnz,
        }
    }
}

/// One CSV row; a failed run keeps its identifying columns and leaves the
/// measurements empty.
pub enum RunEntry<'a> {
    Done(&'a RunRecord),
    Failed { method: &'a str, p: usize, k: u32 },
}

pub fn write_runs<W: Write>(writer: W, entries: &[RunEntry<'_>]) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(RUN_HEADER)?;
    for entry in entries {
        let row = match entry {
            RunEntry::Done(r) => RunRow::from(*r),
            RunEntry::Failed { method, p, k } => RunRow {
                method,
                p: *p,
                k: *k,
                ..Default::default()
            },
        };
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_runs_file(path: &Path, entries: &[RunEntry<'_>]) -> Result<(), BenchError> {
    write_runs(std::fs::File::create(path)?, entries)
}

/// `method,p,k,total_s,error_h1` for time-versus-error plots.
pub fn write_time_error<W: Write>(writer: W, records: &[&RunRecord]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "p", "k", "total_s", "error_h1"])?;
    for r in records {
        w.write_record([
            r.method.name().to_string(),
            r.p.to_string(),
            r.k.to_string(),
            r.total_s.to_string(),
            r.error_h1.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ProfileRow<'a> {
    method: &'a str,
    p: usize,
    k: u32,
    #[serde(rename = "N")]
    n: usize,
    setup_s: f64,
    setup_flops: Option<u64>,
    matvec_s: f64,
    matvec_flops: u64,
    coeff_scalars: Option<usize>,
    peak_aux_scalars: Option<usize>,
    nnz: Option<usize>,
}

pub fn write_profile<W: Write>(writer: W, records: &[&ProfileRecord]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(ProfileRow {
            method: r.method.name(),
            p: r.p,
            k: r.k,
            n: r.n,
            setup_s: r.setup_s,
            setup_flops: r.setup_flops,
            matvec_s: r.matvec_s,
            matvec_flops: r.matvec_flops,
            coeff_scalars: r.coeff_scalars,
            peak_aux_scalars: r.peak_aux_scalars,
            nnz: r.nnz,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// `iteration,relative_residual` history of one solve.
pub fn write_residuals<W: Write>(writer: W, residuals: &[f64]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "relative_residual"])?;
    for (k, r) in residuals.iter().enumerate() {
        w.write_record([k.to_string(), format!("{r:.6e}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Path of the companion file `<stem>_<suffix>.csv` next to `path`.
pub fn companion(path: &Path, suffix: &str) -> std::path::PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}_{suffix}.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Method;

    fn record() -> RunRecord {
        RunRecord {
            method: Method::Mfwq,
            p: 2,
            k: 4,
            n: 4913,
            error_h1: 0.5,
            error_l2: 0.25,
            iters: 7,
            setup_s: 0.1,
            solve_s: 0.2,
            total_s: 0.3,
            matvec_flops: 1000,
            setup_flops: Some(50),
            coeff_scalars: Some(60),
            nnz: None,
            converged: true,
            tolerance: 0.01,
            residuals: vec![1.0, 0.1],
        }
    }

    #[test]
    fn run_csv_header_and_failed_row() {
        let r = record();
        let mut buf = Vec::new();
        write_runs(
            &mut buf,
            &[
                RunEntry::Done(&r),
                RunEntry::Failed {
                    method: "sgq",
                    p: 8,
                    k: 6,
                },
            ],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], RUN_HEADER.join(","));
        assert_eq!(lines[1], "mfwq,2,4,4913,0.5,0.25,7,0.1,0.2,0.3,1000,50,60,");
        assert_eq!(lines[2], "sgq,8,6,,,,,,,,,,,");
    }

    #[test]
    fn companion_name() {
        let p = companion(Path::new("/tmp/conv.csv"), "time_error");
        assert_eq!(p, Path::new("/tmp/conv_time_error.csv"));
    }
}
