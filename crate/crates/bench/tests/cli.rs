//! End-to-end behavior of the `mfwq` binary and the run pipeline.

use std::process::Command;

use mfwq_bench::config::{GeometryChoice, Method, RunConfig};
use mfwq_bench::output::{write_runs, RUN_HEADER};
use mfwq_bench::run::{cmd_convergence, cmd_solve};

fn mfwq() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfwq"))
}

fn scratch(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("mfwq-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn solve_prints_csv_with_fixed_header() {
    let out = mfwq()
        .args(["solve", "--degree", "2", "--mesh-exp", "2", "--geometry", "cube"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "method,p,k,N,error_h1,error_l2,iters,setup_s,solve_s,total_s,matvec_flops,setup_flops,coeff_scalars,nnz");
    assert_eq!(lines.len(), 2);
    let fields: Vec<_> = lines[1].split(',').collect();
    assert_eq!(fields.len(), 14);
    assert_eq!(fields[0], "mfwq");
    assert_eq!(fields[3], "64");
    assert_eq!(fields[13], "");
}

#[test]
fn solve_writes_record_and_residual_history() {
    let path = scratch("solve.csv");
    let out = mfwq()
        .args(["solve", "--degree", "1", "--mesh-exp", "3", "--method", "sgq", "--out"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), RUN_HEADER.to_vec());
    let row = reader.records().next().unwrap().unwrap();
    assert_eq!(&row[0], "sgq");
    assert!(!row[13].is_empty());
    let history = std::fs::read_to_string(path.with_file_name("solve_residuals.csv")).unwrap();
    assert!(history.starts_with("iteration,relative_residual\n0,1.000000e0"));
}

#[test]
fn hard_errors_exit_nonzero() {
    let conflict = mfwq()
        .args(["solve", "--method", "sgq", "--solver", "bicgstab"])
        .output()
        .unwrap();
    assert!(!conflict.status.success());
    assert!(String::from_utf8_lossy(&conflict.stderr).contains("requires solver"));

    let large = mfwq().args(["solve", "--mesh-exp", "7"]).output().unwrap();
    assert!(!large.status.success());
    assert!(String::from_utf8_lossy(&large.stderr).contains("--allow-large"));

    let guard = mfwq()
        .args(["solve", "--method", "sgq", "--degree", "8", "--mesh-exp", "6"])
        .output()
        .unwrap();
    assert!(!guard.status.success());
    let msg = String::from_utf8_lossy(&guard.stderr);
    assert!(msg.contains("estimated"), "{msg}");

    let unknown = mfwq().args(["solve", "--degre", "2"]).output().unwrap();
    assert!(!unknown.status.success());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let cfg = scratch("run.toml");
    std::fs::write(&cfg, "degree = 4\nmesh_exp = 2\ngeometry = \"cube\"\nmethod = \"wq\"\n").unwrap();
    let out = mfwq()
        .args(["solve", "--degree", "2", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("wq,2,2,64,"));
}

#[test]
fn convergence_sweep_keeps_going_after_failures() {
    let path = scratch("conv.csv");
    let out = mfwq()
        .args(["convergence", "--method", "sgq", "--p-list", "1,8", "--k-list", "2,6", "--geometry", "cube", "--out"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p=8 k=6 failed"));
    let text = std::fs::read_to_string(&path).unwrap();
    let rows: Vec<_> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[3], "sgq,8,6,,,,,,,,,,,");
    let companion = std::fs::read_to_string(path.with_file_name("conv_time_error.csv")).unwrap();
    assert_eq!(companion.lines().count(), 4);
}

#[test]
fn empty_sweep_is_an_empty_table() {
    let results = cmd_convergence(&RunConfig::default(), &[], &[4, 5]);
    assert!(results.is_empty());
    let mut buf = Vec::new();
    write_runs(&mut buf, &[]).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().trim_end(), RUN_HEADER.join(","));
}

#[test]
fn profile_reports_storage_and_flops() {
    let out = mfwq().args(["profile", "--mesh-exp", "2", "--p-list", "1,2"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,p,k,N,setup_s,setup_flops,matvec_s,matvec_flops,coeff_scalars,peak_aux_scalars,nnz"
    );
    assert_eq!(lines.count(), 2);
}

#[test]
fn runs_are_deterministic() {
    let cfg = RunConfig {
        degree: 3,
        mesh_exp: 3,
        ..RunConfig::default()
    };
    let a = cmd_solve(&cfg).unwrap();
    let b = cmd_solve(&cfg).unwrap();
    assert_eq!(a.iters, b.iters);
    assert_eq!(a.error_h1, b.error_h1);
    assert_eq!(a.residuals, b.residuals);
    assert!((a.total_s - a.setup_s - a.solve_s).abs() < 1e-9);
}

#[test]
fn gauss_cg_and_weighted_bicgstab_agree_at_small_scale() {
    let base = RunConfig {
        degree: 1,
        mesh_exp: 3,
        geometry: GeometryChoice::Ring,
        tol: Some(1e-10),
        ..RunConfig::default()
    };
    let wq = cmd_solve(&RunConfig {
        method: Method::Mfwq,
        ..base.clone()
    })
    .unwrap();
    let sgq = cmd_solve(&RunConfig {
        method: Method::Sgq,
        ..base
    })
    .unwrap();
    assert!(wq.converged && sgq.converged);
    let rel = (wq.error_h1 - sgq.error_h1).abs() / sgq.error_h1;
    assert!(rel < 0.05, "mfwq {} vs sgq {}", wq.error_h1, sgq.error_h1);
}
