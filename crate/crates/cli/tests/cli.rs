use std::path::Path;
use std::process::{Command, Output};

fn augdec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_augdec")).args(args).output().unwrap()
}

fn solve_into(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["solve", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    augdec(&args)
}

const SMALL_EXCHANGE: &[&str] = &[
    "--experiment", "exchange", "--n", "20", "--p", "15", "--blocks", "3",
];

#[test]
fn repeat_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for solver in ["ada", "iada", "vsadmm", "proxjadmm"] {
        let (a, b) = (dir.path().join(format!("{solver}-a")), dir.path().join(format!("{solver}-b")));
        let mut args = SMALL_EXCHANGE.to_vec();
        args.extend(["--solver", solver, "--max-iters", "300"]);
        let first = solve_into(&a, &args);
        let second = solve_into(&b, &args);
        assert_eq!(first.status.code(), second.status.code());
        assert!(matches!(first.status.code(), Some(0 | 2)), "{solver}: {first:?}");
        let read = |p: &Path| std::fs::read(p.join("trace.csv")).unwrap();
        assert_eq!(read(&a), read(&b), "{solver}");
        assert_eq!(
            std::fs::read(a.join("rate_report.json")).unwrap(),
            std::fs::read(b.join("rate_report.json")).unwrap()
        );
    }
}

#[test]
fn zero_iterations_give_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = solve_into(&out, &["--experiment", "lasso", "--n", "10", "--d", "30", "--max-iters", "0"]);
    assert_eq!(res.status.code(), Some(2), "{res:?}");
    let csv = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(csv, "iter,objective,residual,delta_g,x_rel,feas_rel\n");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "not_converged");
    assert_eq!(summary["iterations"], 0);
}

#[test]
fn inexact_trace_has_certificate_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut args = SMALL_EXCHANGE.to_vec();
    args.extend(["--solver", "iada", "--schedule", "criterion_b", "--gamma", "2", "--max-iters", "5"]);
    let res = solve_into(&out, &args);
    assert!(matches!(res.status.code(), Some(0 | 2)), "{res:?}");
    let csv = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iter,objective,residual,delta_g,x_rel,feas_rel,cert_1,cert_2,cert_3,inner_iters_total"
    );
    assert_eq!(lines.count(), 5);
}

#[test]
fn converged_run_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let res = solve_into(
        &out,
        &["--experiment", "lasso", "--n", "30", "--d", "20", "--rho", "50", "--c", "50", "--stop-eps", "1e-8"],
    );
    assert_eq!(res.status.code(), Some(0), "{res:?}");
    let summary: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(summary["status"], "converged");
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"experiment": "exchange", "n": 10, "p": 8, "blocks": 2, "max_iters": 50}"#).unwrap();
    let out = dir.path().join("run");
    let res = augdec(&["solve", "--config", cfg.to_str().unwrap(), "--max-iters", "3", "--out", out.to_str().unwrap()]);
    assert!(matches!(res.status.code(), Some(0 | 2)), "{res:?}");
    let csv = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(csv.lines().count() <= 4);
}

#[test]
fn errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    for args in [
        vec!["--experiment", "nope"],
        vec!["--experiment", "lasso", "--solver", "sgd"],
        vec!["--experiment", "exchange", "--solver", "admm2"],
        vec!["--experiment", "lasso", "--rho", "-1"],
        vec!["--experiment", "logreg", "--libsvm", "/nonexistent/file.svm"],
        vec![],
    ] {
        let res = solve_into(&out, &args);
        assert_eq!(res.status.code(), Some(1), "{args:?}: {res:?}");
    }
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"experiment": "lasso", "typo": 1}"#).unwrap();
    assert_eq!(augdec(&["solve", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(augdec(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(augdec(&["--help"]).status.code(), Some(0));
}
