use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str], config: &str) -> Output {
    let cfg = dir.join("case.cfg");
    fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    Command::new(env!("CARGO_BIN_EXE_fredstab"))
        .args(args)
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap()
}

fn out_file(dir: &Path, name: &str) -> PathBuf {
    dir.join("out").join(name)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const COUNTEREXAMPLE: &str = "L=1\nn=256\nN=8\nkernel.type=counterexample\nkernel.a0=1\nkernel.N=2\n";

#[test]
fn fattorini_on_counterexample() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["fattorini"], COUNTEREXAMPLE);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "fails_at {-2 -1 1 2}");
    let status = fs::read_to_string(out_file(dir.path(), "fattorini_status.csv")).unwrap();
    let mut lines = status.lines();
    assert_eq!(lines.next(), Some("status,k_max"));
    assert!(lines.next().unwrap().starts_with("fails_at {-2 -1 1 2},"));
    let values = fs::read_to_string(out_file(dir.path(), "fattorini.csv")).unwrap();
    assert!(values.starts_with("k,re_value,im_value,abs_value\n"));
}

#[test]
fn synthesize_refuses_counterexample() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["synthesize"], COUNTEREXAMPLE);
    assert_eq!(code(&o), 2);
    assert!(!out_file(dir.path(), "kstar.csv").exists());
}

#[test]
fn closed_loop_without_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["closed-loop"], "L=1\nn=32\nN=4\nkernel.type=zero\n");
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(out_file(dir.path(), "metric.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("n,N,metric,sigma_min,pde_residual"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..3], ["32", "4", "0"]);
    assert_eq!(row[3], "1");
    for name in ["feedback.csv", "feedback_diagnostics.csv", "trajectory.csv", "kstar.csv", "resolved-config"] {
        assert!(out_file(dir.path(), name).exists(), "{name}");
    }
}

#[test]
fn degenerate_spectrum_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    // conj(c) = 2iπ puts λ_0 on λ_1
    let cfg = format!("L=1\nn=64\nN=4\nkernel.type=constant\nkernel.c=0,{}\n", -2.0 * std::f64::consts::PI);
    let o = run(dir.path(), &["spectrum"], &cfg);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn singular_transform_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["closed-loop"], "L=1\nn=32\nN=4\nkernel.type=constant\nkernel.c=0.5\ntol.invert=10\n");
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["simulate"], "L=1\nbogus=3\n")), 1);
    assert_eq!(code(&run(dir.path(), &["simulate"], "L=1\nn=abc\n")), 1);
    assert_eq!(code(&run(dir.path(), &["simulate"], "kernel.type=tabulated\n")), 1);
    assert_eq!(code(&run(dir.path(), &["no-such-command"], "L=1\n")), 1);
    let missing = Command::new(env!("CARGO_BIN_EXE_fredstab"))
        .args(["simulate", "/nonexistent/case.cfg"])
        .output()
        .unwrap();
    assert_eq!(code(&missing), 1);
}

#[test]
fn outputs_are_deterministic() {
    let cfg = "L=1\nn=64\nN=8\nkernel.type=constant\nkernel.c=0.5\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        assert_eq!(code(&run(dir.path(), &["closed-loop"], cfg)), 0);
    }
    let names = ["metric.csv", "feedback.csv", "kstar.csv", "kstar_boundary.csv", "trajectory.csv"];
    for name in names {
        let x = fs::read(out_file(a.path(), name)).unwrap();
        let y = fs::read(out_file(b.path(), name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name}");
        assert!(!x.contains(&b'\r'));
    }
    let settings = |d: &Path| {
        let text = fs::read_to_string(out_file(d, "resolved-config")).unwrap();
        text.lines().filter(|l| !l.starts_with("out.dir=")).map(String::from).collect::<Vec<_>>()
    };
    assert_eq!(settings(a.path()), settings(b.path()));
}

#[test]
fn resolved_config_lists_defaults() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["spectrum"], "L=2\nn=32\n")), 0);
    let text = fs::read_to_string(out_file(dir.path(), "resolved-config")).unwrap();
    let keys: Vec<&str> = text.lines().map(|l| l.split_once('=').unwrap().0).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    for want in ["L=2", "n=32", "T=4", "tol.fattorini=0.001", "tol.invert=auto", "kernel.type=zero"] {
        assert!(text.lines().any(|l| l == want), "{want} missing in\n{text}");
    }
    // the echoed file is itself a valid config giving the same file
    let again = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(again.path(), &["spectrum"], &text)), 0);
    let echoed = fs::read_to_string(out_file(again.path(), "resolved-config")).unwrap();
    let strip = |s: &str| s.lines().filter(|l| !l.starts_with("out.dir=")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&echoed), strip(&text));
}

#[test]
fn simulate_both_modes() {
    for mode in ["dirichlet", "periodic"] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = format!("L=1\nn=16\nT=1\nsim.mode={mode}\nkernel.type=constant\nkernel.c=1\nu0.type=sine\n");
        let o = run(dir.path(), &["simulate"], &cfg);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let traj = fs::read_to_string(out_file(dir.path(), "trajectory.csv")).unwrap();
        assert!(traj.starts_with("t,x,re,im\n"));
        assert_eq!(traj.lines().count(), 1 + 17 * 17);
        let control = fs::read_to_string(out_file(dir.path(), "control.csv")).unwrap();
        assert_eq!(control.lines().count(), 1 + 17);
    }
}

#[test]
fn convergence_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "L=1\nn=32\nN=4\nkernel.type=constant\nkernel.c=0.5\nconvergence.levels=3\n";
    let o = run(dir.path(), &["convergence"], cfg);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out_file(dir.path(), "convergence.csv")).unwrap();
    let rows: Vec<Vec<String>> = table.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 3);
    let metrics: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["32", "64", "128"]);
    assert!(metrics[2] < metrics[0], "{metrics:?}");
}
