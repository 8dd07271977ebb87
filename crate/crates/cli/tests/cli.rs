use std::fs;
use std::process::{Command, Output};

fn stosqp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stosqp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn list_problems_names_the_catalog() {
    let o = stosqp(&["list-problems"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("name,d,m,known_solution\n"));
    for name in ["eq_quadratic", "eq_logistic", "hs7", "hs48", "byrdsphr"] {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let o = stosqp(&[
        "run",
        "--problem",
        "hs7",
        "--iters",
        "300",
        "--stride",
        "30",
        "--sigma2",
        "1e-4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("t,kkt_residual,iter_error,hess_error,alpha,beta,delta_mag,theory_rate")
    );
    assert_eq!(lines.count(), 10);
    let summary = fs::read_to_string(dir.path().join("trace.json")).unwrap();
    assert!(summary.contains("\"config_hash\""));
    assert!(summary.contains("\"command\": \"run\""));
}

#[test]
fn theory_rate_column_matches_formula() {
    let o = stosqp(&[
        "run", "--c1", "2", "--c2", "0.5", "--iters", "100", "--stride", "100",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let row = text.lines().nth(1).unwrap();
    let rate: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!((rate - 0.9597).abs() < 1e-4, "{rate}");
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "# test\nproblem = hs48\ntau = 7\nsigma2 = 0.5\n").unwrap();
    let o = stosqp(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--tau",
        "9",
        "--print-config",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("problem = hs48\n"));
    assert!(text.contains("tau = 9\n"));
    assert!(text.contains("sigma2 = 0.5\n"));

    let o = stosqp(&["run", "--preset", "paper", "--print-config"]);
    assert!(stdout(&o).contains("iters = 100000\n"));
}

#[test]
fn errors_are_reported() {
    let o = stosqp(&["run", "--problem", "hs99"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("hs99") && err.contains("hs7"), "{err}");

    let o = stosqp(&["coverage", "--runs", "20"]);
    assert!(!o.status.success());

    let o = stosqp(&[
        "run",
        "--out",
        "/nonexistent-dir/trace.csv",
        "--iters",
        "10",
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent-dir/trace.csv"));
}

#[test]
fn sketch_audit_on_identity_free_source() {
    let o = stosqp(&[
        "sketch-audit",
        "--sketch",
        "exact",
        "--taus",
        "1,3",
        "--mc-samples",
        "10",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("tau,rho_pow_tau,mean_sq_ratio,mean_ratio\n"));
    assert!(text.contains("\n1,0,"));
}

#[test]
fn reruns_are_byte_identical() {
    let args = [
        "complexity",
        "--runs",
        "3",
        "--iters",
        "500",
        "--epsilons",
        "0.2,0.05",
    ];
    let a = stosqp(&args);
    let b = stosqp(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stderr, b.stderr);
}
