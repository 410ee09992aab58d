mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::example_path;
use csdswitch::io::DesignFile;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csdswitch"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synthesize(dir: &TempDir, config: &Path) -> (std::path::PathBuf, Output) {
    let design = dir.path().join("design.json");
    let out = run(&["synthesize", "--config", path(config), "--out", path(&design)]);
    (design, out)
}

fn write(dir: &TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn synthesize_reports_decoupled_design() {
    let dir = TempDir::new().unwrap();
    let (design, out) = synthesize(&dir, &example_path("decoupled.json"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("[0.166667, 0.000000]"), "{text}");
    assert!(text.contains("[0.000000, 0.250000]"), "{text}");
    assert!(text.contains("eig(Abar)"));
    assert!(
        text.contains("region 1: -2.333333 x1^2 +0.000000 x1x2 +1.000000 x2^2 < 0"),
        "{text}"
    );
    assert!(design.exists());
}

#[test]
fn synthesize_reports_coupled_design() {
    let dir = TempDir::new().unwrap();
    let (_, out) = synthesize(&dir, &example_path("coupled.json"));
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("[6.500000, 1.750000]"), "{text}");
    assert!(text.contains("[1.750000, 0.750000]"), "{text}");
    assert!(
        text.contains("region 1: -15.000000 x1^2 +8.000000 x1x2 +5.000000 x2^2 < 0"),
        "{text}"
    );
}

#[test]
fn full_budget_gives_single_mode() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "full.json",
        r#"{"system": {"A": [[1, 0], [0, 2]], "B": [[1, 0], [0, 1]]}, "sparsity": 2, "K": [[4, 0], [0, 4]]}"#,
    );
    let (design, out) = synthesize(&dir, &cfg);
    assert!(out.status.success());
    assert!(stdout(&out).contains("modes: 1"));
    let d = DesignFile::load(&design).unwrap();
    assert_eq!(d.modes.len(), 1);
    assert_eq!(d.modes[0], d.system.a() - d.system.b() * &d.k);
}

#[test]
fn simulate_prints_verdict_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    for name in ["decoupled.json", "coupled.json"] {
        let cfg = example_path(name);
        let (design, _) = synthesize(&dir, &cfg);
        let csv_a = dir.path().join("a.csv");
        let csv_b = dir.path().join("b.csv");
        let out = run(&[
            "simulate",
            "--design",
            path(&design),
            "--config",
            path(&cfg),
            "--out",
            path(&csv_a),
        ]);
        assert!(out.status.success());
        let verdict = stdout(&out);
        assert!(verdict.starts_with("converged=true final_norm="), "{verdict}");
        assert!(verdict.trim_end().ends_with("lyapunov_monotone=true"), "{verdict}");
        run(&[
            "simulate",
            "--design",
            path(&design),
            "--config",
            path(&cfg),
            "--out",
            path(&csv_b),
        ]);
        let a = std::fs::read(&csv_a).unwrap();
        assert_eq!(a, std::fs::read(&csv_b).unwrap());
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("t,x1,x2,mode,V\n"));
        assert_eq!(text.lines().count(), 10_002);
    }
}

#[test]
fn zero_initial_state_stays_put() {
    let dir = TempDir::new().unwrap();
    let (design, _) = synthesize(&dir, &example_path("decoupled.json"));
    let cfg = write(
        &dir,
        "zero.json",
        r#"{"system": {"A": [[1, 0], [0, 2]], "B": [[1, 0], [0, 1]]}, "sparsity": 1, "sim": {"x0": [0, 0], "horizon": 1}}"#,
    );
    let csv = dir.path().join("zero.csv");
    let out = run(&[
        "simulate",
        "--design",
        path(&design),
        "--config",
        path(&cfg),
        "--out",
        path(&csv),
    ]);
    assert!(out.status.success());
    let verdict = stdout(&out);
    assert!(verdict.contains("final_norm=0 switches=0"), "{verdict}");
}

#[test]
fn check_exit_code_reflects_coverage() {
    let dir = TempDir::new().unwrap();
    let (design, _) = synthesize(&dir, &example_path("coupled.json"));
    let out = run(&["check", "--design", path(&design), "--samples", "20000"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("pass=true"));

    let missing = run(&["check", "--design", path(&dir.path().join("none.json"))]);
    assert_ne!(missing.status.code(), Some(0));
}

#[test]
fn csd_demo_reports_rates_and_rejects_bad_dimensions() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("trials.csv");
    let out = run(&[
        "csd-demo",
        "--n",
        "50",
        "--m",
        "20",
        "--k",
        "3",
        "--trials",
        "100",
        "--out",
        path(&csv),
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rate: f64 = text.trim().rsplit('=').next().unwrap().parse().unwrap();
    assert!(rate >= 0.95, "{text}");
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert!(rows.starts_with("seed,trial,residual,success\n"));
    assert_eq!(rows.lines().count(), 101);

    let ortho = run(&[
        "csd-demo",
        "--n",
        "8",
        "--m",
        "8",
        "--k",
        "3",
        "--trials",
        "20",
        "--orthonormal",
        "--out",
        path(&csv),
    ]);
    assert!(stdout(&ortho).contains("success_rate=1"), "{}", stdout(&ortho));

    let bad = run(&["csd-demo", "--n", "10", "--m", "3", "--k", "4", "--out", path(&csv)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let broken = write(
        &dir,
        "broken.json",
        "{\n  \"system\": {\"A\": [[1]], \"B\": [[1]]},\n  \"sparsity\": \"one\"\n}",
    );
    let out = run(&[
        "synthesize",
        "--config",
        path(&broken),
        "--out",
        path(&dir.path().join("d.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let range = write(
        &dir,
        "range.json",
        r#"{"system": {"A": [[1]], "B": [[1]]}, "sparsity": 2}"#,
    );
    let out = run(&[
        "synthesize",
        "--config",
        path(&range),
        "--out",
        path(&dir.path().join("d.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synthesis_failure_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "unstable.json",
        r#"{"system": {"A": [[1, 0], [0, 2]], "B": [[1, 0], [0, 1]]}, "sparsity": 1, "K": [[0.1, 0], [0, 0.1]]}"#,
    );
    let out = run(&[
        "synthesize",
        "--config",
        path(&cfg),
        "--out",
        path(&dir.path().join("d.json")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn written_design_reloads_with_invariants() {
    let dir = TempDir::new().unwrap();
    for name in common::EXPERIMENTS {
        let (design, out) = synthesize(&dir, &example_path(name));
        assert!(out.status.success());
        let loaded = DesignFile::load(&design).unwrap();
        assert_eq!(loaded, common::experiment(name).synthesize().unwrap());
    }
}

#[test]
fn portrait_emits_all_trajectories() {
    let dir = TempDir::new().unwrap();
    let cfg = example_path("coupled.json");
    let (design, _) = synthesize(&dir, &cfg);
    let csv = dir.path().join("portrait.csv");
    let out = run(&[
        "portrait",
        "--design",
        path(&design),
        "--config",
        path(&cfg),
        "--points",
        "4",
        "--out",
        path(&csv),
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("trajectories=4 converged=4"), "{}", stdout(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("traj,t,x1,x2,mode,V\n"));
    assert_eq!(text.lines().count(), 1 + 4 * 10_001);
}
