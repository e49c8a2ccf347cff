use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bregman-vi"))
}

fn problem_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../problems")
        .join(format!("{name}.json"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn solve_bundled_instance_writes_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let file = problem_path("affine-ball-2");
    let o = run(&[
        "solve",
        "--problem",
        file.to_str().unwrap(),
        "--epsilon",
        "1e-3",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = read_json(&dir.path().join("summary.json"));
    let n = summary["n"].as_u64().unwrap() as usize;
    let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "k,i_k,L_next,S_k,V_to_xstar,minty_gap_sampled"
    );
    assert_eq!(lines.count(), n);
    assert_eq!(summary["output"], "averaged_w");
    for c in summary["certificates"].as_array().unwrap() {
        assert_eq!(c["holds"], true, "{c}");
    }
}

#[test]
fn missing_epsilon_is_an_input_error() {
    let o = run(&["solve", "--problem", "affine-ball-2"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--epsilon"));
}

#[test]
fn iteration_cap_exits_two_and_still_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "solve",
        "--problem",
        "affine-ball-50",
        "--epsilon",
        "1e-4",
        "--max-outer-iters",
        "1",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn restart_certificate_holds_and_stage_count_is_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "restart",
        "--problem",
        "affine-ball-10",
        "--epsilon",
        "1e-4",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = read_json(&dir.path().join("restart.json"));
    assert_eq!(r["certificate"]["holds"], true);
    let r0_sq = r["r0_sq"].as_f64().unwrap();
    let bound = (2.0 * r0_sq / 1e-4).log2().ceil() as u64 + 1;
    assert!(r["stage_count"].as_u64().unwrap() <= bound);
    let stages = r["stages"].as_array().unwrap();
    assert_eq!(stages.len() as u64, r["stage_count"].as_u64().unwrap());
    assert!(stages
        .iter()
        .all(|s| s["radius_sq"].as_f64().unwrap() > 0.0));
    let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(csv.starts_with("stage,k,i_k,L_next,S_k,V_to_xstar,minty_gap_sampled\n"));
}

#[test]
fn explicit_radius_rule_with_large_delta_clamps_and_warns() {
    let dir = tempfile::tempdir().unwrap();
    // mu = 1.5 and R0^2 = 1/2 for affine-ball-2, so delta = mu * R0^2 = 0.75
    let o = run(&[
        "restart",
        "--problem",
        "affine-ball-2",
        "--epsilon",
        "1e-3",
        "--delta",
        "0.75",
        "--radius-rule",
        "paper-explicit",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
    let r = read_json(&dir.path().join("restart.json"));
    assert!(!r["warnings"].as_array().unwrap().is_empty());
    assert!(r["stages"]
        .as_array()
        .unwrap()
        .iter()
        .any(|s| s["clamped"] == true));
}

#[test]
fn check_oracle_passes_on_bundled_instances() {
    for name in ["affine-box-2", "matching-pennies", "saddle-3x4"] {
        let o = run(&["check-oracle", "--problem", name]);
        assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
        let reports: Value = serde_json::from_slice(&o.stdout).unwrap();
        for r in reports.as_array().unwrap() {
            assert!(r["max_violation"].as_f64().unwrap() <= 1e-9, "{name}: {r}");
        }
    }
}

#[test]
fn understated_smoothness_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut file: Value =
        serde_json::from_slice(&std::fs::read(problem_path("affine-ball-2")).unwrap()).unwrap();
    let o = run(&[
        "check-oracle",
        "--problem",
        "affine-ball-2",
        "--samples",
        "10",
    ]);
    let reports: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 3);
    // L = ||A||_2 for this matrix is about 2.06; declare half of it
    file["declared_l"] = Value::from(1.03);
    let path = dir.path().join("weak.json");
    std::fs::write(&path, serde_json::to_vec(&file).unwrap()).unwrap();
    let o = run(&["check-oracle", "--problem", path.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let reports: Value = serde_json::from_slice(&o.stdout).unwrap();
    let smooth = reports
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["property"] == "rel_smoothness")
        .unwrap();
    assert_eq!(smooth["holds"], false);
}

#[test]
fn zero_samples_is_an_input_error() {
    let o = run(&[
        "check-oracle",
        "--problem",
        "affine-ball-2",
        "--samples",
        "0",
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("samples"));
}

#[test]
fn malformed_problem_files_report_location() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.json");
    std::fs::write(
        &broken,
        "{\n  \"family\": \"affine_vi\",\n  \"matrix\": [[1.0,]\n}\n",
    )
    .unwrap();
    let o = run(&[
        "solve",
        "--problem",
        broken.to_str().unwrap(),
        "--epsilon",
        "1e-2",
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let unknown = dir.path().join("unknown.json");
    std::fs::write(
        &unknown,
        r#"{"family": "affine_vi", "matrix": [[1.0]], "bb": [0.0]}"#,
    )
    .unwrap();
    let o = run(&[
        "solve",
        "--problem",
        unknown.to_str().unwrap(),
        "--epsilon",
        "1e-2",
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bb"), "{}", stderr(&o));

    let o = run(&["solve", "--problem", "no-such-problem", "--epsilon", "1e-2"]);
    assert_eq!(code(&o), 1);
}

fn artifacts(dir: &Path, names: &[&str]) -> Vec<Vec<u8>> {
    names
        .iter()
        .map(|n| std::fs::read(dir.join(n)).unwrap())
        .collect()
}

#[test]
fn identical_runs_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = dir.path().to_str().unwrap();
        let common = [
            "--problem",
            "saddle-3x4",
            "--epsilon",
            "1e-3",
            "--delta",
            "1e-3",
            "--seed",
            "4",
        ];
        let o = bin()
            .arg("solve")
            .args(common)
            .args(["--out-dir", out])
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let o = bin()
            .arg("restart")
            .args(common)
            .args(["--out-dir", &format!("{out}/restart")])
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let solve = ["trace.csv", "trace.json", "summary.json"];
    assert_eq!(artifacts(a.path(), &solve), artifacts(b.path(), &solve));
    let restart = ["restart/trace.csv", "restart/restart.json"];
    assert_eq!(artifacts(a.path(), &restart), artifacts(b.path(), &restart));
}

#[test]
fn certify_replays_saved_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&[
        "solve",
        "--problem",
        "affine-box-2",
        "--epsilon",
        "1e-3",
        "--out-dir",
        out,
    ]);
    assert_eq!(code(&o), 0);
    let trace = dir.path().join("trace.json");
    let o = run(&[
        "certify",
        "--problem",
        "affine-box-2",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("lemma1_stepwise") && table.contains("theorem1_rate"));
    assert!(!table.contains("FAIL"));

    let mut tampered = read_json(&trace);
    let last = tampered["records"].as_array().unwrap().len() - 1;
    tampered["records"][last]["w"] = serde_json::json!([-1.0, 1.0]);
    tampered["last_z"] = serde_json::json!([-1.0, 1.0]);
    let bad = dir.path().join("tampered.json");
    std::fs::write(&bad, serde_json::to_vec(&tampered).unwrap()).unwrap();
    let o = run(&[
        "certify",
        "--problem",
        "affine-box-2",
        "--trace",
        bad.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));

    let o = run(&[
        "restart",
        "--problem",
        "matching-pennies",
        "--epsilon",
        "1e-4",
        "--out-dir",
        out,
    ]);
    assert_eq!(code(&o), 0);
    let restart = dir.path().join("restart.json");
    let o = run(&[
        "certify",
        "--problem",
        "matching-pennies",
        "--trace",
        restart.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("theorem2_accuracy"));
}

#[test]
fn bench_respects_thread_cap() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = bin()
        .env("BREGMAN_VI_THREADS", "1")
        .args([
            "bench",
            "--problem",
            "affine-ball-2",
            "--problem",
            "matching-pennies",
            "--out-dir",
            out,
        ])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
    assert!(csv.starts_with(
        "problem,method,epsilon,delta,iterations,oracle_calls,stages,v_to_xstar,converged,seconds"
    ));

    let o = bin()
        .env("BREGMAN_VI_THREADS", "zero")
        .args(["bench", "--problem", "affine-ball-2", "--out-dir", out])
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("BREGMAN_VI_THREADS"));
}
