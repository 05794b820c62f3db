use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tclab"))
}

fn config(name: &str) -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", name]
        .iter()
        .collect()
}

fn run(args: &[&str]) -> (i32, String) {
    let out = bin().args(args).output().unwrap();
    let text =
        String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn check_on_c2_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = run(&[
        "check",
        "--config",
        path(&config("c2.json")),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code, 0, "{text}");
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("check_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["checks"].as_array().unwrap().len() > 10);
}

#[test]
fn missing_output_dir_is_created() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a").join("b");
    let (code, text) = run(&[
        "converge",
        "--config",
        path(&config("c2.json")),
        "--out",
        path(&out),
        "--n-max",
        "8",
    ]);
    assert_eq!(code, 0, "{text}");
    assert!(out.join("converge_summary.json").is_file());
    assert!(out.join("monotone_up_semigroup.csv").is_file());
}

#[test]
fn converge_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run_id in ["first", "second"] {
        let out = dir.path().join(run_id);
        let (code, text) = run(&[
            "converge",
            "--config",
            path(&config("c2.json")),
            "--out",
            path(&out),
            "--n-max",
            "16",
        ]);
        assert_eq!(code, 0, "{text}");
        let csv = std::fs::read(out.join("monotone_up_fdd.csv")).unwrap();
        let summary = std::fs::read_to_string(out.join("converge_summary.json")).unwrap();
        // The summary echoes the output directory; compare everything else.
        outputs.push((csv, summary.replace(path(&out), "OUT")));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn simulate_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for run_id in ["first", "second"] {
        let out = dir.path().join(run_id);
        let (code, text) = run(&[
            "simulate",
            "--config",
            path(&config("c2.json")),
            "--out",
            path(&out),
            "--workers",
            "3",
        ]);
        assert_eq!(code, 0, "{text}");
        csvs.push(std::fs::read(out.join("simulate.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn csv_header_matches_contract() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run(&[
        "converge",
        "--config",
        path(&config("c2.json")),
        "--out",
        path(dir.path()),
        "--n-max",
        "16",
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(dir.path().join("constant_potential.csv")).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("n,theorem,test_id,param,sup_error,hypothesis_ok")
    );
}

#[test]
fn invalid_configs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("not_json.json", "{ nope"),
        (
            "unknown_field.json",
            r#"{"backend": {"kind": "chain", "generator": [[-1]], "reference": [1]}, "colour": 1}"#,
        ),
        // Rows sum to zero: no killing, so the chain is conservative.
        (
            "conservative.json",
            r#"{"backend": {"kind": "chain", "generator": [[-1, 1], [1, -1]], "reference": [1, 1]}}"#,
        ),
        (
            "negative_mass.json",
            r#"{"backend": {"kind": "chain", "generator": [[-2, 1], [1, -2]], "reference": [1, 1]},
                "measures": {"bad": {"masses": [-1, 0]}}}"#,
        ),
    ];
    for (name, text) in cases {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        let (code, out) = run(&[
            "check",
            "--config",
            path(&p),
            "--out",
            path(&dir.path().join("out")),
        ]);
        assert_eq!(code, 2, "{name}: {out}");
    }
    let (code, _) = run(&["check", "--config", path(&dir.path().join("missing.json"))]);
    assert_eq!(code, 2);
}

#[test]
fn failing_experiment_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = run(&[
        "converge",
        "--config",
        path(&config("diffusion.json")),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code, 3, "{text}");
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("converge_summary.json")).unwrap(),
    )
    .unwrap();
    let failed: Vec<&str> = summary["experiments"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["passed"] == false)
        .map(|e| e["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["discretized_density_potential"]);
}

#[test]
fn nan_rows_for_unmet_hypothesis() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "backend": {"kind": "chain", "generator": [[-2, 1], [1, -2]], "reference": [1, 1]},
        "measures": {"mu": {"masses": [1, 0]}},
        "functions": {"e1": {"values": [1, 0]}},
        "experiments": [{
            "name": "needs_full_support", "theorem": "semigroup", "mode": "full_support",
            "sequence": {"kind": "monotone_up", "limit": "mu"}, "tests": ["e1"], "n_max": 4
        }]
    }"#;
    let p = dir.path().join("c.json");
    std::fs::write(&p, cfg).unwrap();
    let (code, _) = run(&["converge", "--config", path(&p), "--out", path(dir.path())]);
    assert_eq!(code, 3);
    let text = std::fs::read_to_string(dir.path().join("needs_full_support.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.ends_with(",NaN,false")), "{text}");
}
