//! End-to-end tests of the `ultrametric` binary and the library runner:
//! catalogue output, schema output, exit codes, config validation rules,
//! table potentials, and byte-level rerun determinism.

use std::fs;
use std::path::Path;
use std::process::Command;

use ultrametric_cli::{run_config, validate, ExperimentConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ultrametric"))
}

fn parse(json: &str) -> ExperimentConfig {
    serde_json::from_str(json).expect("test config parses")
}

fn write_config(dir: &Path, name: &str, json: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, json).expect("write config");
    path
}

#[test]
fn list_is_alphabetical_and_complete() {
    let out = bin().arg("list").output().expect("run list");
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).expect("utf8");
    let names: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with(' ') && !l.is_empty())
        .collect();
    let expected = [
        "bridge-sample",
        "centsov-check",
        "density-convergence",
        "density-table",
        "eigen-convergence",
        "fk-validate",
        "moment-check",
        "spectrum",
        "tightness",
        "trace-convergence",
        "walk-sample",
    ];
    assert_eq!(names, expected, "all 11 experiments, alphabetical");
    for name in expected {
        assert!(
            text.contains(&format!("{name}\n  required:")),
            "{name} lists required keys"
        );
    }
}

#[test]
fn list_json_is_machine_readable() {
    let out = bin().args(["list", "--json"]).output().expect("run list --json");
    assert!(out.status.success());
    let parsed: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("list --json is valid JSON");
    let entries = parsed.as_array().expect("array");
    assert_eq!(entries.len(), 11);
    let names: Vec<&str> = entries
        .iter()
        .map(|e| e["name"].as_str().expect("name"))
        .collect();
    let mut sorted = names.clone();
    sorted.sort_unstable();
    assert_eq!(names, sorted, "stable alphabetical ordering");
    for e in entries {
        assert!(e["files"].as_array().is_some_and(|f| !f.is_empty()));
    }
}

#[test]
fn schema_subcommand_prints_the_shipped_schema() {
    let out = bin().arg("schema").output().expect("run schema");
    assert!(out.status.success());
    let parsed: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("schema output is valid JSON");
    assert_eq!(parsed["title"], "ExperimentConfig");
    let required = parsed["required"].as_array().expect("required list");
    for key in ["experiment", "p", "n_range", "alpha", "t", "seed"] {
        assert!(required.iter().any(|r| r == key), "{key} required");
    }
    assert_eq!(parsed["additionalProperties"], false);
    assert_eq!(
        parsed["properties"]["experiment"]["enum"]
            .as_array()
            .expect("experiment enum")
            .len(),
        11
    );
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{ "experiment": "density-table", "p": 2, "n_range": [1], "alpha": [1.0],
             "t": [1.0], "seed": 1, "no_such_key": true }"#,
    );
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .output()
        .expect("run");
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).expect("utf8");
    assert!(err.contains("no_such_key"), "names the offending key: {err}");
}

#[test]
fn missing_required_key_exits_2() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = write_config(
        dir.path(),
        "missing.json",
        r#"{ "experiment": "density-table", "p": 2, "n_range": [1], "alpha": [1.0], "t": [1.0] }"#,
    );
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .output()
        .expect("run");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn capacity_guard_exits_3() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = write_config(
        dir.path(),
        "cap.json",
        r#"{ "experiment": "spectrum", "p": 3, "n_range": [4], "alpha": [1.0],
             "t": [1.0], "seed": 1 }"#,
    );
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .expect("run");
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn strict_failure_exits_1_nonstrict_exits_0() {
    // At level 4 the sup gap to the infinite-level density is ~2.5e-3, over
    // the default 1e-3 bar, so this config has a failing assertion.
    let json = r#"{ "experiment": "density-convergence", "p": 2, "n_range": [2, 3, 4],
                    "alpha": [1.0], "t": [1.0], "seed": 1 }"#;
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = write_config(dir.path(), "dc.json", json);
    let strict = bin()
        .args(["run", "--strict", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o1"))
        .output()
        .expect("run");
    assert_eq!(strict.status.code(), Some(1), "strict run exits 1");
    let stdout = String::from_utf8(strict.stdout).expect("utf8");
    assert!(stdout.contains("[FAIL] final_sup_alpha1_t1"));
    assert!(stdout.contains("[PASS] sup_nonincreasing_alpha1_t1"));
    let lax = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o2"))
        .output()
        .expect("run");
    assert_eq!(lax.status.code(), Some(0), "non-strict run exits 0");
    // summary.json records the failure either way
    let summary: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("o2/summary.json")).expect("summary"),
    )
    .expect("valid summary json");
    assert_eq!(summary["experiment"], "density-convergence");
    let assertions = summary["assertions"].as_array().expect("assertions");
    assert!(assertions
        .iter()
        .any(|a| a["name"] == "final_sup_alpha1_t1" && a["pass"] == false));
    assert!(summary["wall_time_s"].as_f64().expect("wall time") >= 0.0);
}

#[test]
fn rerun_and_thread_cap_reproduce_identical_bytes() {
    let json = r#"{ "experiment": "bridge-sample", "p": 2, "n_range": [2], "alpha": [1.0],
                    "t": [1.0], "seed": 99, "steps": 4, "paths": 400, "start": 3, "end": 9 }"#;
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = write_config(dir.path(), "bs.json", json);
    let run = |out: &str, threads: Option<&str>| {
        let mut cmd = bin();
        cmd.args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(out));
        match threads {
            Some(t) => cmd.env("ULTRAMETRIC_THREADS", t),
            None => cmd.env_remove("ULTRAMETRIC_THREADS"),
        };
        assert!(cmd.output().expect("run").status.success());
    };
    run("r1", None);
    run("r2", None);
    run("r3", Some("1"));
    run("r4", Some("4"));
    let reference = fs::read(dir.path().join("r1/paths.csv")).expect("csv");
    for other in ["r2", "r3", "r4"] {
        let bytes = fs::read(dir.path().join(other).join("paths.csv")).expect("csv");
        assert_eq!(reference, bytes, "{other} CSV bytes differ");
    }
}

#[test]
fn table_potential_reads_relative_to_config() {
    let dir = tempfile::tempdir().expect("tempdir");
    // v(x) = 2 everywhere on the 4-point grid: propagator = e^{-2t} * free.
    let mut table = String::from("u,v\n");
    for u in 0..4 {
        table.push_str(&format!("{u},2.0\n"));
    }
    fs::write(dir.path().join("pot.csv"), table).expect("write table");
    let cfg = write_config(
        dir.path(),
        "sp.json",
        r#"{ "experiment": "spectrum", "p": 2, "n_range": [1], "alpha": [1.0],
             "t": [1.0], "potential": { "kind": "table", "file": "pot.csv" }, "seed": 1 }"#,
    );
    let out = bin()
        .args(["run", "--strict", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .expect("run");
    assert_eq!(out.status.code(), Some(0));
    let spectrum = fs::read_to_string(dir.path().join("out/spectrum.csv")).expect("csv");
    // Constant shift by 2: the free ground eigenvalue 0 moves to 2.
    let first = spectrum.lines().nth(1).expect("one eigenvalue row");
    let lambda: f64 = first.rsplit(',').next().expect("lambda").parse().expect("float");
    assert!((lambda - 2.0).abs() < 1e-10, "shifted ground eigenvalue, got {lambda}");
}

#[test]
fn table_potential_across_levels_is_rejected() {
    let dir = tempfile::tempdir().expect("tempdir");
    fs::write(dir.path().join("pot.csv"), "u,v\n0,1\n1,1\n2,1\n3,1\n").expect("write");
    let cfg = parse(
        r#"{ "experiment": "trace-convergence", "p": 2, "n_range": [1, 2], "alpha": [1.0],
             "t": [1.0], "potential": { "kind": "table", "file": "pot.csv" }, "seed": 1 }"#,
    );
    let err = validate(cfg, dir.path()).expect_err("level sweep with table potential");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn cardinality_rules_are_enforced() {
    let cases = [
        // multi-alpha where one is required
        r#"{ "experiment": "walk-sample", "p": 2, "n_range": [2], "alpha": [1.0, 2.0],
             "t": [1.0], "seed": 1 }"#,
        // multi-t where one is required
        r#"{ "experiment": "fk-validate", "p": 2, "n_range": [2], "alpha": [1.0],
             "t": [1.0, 2.0], "seed": 1 }"#,
        // multi-level where one is required
        r#"{ "experiment": "moment-check", "p": 2, "n_range": [2, 3], "alpha": [2.0],
             "t": [1.0], "seed": 1 }"#,
        // eigen-convergence needs at least two levels
        r#"{ "experiment": "eigen-convergence", "p": 2, "n_range": [2], "alpha": [2.0],
             "t": [1.0], "seed": 1 }"#,
        // n_range must be strictly increasing
        r#"{ "experiment": "density-table", "p": 2, "n_range": [2, 2], "alpha": [1.0],
             "t": [1.0], "seed": 1 }"#,
        // unknown experiment name
        r#"{ "experiment": "no-such-thing", "p": 2, "n_range": [1], "alpha": [1.0],
             "t": [1.0], "seed": 1 }"#,
    ];
    for json in cases {
        let cfg = parse(json);
        let err = validate(cfg, Path::new(".")).expect_err(json);
        assert_eq!(err.exit_code(), 2, "{json}");
    }
}

#[test]
fn runner_reports_written_files() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = parse(
        r#"{ "experiment": "density-table", "p": 2, "n_range": [1, 2], "alpha": [1.0],
             "t": [0.5, 1.0], "seed": 1 }"#,
    );
    let outcome = run_config(cfg, dir.path(), Some(&dir.path().join("out"))).expect("run");
    assert!(outcome.all_passed());
    assert_eq!(outcome.csv_files.len(), 4, "one CSV per (n, t) cell");
    for path in &outcome.csv_files {
        assert!(path.exists());
        let text = fs::read_to_string(path).expect("csv");
        assert!(text.starts_with("u,norm,p_tn,p_t_limit,abs_diff,mass\n"));
    }
    assert!(outcome.summary_path.exists());
    // 2 levels x 2 times x 3 checks
    assert_eq!(outcome.summary.assertions.len(), 12);
}

#[test]
fn invalid_thread_env_is_a_config_error() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = write_config(
        dir.path(),
        "dt.json",
        r#"{ "experiment": "density-table", "p": 2, "n_range": [1], "alpha": [1.0],
             "t": [1.0], "seed": 1 }"#,
    );
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .env("ULTRAMETRIC_THREADS", "zero")
        .output()
        .expect("run");
    assert_eq!(out.status.code(), Some(2));
}
