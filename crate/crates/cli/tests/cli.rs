use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn riskplan(args: &[&str], config_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_riskplan"));
    cmd.args(args).env_remove("RISKPLAN_CONFIG_DIR");
    if let Some(dir) = config_dir {
        cmd.env("RISKPLAN_CONFIG_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn single_worker_benchmarks_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut records = Vec::new();
    for pass in ["a", "b"] {
        let out_dir = dir.path().join(pass);
        let stdout = ok(&riskplan(
            &[
                "benchmark",
                "--scenario",
                "static_gaussian",
                "--risk",
                "mmd,saa",
                "--seeds",
                "0..2",
                "--workers",
                "1",
                "--out",
                out_dir.to_str().unwrap(),
            ],
            None,
        ));
        assert!(stdout.contains("static_gaussian"), "{stdout}");
        for file in ["aggregates.json", "timings.csv"] {
            assert!(out_dir.join(file).is_file(), "{file} missing");
        }
        records.push(fs::read(out_dir.join("records.csv")).unwrap());
    }
    assert_eq!(records[0], records[1]);
    // Header plus one line per (risk, seed).
    assert_eq!(String::from_utf8_lossy(&records[0]).lines().count(), 5);
}

#[test]
fn scenario_validate_reports_bad_files() {
    let good = scenarios_dir().join("static_bimodal.json");
    let stdout = ok(&riskplan(
        &["scenario", "validate", good.to_str().unwrap()],
        None,
    ));
    assert!(stdout.contains("ok (static_bimodal"), "{stdout}");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"name": "x"}"#).unwrap();
    let out = riskplan(
        &[
            "scenario",
            "validate",
            good.to_str().unwrap(),
            bad.to_str().unwrap(),
        ],
        None,
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("1 invalid scenario file"));
}

#[test]
fn config_dir_supplies_scenarios_and_settings() {
    let dir = tempfile::tempdir().unwrap();
    let shown = ok(&riskplan(&["scenario", "show", "static_gaussian"], None));
    fs::write(
        dir.path().join("mine.json"),
        shown.replacen("\"static_gaussian\"", "\"mine\"", 1),
    )
    .unwrap();

    // Resolved relative to the config directory, with or without extension.
    let stdout = ok(&riskplan(&["scenario", "show", "mine"], Some(dir.path())));
    assert!(stdout.contains("\"mine\""), "{stdout}");
    assert!(!riskplan(&["scenario", "show", "mine"], None)
        .status
        .success());

    // A settings.json in the directory is picked up and validated.
    fs::write(
        dir.path().join("settings.json"),
        r#"{"cem": {"n_elite": 0}}"#,
    )
    .unwrap();
    let out = riskplan(&["scenario", "list"], Some(dir.path()));
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("settings.json"));
}

#[test]
fn plan_writes_a_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.json");
    let stdout = ok(&riskplan(
        &[
            "plan",
            "--scenario",
            "static_gaussian",
            "--risk",
            "cvar",
            "--out",
            path.to_str().unwrap(),
        ],
        None,
    ));
    assert!(stdout.contains("collision rate"), "{stdout}");
    let dump: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert!(dump.is_object());
}

#[test]
fn bad_seed_ranges_are_rejected() {
    let out = riskplan(
        &[
            "benchmark",
            "--scenario",
            "static_gaussian",
            "--seeds",
            "5..3",
            "--out",
            "unused",
        ],
        None,
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty seed range"));
}
