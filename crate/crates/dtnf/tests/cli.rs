use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dtnf"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "dtnf-cli-{tag}-{}-{}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap()
            .as_nanos()
    ));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn policy_map_prints_boundary_summary() {
    let dir = temp_dir("policy-map");
    let out = run_ok(bin().args(["policy-map", "--no-timestamp", "--out"]).arg(&dir));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("m=5 → last-copy n=24"), "stdout: {stdout}");
    assert!(stdout.contains("m=11 → never copy"));
    let csv = fs::read_to_string(dir.join("policy_map.csv")).unwrap();
    let mut lines = csv.lines().skip_while(|l| l.starts_with('#'));
    assert_eq!(lines.next(), Some("m,n,action"));
    assert!(csv.contains("5,24,copy"));
    assert!(csv.contains("5,25,no-copy"));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn reruns_are_byte_identical_without_timestamp() {
    let config = temp_dir("config").join("scaled.json");
    fs::write(
        &config,
        r#"{"X": 0.2, "Y0": 0.2, "alpha": "4/5", "Lambda": 0.05, "Gamma": 50.0, "K": 100, "seed": 9}"#,
    )
    .unwrap();
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let dir = temp_dir(tag);
        run_ok(
            bin()
                .args(["converge", "--k", "50,100", "--reps", "20", "--no-timestamp", "--config"])
                .arg(&config)
                .arg("--out")
                .arg(&dir),
        );
        outputs.push(fs::read(dir.join("convergence.csv")).unwrap());
        fs::remove_dir_all(&dir).ok();
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn timestamp_header_present_by_default() {
    let config = temp_dir("config-ts").join("scaled.json");
    fs::write(
        &config,
        r#"{"X": 0.2, "Y0": 0.2, "alpha": "4/5", "Lambda": 0.05, "Gamma": 50.0}"#,
    )
    .unwrap();
    let dir = temp_dir("fluid-ts");
    run_ok(bin().args(["fluid-run", "--config"]).arg(&config).arg("--out").arg(&dir));
    let csv = fs::read_to_string(dir.join("fluid_trajectory.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("# generated_unix=")));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn json_format_emits_parseable_records() {
    let dir = temp_dir("json");
    run_ok(
        bin()
            .args(["oracle-check", "--format", "json", "--no-timestamp", "--out"])
            .arg(&dir),
    );
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("cost_table.json")).unwrap()).unwrap();
    let rows = doc["rows"].as_array().unwrap();
    assert!(!rows.is_empty());
    assert!(rows[0]["J_d"].is_number());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("oracle_check.json")).unwrap()).unwrap();
    assert_eq!(summary["summary"]["policy_mismatches"], 0);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn fluid_run_reports_stopping_times() {
    let config = temp_dir("config-fluid").join("scaled.json");
    fs::write(
        &config,
        r#"{"X": 0.2, "Y0": 0.2, "alpha": "4/5", "Lambda": 0.05, "Gamma": 50.0}"#,
    )
    .unwrap();
    let dir = temp_dir("fluid");
    run_ok(
        bin()
            .args(["fluid-run", "--no-timestamp", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&dir),
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("fluid_summary.json")).unwrap()).unwrap();
    let tau_star = summary["summary"]["tau_star"].as_f64().unwrap();
    let tau = summary["summary"]["tau"].as_f64().unwrap();
    assert!((tau_star - 34.41).abs() < 0.05);
    assert!((tau - 65.35).abs() < 0.05);
    let csv = fs::read_to_string(dir.join("fluid_trajectory.csv")).unwrap();
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "t,x,y,phi,mode");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn missing_config_fails_with_machine_readable_error() {
    let out = bin().args(["fluid-run"]).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    let record: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert!(record["error"]["message"].is_string());

    let out = bin()
        .args(["fluid-run", "--config", "/nonexistent/params.json"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn thread_cap_env_var_is_honored() {
    let dir = temp_dir("threads");
    run_ok(
        bin()
            .env("DTNF_THREADS", "1")
            .args(["oracle-check", "--no-timestamp", "--out"])
            .arg(&dir),
    );
    let out = bin()
        .env("DTNF_THREADS", "not-a-number")
        .args(["oracle-check", "--no-timestamp", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(!out.status.success());
    fs::remove_dir_all(&dir).ok();
}
