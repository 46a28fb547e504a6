use std::process::Command;

fn run(args: &[&str], cwd: &std::path::Path) -> (i32, serde_json::Value) {
    let out = Command::new(env!("CARGO_BIN_EXE_aeromap"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    let json = serde_json::from_str(stdout.trim()).unwrap_or(serde_json::Value::Null);
    (out.status.code().unwrap(), json)
}

#[test]
fn usage_errors_exit_two_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let (code, json) = run(&["frobnicate"], dir.path());
    assert_eq!(code, 2);
    assert_eq!(json["error"]["kind"], "usage");
}

#[test]
fn bad_overrides_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (code, json) = run(&["--window-size", "4", "synth", "--out", "x"], dir.path());
    assert_eq!(code, 1);
    assert_eq!(json["error"]["kind"], "config");
    let (code, json) = run(&["--model", "svr", "synth", "--out", "x"], dir.path());
    assert_eq!(code, 1);
    assert_eq!(json["error"]["kind"], "config");
    assert!(!dir.path().join("x").exists());
}

#[test]
fn missing_inputs_report_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (code, json) = run(&["train", "--samples", "nope.csv", "--out", "m"], dir.path());
    assert_eq!(code, 1);
    assert!(json["error"]["message"].as_str().unwrap().contains("nope.csv"));
}

#[test]
fn synth_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"synth_days": 3, "synth_stations": 5}"#,
    )
    .unwrap();
    let (code, _) = run(&["--config", "c.json", "synth", "--out", "d"], dir.path());
    assert_eq!(code, 0);
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("d/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "synth");
    assert_eq!(m["seed"], 42);
    assert!(m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .any(|o| o["path"] == "stations.csv"));
}
