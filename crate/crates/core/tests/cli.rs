use std::path::Path;
use std::process::{Command, Output};

fn gfra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gfra"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("run gfra")
}

fn ok(args: &[&str]) -> Output {
    let out = gfra(args);
    assert!(out.status.success(), "gfra {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_writes_one_trial() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    ok(&["generate", "--preset", "tiny-noiseless", "--out", out.to_str().unwrap()]);
    for f in ["dictionary.txt", "x_true.txt", "y.txt", "spec.toml"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn noiseless_solve_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let stdout = ok(&["solve", "--preset", "tiny-noiseless", "--solvers", "amp_bp", "--out", out.to_str().unwrap()]).stdout;
    assert!(String::from_utf8_lossy(&stdout).contains("f1 1.0000"));
    let m = json(&out.join("metrics.json"));
    assert_eq!(m["f1"], 1.0);
    assert_eq!(m["false_alarms"], 0);
    assert!(out.join("x_hat.txt").is_file());
}

#[test]
fn report_rebuilds_the_sweep_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w");
    ok(&[
        "sweep",
        "--preset",
        "tiny-noiseless",
        "--trials",
        "4",
        "--axis",
        "n_active",
        "--values",
        "2,3",
        "--out",
        out.to_str().unwrap(),
    ]);
    let rebuilt = dir.path().join("r.json");
    ok(&[
        "report",
        "--input",
        out.join("trials.csv").to_str().unwrap(),
        "--out",
        rebuilt.to_str().unwrap(),
    ]);
    assert_eq!(json(&rebuilt), json(&out.join("summary.json")));
    let rows = std::fs::read_to_string(out.join("trials.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 2 * 4);
}

#[test]
fn overrides_reach_the_saved_spec() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    ok(&[
        "generate",
        "--preset",
        "tiny-noiseless",
        "--set",
        "system.n_active=5",
        "--out",
        out.to_str().unwrap(),
    ]);
    let spec: toml::Value = toml::from_str(&std::fs::read_to_string(out.join("spec.toml")).unwrap()).unwrap();
    assert_eq!(spec["system"]["n_active"].as_integer(), Some(5));
}

#[test]
fn bad_input_fails_with_a_message() {
    let out = gfra(&["sweep", "--preset", "nope"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));

    let out = gfra(&["generate", "--preset", "tiny-noiseless", "--set", "system.no_such_field=1"]);
    assert!(!out.status.success());
}
