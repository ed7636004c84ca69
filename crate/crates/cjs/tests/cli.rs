use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "phantom": {"kind": "shapes", "shapes": [
    {"kind": "rect", "u0": 0.2, "v0": 0.2, "u1": 0.6, "v1": 0.55, "value": [1.0, 0.0]}
  ]},
  "q": 12,
  "mode": "on_grid",
  "noise_levels": [0.0, 0.05],
  "solvers": ["tv", "omp"]
}"#;

fn cjs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cjs")).current_dir(dir).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.json");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn small_config(dir: &Path) -> String {
    config(dir, SMALL)
}

#[test]
fn invalid_configs_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), r#"{"q": 2}"#);
    assert_eq!(code(&cjs(dir.path(), &["--config", &cfg, "phantom"])), 2);
    let cfg = config(dir.path(), r#"{"noise_levels": [-1.0]}"#);
    assert_eq!(code(&cjs(dir.path(), &["--config", &cfg, "measure"])), 2);
    let cfg = config(dir.path(), "{ not json");
    assert_eq!(code(&cjs(dir.path(), &["--config", &cfg, "plan"])), 2);
    assert_eq!(code(&cjs(dir.path(), &["--config", "missing.json", "plan"])), 2);
}

#[test]
fn strict_mode_exits_with_3_when_a_solver_stalls() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(SMALL).unwrap();
    v["tv"] = serde_json::json!({"max_iter": 3});
    let cfg = config(dir.path(), &v.to_string());
    let out = dir.path().join("o");
    let args = ["--config", &cfg, "--out", out.to_str().unwrap(), "reconstruct-tv"];
    assert_eq!(code(&cjs(dir.path(), &args)), 0, "lenient mode reports but succeeds");
    let mut strict = args.to_vec();
    strict.insert(0, "--strict");
    assert_eq!(code(&cjs(dir.path(), &strict)), 3);
}

#[test]
fn pipeline_runs_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    let run = cjs(dir.path(), &["--config", &cfg, "--seed", "5", "--threads", "1", "--out", out.to_str().unwrap(), "reconstruct-omp"]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let metrics = std::fs::read_to_string(out.join("metrics.json")).unwrap();
    assert!(metrics.contains("\"seed\": 5"));
    let replay = cjs(dir.path(), &["replay", out.to_str().unwrap()]);
    assert_eq!(code(&replay), 0);
    assert!(String::from_utf8_lossy(&replay.stdout).contains("identical"));
}

#[test]
fn measured_files_can_be_reconstructed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    assert_eq!(code(&cjs(dir.path(), &["--config", &cfg, "--out", "m", "measure"])), 0);
    for f in ["plan.json", "truth_re.csv", "measurements_level_0.json", "data_level_0.05.csv"] {
        assert!(dir.path().join("m").join(f).exists(), "{f}");
    }
    for sub in ["reconstruct-tv", "reconstruct-omp", "reconstruct-l1"] {
        let out = cjs(dir.path(), &["--config", &cfg, "--out", "r", sub, "--data", "m/measurements_level_0.05.json"]);
        assert_eq!(code(&out), 0, "{sub}: {}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["tv_level_0.05.pgm", "l1_level_0.05_report.json", "omp_level_0.05_trace.json"] {
        assert!(dir.path().join("r").join(f).exists(), "{f}");
    }
}

#[test]
fn phantom_plan_and_diagnose_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    for (sub, file) in [("phantom", "phantom.json"), ("plan", "plan_check.json"), ("diagnose", "diagnose.json")] {
        let out = cjs(dir.path(), &["--config", &cfg, "--out", "d", sub]);
        assert_eq!(code(&out), 0, "{sub}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(dir.path().join("d").join(file).exists(), "{file}");
    }
    let check: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("d/plan_check.json")).unwrap()).unwrap();
    assert_eq!(check["ok"], true);
}
