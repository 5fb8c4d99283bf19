use std::path::{Path, PathBuf};
use std::process::Command;

use phasefield_harness::{run_solve, run_varifold, ExperimentConfig, Session};

const SMALL: &str = r#"{
  "schema_version": 1,
  "name": "small",
  "manifold": { "lengths": [1.0, 1.0], "counts": [64, 64] },
  "epsilons": [0.1, 0.07],
  "seed": { "axis": 0, "positions": [0.25, 0.75] },
  "battery": { "random": { "count": 1, "kmax": 1, "amplitude": 0.2, "seed": 7 } },
  "ell_max": 3
}"#;

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("phasefield-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn with(edit: impl FnOnce(&mut serde_json::Value)) -> String {
    let mut v: serde_json::Value = serde_json::from_str(SMALL).unwrap();
    edit(&mut v);
    v.to_string()
}

#[test]
fn bundled_config_loads() {
    let cfg = ExperimentConfig::load(Path::new("t2-two-slabs")).unwrap();
    assert_eq!(cfg.name, "t2-two-slabs");
    assert_eq!(cfg.epsilons, vec![0.1, 0.05, 0.025]);
    assert_eq!(cfg.validate_battery().unwrap().len(), 10);
    assert_eq!(cfg.variation_epsilon(), 0.05);
}

#[test]
fn invalid_configs_are_rejected() {
    let below_grid = with(|v| v["epsilons"] = serde_json::json!([0.1, 0.05]));
    assert!(ExperimentConfig::from_json(&below_grid).unwrap_err().to_string().contains("grid spacings"));
    let increasing = with(|v| v["epsilons"] = serde_json::json!([0.07, 0.1]));
    assert!(ExperimentConfig::from_json(&increasing).is_err());
    let crowded = with(|v| v["seed"]["positions"] = serde_json::json!([0.25, 0.35]));
    assert!(ExperimentConfig::from_json(&crowded).is_err());
    let unknown = with(|v| v["colour"] = serde_json::json!("red"));
    assert!(ExperimentConfig::from_json(&unknown).is_err());
    let radii = with(|v| v["extension"] = serde_json::json!({ "delta": 0.1, "inner": 0.08, "outer": 0.18 }));
    assert!(ExperimentConfig::from_json(&radii).is_err());
}

#[test]
fn solve_and_varifold_are_reproducible() {
    let cfg = ExperimentConfig::from_json(SMALL).unwrap();
    let mut bytes = vec![];
    for run in 0..2 {
        let out = scratch(&format!("rerun{run}"));
        let mut s = Session::new(cfg.clone(), &out).unwrap();
        let solve = run_solve(&mut s).unwrap();
        assert!(solve.passed, "{:?}", solve.checks.iter().map(|c| c.line()).collect::<Vec<_>>());
        let vf = run_varifold(&mut s).unwrap();
        assert!(vf.artifacts.iter().any(|a| a == "varifold.csv"));
        let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("solve.json")).unwrap()).unwrap();
        assert_eq!(json["schema_version"], 1);
        bytes.push((
            std::fs::read(out.join("solve.csv")).unwrap(),
            std::fs::read(out.join("varifold.csv")).unwrap(),
        ));
        std::fs::remove_dir_all(&out).unwrap();
    }
    assert!(bytes[0] == bytes[1], "artifacts differ between identical runs");
}

#[test]
fn binary_exit_codes() {
    let dir = scratch("exit");
    let bad = dir.join("tight.json");
    std::fs::write(&bad, with(|v| v["hypotheses"] = serde_json::json!({ "e0": 0.01 }))).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_phasefield-lab"))
        .args(["solve", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&status.stdout);
    assert!(stdout.contains("FAIL energy bound"), "{stdout}");
    assert!(stdout.contains("hypothesis: energy bounded by E0"), "{stdout}");

    let good = dir.join("small.json");
    std::fs::write(&good, SMALL).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_phasefield-lab"))
        .args(["solve", "--threads", "2", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(dir.join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let status = Command::new(env!("CARGO_BIN_EXE_phasefield-lab"))
        .args(["solve", "--config"])
        .arg(dir.join("missing.json"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}
