use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use causal_roundtrip::experiments::{ExperimentConfig, ExperimentReport, PRESET_NAMES};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_causal-roundtrip"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const TINY_STRESS: &str = r#"{
  "experiment": "stress",
  "n": 100,
  "seeds": [1],
  "mechanisms": {
    "T": {"kind": "diffusion", "timesteps": 50, "hidden_dim": 8, "num_blocks": 1, "embed_dim": 4, "epochs": 1},
    "Y": {"kind": "diffusion", "timesteps": 50, "hidden_dim": 8, "num_blocks": 1, "embed_dim": 4, "epochs": 1}
  }
}"#;

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn presets_print_valid_configs() {
    for name in PRESET_NAMES {
        let o = cli(&["preset", name]);
        assert_eq!(code(&o), 0, "{name}");
        let text = String::from_utf8(o.stdout).unwrap();
        ExperimentConfig::from_json(&text).unwrap();
    }
}

#[test]
fn unknown_preset_is_a_usage_error() {
    let o = cli(&["preset", "nope"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&cli(&["--help"])), 0);
    assert_eq!(code(&cli(&["--version"])), 0);
    assert_eq!(code(&cli(&[])), 1);
}

#[test]
fn run_writes_three_files_and_honours_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", TINY_STRESS);
    let out = dir.path().join("out");
    let o = cli(&[
        "run",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--seeds",
        "7,8",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "tables.csv", "summary.md"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let r: ExperimentReport =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(r.config.seeds, vec![7, 8]);
    assert_eq!(r.per_seed.len(), 2);
}

#[test]
fn invalid_configs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad_weight = TINY_STRESS.replace(r#""epochs": 1}"#, r#""epochs": 1, "hybrid_weight": 12}"#);
    let cases = [
        ("weight.json", bad_weight),
        ("syntax.json", "{ not json".to_string()),
        (
            "unknown.json",
            TINY_STRESS.replace(r#""n": 100"#, r#""n": 100, "bogus": 1"#),
        ),
        ("rows.json", TINY_STRESS.replace(r#""n": 100"#, r#""n": 5"#)),
    ];
    for (name, body) in cases {
        let cfg = write(dir.path(), name, &body);
        let o = cli(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
        assert_eq!(
            code(&o),
            1,
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let o = cli(&["run", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let cfg = write(dir.path(), "dup.json", TINY_STRESS);
    let o = cli(&["run", &cfg, "--seeds", "1,1"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn hybrid_weight_message_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let body = TINY_STRESS.replace(r#""epochs": 1}"#, r#""epochs": 1, "hybrid_weight": 12}"#);
    let cfg = write(dir.path(), "c.json", &body);
    let o = cli(&["run", &cfg]);
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(
        err.contains("hybrid_weight = 12 is outside [0, 10]"),
        "{err}"
    );
}

#[test]
fn runtime_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let csv = "treat,age,educ,black,hisp,married,nodegr,re74,re75\n1,25,10,1,0,0,1,0,0\n0,30,12,0,1,1,0,1000,500\n";
    let data = write(dir.path(), "cov.csv", csv);
    let body = format!(
        r#"{{"experiment": "semisynthetic", "n": 50, "seeds": [1], "dataset_path": "{data}",
            "mechanisms": {{"treat": {{"kind": "anm"}}, "re78": {{"kind": "anm"}}}}}}"#
    );
    let cfg = write(dir.path(), "c.json", &body);
    let o = cli(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}
