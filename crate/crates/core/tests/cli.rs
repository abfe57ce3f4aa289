use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn min_opt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_min-opt")).args(args).output().unwrap()
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap()
}

const SMALL: [&str; 10] = [
    "--set", "dataset.size=50", "--set", "gan.hidden=[8]", "--set", "gan.steps=20", "--set", "forward.steps=20", "--set",
    "infer.restarts=2",
];

fn run_in(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["infer", "--oracle", "branin", "--seed", "1", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    min_opt(&args)
}

#[test]
fn unknown_keys_are_all_reported_with_exit_code_2() {
    let out = min_opt(&["gen-data", "--set", "gan.widht=3", "--set", "bogus=1"]);
    assert_eq!(out.status.code(), Some(2));
    let v = error_json(&out);
    assert_eq!(v["error"], "config");
    let details = v["details"].as_array().unwrap();
    let all = details.iter().map(|d| d.as_str().unwrap()).collect::<Vec<_>>().join(" ");
    assert!(all.contains("gan.widht") && all.contains("bogus"), "{all}");
}

#[test]
fn bad_flag_is_a_config_error() {
    let out = min_opt(&["train", "--nonsense"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_oracle_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = min_opt(&["gen-data", "--oracle", "nope", "--out", dir.path().join("r").to_str().unwrap()]);
    assert!(matches!(out.status.code(), Some(2) | Some(3)));
    assert!(error_json(&out)["message"].as_str().unwrap().contains("nope"));
}

#[test]
fn existing_run_directory_needs_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert!(run_in(&run, &[]).status.success());
    let again = run_in(&run, &[]);
    assert_eq!(again.status.code(), Some(2));
    assert!(run_in(&run, &["--overwrite"]).status.success());

    let result: Value = serde_json::from_str(&std::fs::read_to_string(run.join("result.json")).unwrap()).unwrap();
    assert!(result["score"].as_f64().unwrap().is_finite());
    for f in ["resolved-config.json", "dataset.jsonl", "inverse.ckpt", "forward.ckpt", "loss.csv"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
}

#[test]
fn report_summarizes_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert!(run_in(&a, &[]).status.success());
    let out_dir = dir.path().join("report");
    let out = min_opt(&["report", a.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("report.json").exists());
}
