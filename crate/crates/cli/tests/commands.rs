use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn rca(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_rca")).current_dir(dir).args(args).output().expect("binary runs");
    out
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = rca(dir, args);
    assert!(
        out.status.success(),
        "rca {args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn scenario_runs_offline() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), &["scenario", "run", "setting-drift", "outcome-1", "--out", "t.json"]);
    assert!(out.contains("matched outcome: outcome-1"), "{out}");
    let judged = ok(tmp.path(), &["scenario", "judge", "setting-drift", "t.json"]);
    let v: serde_json::Value = serde_json::from_str(&judged).unwrap();
    assert_eq!(v["matched"], "outcome-1");

    let capped = ok(tmp.path(), &["scenario", "run", "multi-kba", "never-consolidate"]);
    assert!(capped.contains("IterationCap") && capped.contains("matched outcome: none"), "{capped}");

    let listed = ok(tmp.path(), &["scenario", "list"]);
    assert!(listed.contains("setting-drift") && listed.contains("multi-kba"));
}

#[test]
fn unknown_scenario_is_a_clean_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rca(tmp.path(), &["scenario", "validate", "nope"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: ") && err.contains("setting-drift"), "{err}");
}

#[test]
fn corpus_pipeline_with_scripted_models() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let script = fixture("script.toml");
    let script = script.to_str().unwrap();
    let incidents = fixture("incidents.jsonl");

    let out = ok(d, &["ingest", incidents.to_str().unwrap(), "--corpus", "c", "--eval-size", "1", "--test-size", "2"]);
    assert!(out.contains("ingested 6 incidents (1 rejected)"), "{out}");
    assert!(out.contains("3/1/2"), "{out}");

    ok(d, &["--script", script, "summarize", "--corpus", "c"]);
    let out = ok(d, &["index", "--corpus", "c", "--kind", "sparse"]);
    assert!(out.contains("indexed 3 documents"), "{out}");

    ok(d, &["--script", script, "run", "--mode", "react-sq", "--corpus", "c", "--out", "runs"]);
    ok(d, &["--script", script, "run", "--mode", "rb", "--corpus", "c", "--incident", "INC-1", "--out", "runs"]);
    let preds = std::fs::read_to_string(d.join("runs/predictions.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = preds.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[..2].iter().all(|p| p["model_tag"] == "react-sq"));
    assert_eq!(lines[0]["predicted_root_cause"], "logging filled the disk");
    assert!(std::fs::read_dir(d.join("runs")).unwrap().filter(|e| {
        e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".react-sq.json")
    }).count() == 2);

    let report = ok(d, &["eval", "--pred", "runs/predictions.jsonl", "--ref", fixture("references.jsonl").to_str().unwrap(), "--out", "r.json"]);
    assert!(report.starts_with("Model"), "{report}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn missing_script_entries_fail_without_network() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("empty.toml"), "").unwrap();
    ok(d, &["ingest", fixture("incidents.jsonl").to_str().unwrap(), "--corpus", "c", "--test-size", "1"]);
    // exhausted script: fails, no fallback to the http backend
    let out = rca(d, &["--script", "empty.toml", "run", "--mode", "cot", "--corpus", "c", "--out", "runs"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("script exhausted"));
}

#[test]
fn config_prints_and_rejects_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(tmp.path(), &["config"]);
    assert!(out.contains("[agent]") && out.contains("max_iterations = 20"));
    std::fs::write(tmp.path().join("bad.toml"), "[agent]\nnope = 1\n").unwrap();
    let out = rca(tmp.path(), &["--config", "bad.toml", "config"]);
    assert!(!out.status.success());
}
