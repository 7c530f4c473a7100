mod common;

use common::*;
use hicrl::backend::FixtureBuilder;
use hicrl::envs::{bundled_pack, EnvId};
use std::path::Path;
use std::process::{Command, Output};

fn hicrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hicrl"))
        .args(args)
        .env_remove("HICRL_API_KEY")
        .env_remove("HICRL_BASE_URL")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Oracle fixture for the first `n` house scenarios.
fn write_fixture(path: &Path, n: usize) {
    let mut b = FixtureBuilder::new();
    for s in &bundled_pack(EnvId::MiniHouse).scenarios[..n] {
        b = b.session(s.id.clone(), 1).extend(oracle_responses(s));
    }
    std::fs::write(path, b.to_jsonl()).unwrap();
}

fn scripted_run(dir: &Path) -> Output {
    let fixture = dir.join("fixture.jsonl");
    write_fixture(&fixture, 3);
    let out = dir.join("run");
    hicrl(&[
        "run",
        "--backend",
        "scripted",
        "--fixture",
        fixture.to_str().unwrap(),
        "--limit",
        "3",
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn scripted_run_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = scripted_run(dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("all"));
    assert!(dir.path().join("run/report.json").exists());

    let run = dir.path().join("run");
    let o = hicrl(&["report", run.to_str().unwrap(), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let keys: Vec<&String> = json["success_at"].as_object().unwrap().keys().collect();
    assert_eq!(keys, ["1", "2", "3", "4", "5"]);
    assert_eq!(json["success_at"]["1"], 1.0);

    let id = &bundled_pack(EnvId::MiniHouse).scenarios[0].id;
    let o = hicrl(&["replay", run.to_str().unwrap(), "--scenario", id]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("[Goal]"));
    let o = hicrl(&["replay", run.to_str().unwrap(), "--scenario", id, "--tag-free"]);
    assert!(!stdout(&o).contains("[Goal]"));
}

#[test]
fn rerun_resumes_without_new_calls() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(scripted_run(dir.path()).status.code(), Some(0));
    let before = std::fs::read(dir.path().join("run/episodes.jsonl")).unwrap();
    assert_eq!(scripted_run(dir.path()).status.code(), Some(0));
    assert_eq!(std::fs::read(dir.path().join("run/episodes.jsonl")).unwrap(), before);
}

#[test]
fn http_without_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = hicrl(&["run", "--backend", "http", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("HICRL_API_KEY"));
}

#[test]
fn dry_run_prints_the_first_prompt() {
    let o = hicrl(&["run", "--env", "minishop", "--dry-run"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.trim_end().ends_with("[Goal]"), "{text}");
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(hicrl(&["run", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(hicrl(&["run", "--env", "nowhere", "--dry-run"]).status.code(), Some(2));
    assert_eq!(hicrl(&["run", "--backend", "scripted"]).status.code(), Some(2));
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# settings\nenv = miniwiki\nmode = reflexion\n").unwrap();
    let o = hicrl(&["run", "--config", cfg.to_str().unwrap(), "--dry-run"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains(&bundled_pack(EnvId::MiniWiki).scenarios[0].task_text));
}

#[test]
fn oracle_command_passes() {
    let o = hicrl(&["oracle", "--env", "minihouse"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("scenarios solvable"));
}
