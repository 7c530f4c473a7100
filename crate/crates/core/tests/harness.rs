mod common;

use common::*;
use hicrl::backend::{FixtureBuilder, RecordingBackend, RoleHint, ScriptedBackend};
use hicrl::engine::Mode;
use hicrl::envs::{bundled_pack, EnvId, Scenario};
use hicrl::harness::{
    report_from_dir, run_experiment, run_experiment_in, HarnessConfig, HarnessError, ScenarioStatus, EPISODES_FILE,
    REFLECTIONS_FILE,
};
use hicrl::types::{parse_episodes_jsonl, ReflectionLevel};
use std::fs;

fn house(n: usize) -> Vec<Scenario> {
    bundled_pack(EnvId::MiniHouse).scenarios[..n].to_vec()
}

/// Scenario i fails `i % 3` times, then follows its oracle.
fn mixed_fixture(scenarios: &[Scenario]) -> ScriptedBackend {
    let mut b = FixtureBuilder::new();
    for (i, s) in scenarios.iter().enumerate() {
        let fails = (i % 3) as u32;
        for k in 1..=fails {
            b = b
                .session(s.id.clone(), k)
                .extend(failing_responses(s.env.default_max_steps()))
                .push(format!("Episode {k}: search the countertops first."));
        }
        b = b.session(s.id.clone(), fails + 1).extend(oracle_responses(s));
    }
    b.backend()
}

#[test]
fn oracle_fixtures_solve_everything_first_try() {
    for env in EnvId::ALL {
        let scenarios = bundled_pack(env).scenarios.clone();
        let mut b = FixtureBuilder::new();
        for s in &scenarios {
            b = b.session(s.id.clone(), 1).extend(oracle_responses(s));
        }
        let report = run_experiment(&scenarios, &HarnessConfig::new(env, Mode::Hmr), &b.backend()).unwrap();
        assert!(report.success_at.values().all(|&v| v == 1.0), "{env}");
        assert!(report.per_scenario.iter().all(|s| s.episodes.len() == 1));
    }
}

#[test]
fn sticky_success_and_learning_between_failures() {
    let scenarios = house(6);
    let backend = RecordingBackend::new(mixed_fixture(&scenarios));
    let report = run_experiment(&scenarios, &HarnessConfig::new(EnvId::MiniHouse, Mode::Hmr), &backend).unwrap();
    let rates: Vec<f64> = report.success_at.values().copied().collect();
    assert_eq!(rates, [2.0 / 6.0, 4.0 / 6.0, 1.0, 1.0, 1.0]);
    assert_eq!(report.per_scenario[2].first_success_episode, Some(3));
    // The high-level lesson from episode 1 reaches the goal prompt of episode 2.
    let goal2 = backend
        .exchanges()
        .into_iter()
        .find(|e| e.request.session.scenario == scenarios[1].id && e.request.session.episode == 2)
        .unwrap();
    assert_eq!(goal2.request.role_hint, RoleHint::Goal);
    assert!(goal2
        .request
        .prompt
        .contains("- Episode 1: search the countertops first."));
}

#[test]
fn empty_scenario_list_gives_an_empty_report() {
    let backend = FixtureBuilder::new().backend();
    let report = run_experiment(&[], &HarnessConfig::new(EnvId::MiniHouse, Mode::Hmr), &backend).unwrap();
    assert!(report.per_scenario.is_empty());
    assert_eq!(report.success_at.len(), 5);
    assert!(report.success_at.values().all(|&v| v == 0.0));
}

#[test]
fn workers_do_not_change_results() {
    let scenarios = house(12);
    let config = HarnessConfig::new(EnvId::MiniHouse, Mode::Hmr);
    let serial = run_experiment(&scenarios, &config, &mixed_fixture(&scenarios)).unwrap();
    let parallel = run_experiment(
        &scenarios,
        &HarnessConfig { workers: 4, ..config },
        &mixed_fixture(&scenarios),
    )
    .unwrap();
    assert_eq!(serial, parallel);
}

#[test]
fn modes_store_different_memories() {
    let scenarios = house(1);
    for (mode, level, count) in [
        (Mode::Hmr, ReflectionLevel::High, 1),
        (Mode::Reflexion, ReflectionLevel::Full, 1),
        (Mode::Retry, ReflectionLevel::Trajectory, 1),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let backend = always_fail_fixture(&scenarios, 1, 2).backend();
        let mut config = HarnessConfig::new(EnvId::MiniHouse, mode);
        config.episodes = 1;
        run_experiment_in(dir.path(), &scenarios, &config, &backend).unwrap();
        let text = fs::read_to_string(dir.path().join(REFLECTIONS_FILE)).unwrap();
        let levels: Vec<ReflectionLevel> = text
            .lines()
            .map(|l| serde_json::from_str::<hicrl::types::Reflection>(l).unwrap().level)
            .collect();
        assert_eq!(levels, vec![level; count], "{mode}");
    }
}

#[test]
fn retry_prompts_grow_until_exhaustion() {
    let scenarios = house(1);
    let backend = RecordingBackend::new(always_fail_fixture(&scenarios, 5, 0).backend());
    let mut config = HarnessConfig::new(EnvId::MiniHouse, Mode::Retry);
    config.run.char_budget = 10_000;
    let report = run_experiment(&scenarios, &config, &backend).unwrap();
    let record = &report.per_scenario[0];
    assert_eq!(record.status, ScenarioStatus::Exhausted);
    let first_goal_lengths: Vec<usize> = (1..=record.episodes.len() as u32)
        .filter_map(|k| {
            backend
                .exchanges()
                .into_iter()
                .find(|e| e.request.session.episode == k && e.request.role_hint == RoleHint::Goal)
                .map(|e| e.request.prompt.chars().count())
        })
        .collect();
    assert!(first_goal_lengths.len() >= 2);
    assert!(
        first_goal_lengths.windows(2).all(|w| w[0] < w[1]),
        "{first_goal_lengths:?}"
    );
}

#[test]
fn digest_mismatch_refuses_to_resume() {
    let scenarios = house(2);
    let dir = tempfile::tempdir().unwrap();
    let config = HarnessConfig::new(EnvId::MiniHouse, Mode::Hmr);
    run_experiment_in(dir.path(), &scenarios, &config, &mixed_fixture(&scenarios)).unwrap();
    let before = fs::read(dir.path().join(EPISODES_FILE)).unwrap();
    let other = HarnessConfig::new(EnvId::MiniHouse, Mode::Reflexion);
    let err = run_experiment_in(dir.path(), &scenarios, &other, &mixed_fixture(&scenarios)).unwrap_err();
    assert!(matches!(err, HarnessError::CorruptManifest(_)));
    assert_eq!(fs::read(dir.path().join(EPISODES_FILE)).unwrap(), before);
}

#[test]
fn logs_without_manifest_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(EPISODES_FILE), "{}\n").unwrap();
    let err = run_experiment_in(
        dir.path(),
        &house(1),
        &HarnessConfig::new(EnvId::MiniHouse, Mode::Hmr),
        &FixtureBuilder::new().backend(),
    )
    .unwrap_err();
    assert!(matches!(err, HarnessError::CorruptManifest(_)));
}

#[test]
fn backend_failure_aborts_only_that_scenario_and_resume_finishes_it() {
    let scenarios = house(3);
    let full = |trim: bool| {
        let mut b = FixtureBuilder::new();
        for (i, s) in scenarios.iter().enumerate() {
            b = b
                .session(s.id.clone(), 1)
                .extend(failing_responses(40))
                .push("Look inside the fridge.");
            let mut r = oracle_responses(s);
            if trim && i == 1 {
                r.truncate(3);
            }
            b = b.session(s.id.clone(), 2).extend(r);
        }
        b.backend()
    };
    let dir = tempfile::tempdir().unwrap();
    let config = HarnessConfig::new(EnvId::MiniHouse, Mode::Hmr);
    let first = run_experiment_in(dir.path(), &scenarios, &config, &full(true)).unwrap();
    assert!(matches!(first.per_scenario[1].status, ScenarioStatus::Aborted { .. }));
    assert_eq!(first.per_scenario[0].status, ScenarioStatus::Solved);
    assert_eq!(first.per_scenario[2].status, ScenarioStatus::Solved);
    let on_disk = report_from_dir(dir.path(), &scenarios).unwrap();
    assert_eq!(on_disk.per_scenario[1].status, ScenarioStatus::Incomplete);

    let resumed = run_experiment_in(dir.path(), &scenarios, &config, &full(false)).unwrap();
    assert!(resumed.per_scenario.iter().all(|s| s.status == ScenarioStatus::Solved));
    let episodes = parse_episodes_jsonl(&fs::read_to_string(dir.path().join(EPISODES_FILE)).unwrap()).unwrap();
    assert_eq!(episodes.len(), 6);
}

#[test]
fn torn_tail_is_discarded_on_resume() {
    let scenarios = house(3);
    let config = HarnessConfig::new(EnvId::MiniHouse, Mode::Hmr);
    let reference = tempfile::tempdir().unwrap();
    run_experiment_in(reference.path(), &scenarios, &config, &mixed_fixture(&scenarios)).unwrap();
    let episodes = fs::read_to_string(reference.path().join(EPISODES_FILE)).unwrap();
    let reflections = fs::read_to_string(reference.path().join(REFLECTIONS_FILE)).unwrap();

    let dir = tempfile::tempdir().unwrap();
    fs::copy(reference.path().join("manifest.json"), dir.path().join("manifest.json")).unwrap();
    // Cut in the middle of a line, leaving an uncommitted partial episode and
    // every reflection (some now orphaned).
    fs::write(dir.path().join(EPISODES_FILE), &episodes[..episodes.len() * 2 / 3]).unwrap();
    fs::write(dir.path().join(REFLECTIONS_FILE), &reflections).unwrap();
    run_experiment_in(dir.path(), &scenarios, &config, &mixed_fixture(&scenarios)).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join(EPISODES_FILE)).unwrap(), episodes);
    assert_eq!(
        fs::read_to_string(dir.path().join(REFLECTIONS_FILE)).unwrap(),
        reflections
    );
}
