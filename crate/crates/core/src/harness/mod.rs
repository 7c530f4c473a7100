//! Multi-episode experiments: up to N episodes per scenario with the mode's
//! learning rule applied between failures, sticky success, per-scenario
//! memory, incremental persistence and resume.

mod metrics;
mod store;

pub use metrics::{compute_metrics, EpisodeRecord, Metrics, RunReport, ScenarioRecord, ScenarioStatus, TaskBreakdown};
pub use store::{
    load_report, load_run, Manifest, RunState, RunStore, EPISODES_FILE, MANIFEST_FILE, REFLECTIONS_FILE, REPORT_FILE,
};

use crate::backend::CompletionBackend;
use crate::engine::{run_episode, EpisodeInputs, Mode, RunConfig};
use crate::envs::{make_env, EnvId, Scenario};
use crate::hmr::{learn, HmrOptions};
use crate::memory::{LongTermMemory, DEFAULT_MEMORY_BUDGET};
use crate::promptkit::fixtures::few_shot_examples;
use crate::types::{Episode, Outcome, Reflection, Termination};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};
use thiserror::Error;

pub const DEFAULT_EPISODES: u32 = 5;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("refusing to resume: {0}")]
    CorruptManifest(String),
    #[error("invalid harness config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub env: EnvId,
    /// Episodes per scenario.
    pub episodes: u32,
    pub run: RunConfig,
    pub memory_budget: usize,
    pub reflection: HmrOptions,
    /// Scenario-level parallelism; does not affect results.
    #[serde(skip, default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

impl HarnessConfig {
    pub fn new(env: EnvId, mode: Mode) -> Self {
        HarnessConfig {
            env,
            episodes: DEFAULT_EPISODES,
            run: RunConfig::for_env(env, mode),
            memory_budget: DEFAULT_MEMORY_BUDGET,
            reflection: HmrOptions::for_mode(mode),
            workers: 1,
        }
    }

    pub fn mode(&self) -> Mode {
        self.run.mode
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.run.validate().map_err(HarnessError::Config)?;
        if self.episodes == 0 || self.workers == 0 || self.memory_budget == 0 {
            return Err(HarnessError::Config(
                "episodes, workers and memory budget must be at least 1".into(),
            ));
        }
        if self.reflection.style != self.run.mode.style() {
            return Err(HarnessError::Config("reflection style does not match the mode".into()));
        }
        Ok(())
    }

    /// Digest over everything that affects results, including the scenario list.
    pub fn digest(&self, scenarios: &[Scenario]) -> String {
        let ids: Vec<&str> = scenarios.iter().map(|s| s.id.as_str()).collect();
        let canonical = serde_json::to_string(&(self, ids)).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    fn manifest(&self, scenarios: &[Scenario]) -> Manifest {
        Manifest::new(
            self.digest(scenarios),
            scenarios.iter().map(|s| s.id.clone()).collect(),
            serde_json::to_value(self).expect("config serializes"),
        )
    }
}

/// Rebuild a scenario's memory by replaying its persisted reflections in
/// episode order.
pub fn replay_memory(budget: usize, reflections: &[Reflection]) -> LongTermMemory {
    let mut memory = LongTermMemory::new(budget);
    let mut groups: Vec<(u32, Vec<Reflection>)> = Vec::new();
    for r in reflections {
        match groups.iter_mut().find(|(e, _)| *e == r.source_episode) {
            Some((_, g)) => g.push(r.clone()),
            None => groups.push((r.source_episode, vec![r.clone()])),
        }
    }
    groups.sort_by_key(|(e, _)| *e);
    for (_, group) in groups {
        memory = memory.record_reflections(&group);
    }
    memory
}

fn is_exhausted(mode: Mode, episode: &Episode) -> bool {
    mode == Mode::Retry && matches!(episode.termination, Termination::Budget { .. })
}

struct Commit {
    episode: Episode,
    reflections: Vec<Reflection>,
}

struct ScenarioRun {
    episodes: Vec<Episode>,
    status: ScenarioStatus,
}

fn run_scenario<B: CompletionBackend + ?Sized>(
    scenario: &Scenario,
    prior: Vec<Episode>,
    prior_reflections: &[Reflection],
    config: &HarnessConfig,
    backend: &B,
    sink: &dyn Fn(Commit) -> bool,
) -> ScenarioRun {
    let mode = config.mode();
    let mut episodes = prior;
    episodes.sort_by_key(|e| e.episode_index);
    let mut memory = replay_memory(config.memory_budget, prior_reflections);
    if episodes.iter().any(Episode::is_success) {
        return ScenarioRun {
            episodes,
            status: ScenarioStatus::Solved,
        };
    }
    if episodes.last().is_some_and(|e| is_exhausted(mode, e)) {
        return ScenarioRun {
            episodes,
            status: ScenarioStatus::Exhausted,
        };
    }
    let examples = few_shot_examples(scenario.env, &scenario.task_type);
    let mut env = make_env(scenario.env);
    let start = episodes.len() as u32 + 1;
    for k in start..=config.episodes {
        let inputs = EpisodeInputs {
            scenario,
            episode_index: k,
            memory: &memory,
            examples: &examples,
            config: &config.run,
        };
        let episode = match run_episode(inputs, env.as_mut(), backend) {
            Ok(e) => e,
            Err(e) => return aborted(episodes, e.to_string()),
        };
        if let Termination::Backend { error } = &episode.termination {
            return aborted(episodes, error.clone());
        }
        let exhausted = is_exhausted(mode, &episode);
        let reflections = if exhausted || episode.outcome == Outcome::Success {
            Vec::new()
        } else {
            match learn(mode, &scenario.task_text, &episode, backend, &config.reflection) {
                Ok(r) => r,
                Err(e) => return aborted(episodes, e.to_string()),
            }
        };
        memory = memory.record_reflections(&reflections);
        let success = episode.is_success();
        if !sink(Commit {
            episode: episode.clone(),
            reflections,
        }) {
            return aborted(episodes, "run directory writer stopped".into());
        }
        episodes.push(episode);
        if success {
            return ScenarioRun {
                episodes,
                status: ScenarioStatus::Solved,
            };
        }
        if exhausted {
            tracing::info!(scenario = %scenario.id, episode = k, "prompt budget exhausted");
            return ScenarioRun {
                episodes,
                status: ScenarioStatus::Exhausted,
            };
        }
    }
    ScenarioRun {
        episodes,
        status: ScenarioStatus::Unsolved,
    }
}

fn aborted(episodes: Vec<Episode>, error: String) -> ScenarioRun {
    tracing::error!(%error, "scenario aborted");
    ScenarioRun {
        episodes,
        status: ScenarioStatus::Aborted { error },
    }
}

fn execute<B: CompletionBackend + ?Sized>(
    scenarios: &[Scenario],
    config: &HarnessConfig,
    backend: &B,
    mut store: Option<&mut RunStore>,
    prior: RunState,
) -> Result<RunReport, HarnessError> {
    config.validate()?;
    for s in scenarios {
        if s.env != config.env {
            return Err(HarnessError::Config(format!("scenario {} belongs to {}", s.id, s.env)));
        }
    }
    let mut prior_episodes: HashMap<String, Vec<Episode>> = HashMap::new();
    for e in prior.episodes {
        prior_episodes.entry(e.scenario_id.clone()).or_default().push(e);
    }
    let mut prior_reflections: HashMap<String, Vec<Reflection>> = HashMap::new();
    for r in prior.reflections {
        prior_reflections.entry(r.source_scenario.clone()).or_default().push(r);
    }
    let prior_episodes = Mutex::new(prior_episodes);

    let results: Vec<Mutex<Option<ScenarioRun>>> = scenarios.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<Commit>();
    let write_result = std::thread::scope(|scope| {
        let writer = scope.spawn(move || -> std::io::Result<()> {
            for c in rx {
                if let Some(store) = store.as_deref_mut() {
                    store.commit(&c.episode, &c.reflections)?;
                }
            }
            Ok(())
        });
        for _ in 0..config.workers.min(scenarios.len().max(1)) {
            let tx = tx.clone();
            let (next, results, prior_episodes, prior_reflections) =
                (&next, &results, &prior_episodes, &prior_reflections);
            scope.spawn(move || {
                let sink = |c: Commit| tx.send(c).is_ok();
                loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(scenario) = scenarios.get(i) else { break };
                    let prior = prior_episodes
                        .lock()
                        .expect("prior poisoned")
                        .remove(&scenario.id)
                        .unwrap_or_default();
                    let reflections = prior_reflections.get(&scenario.id).map(Vec::as_slice).unwrap_or(&[]);
                    let run = run_scenario(scenario, prior, reflections, config, backend, &sink);
                    *results[i].lock().expect("result poisoned") = Some(run);
                }
            });
        }
        drop(tx);
        writer.join().expect("writer thread panicked")
    });
    write_result?;

    let per_scenario = scenarios
        .iter()
        .zip(results)
        .map(|(s, slot)| {
            let run = slot.into_inner().expect("result poisoned").expect("every scenario ran");
            scenario_record(&s.id, &s.task_type, &run.episodes, run.status)
        })
        .collect();
    Ok(RunReport::new(
        config.env,
        config.mode(),
        config.episodes,
        config.digest(scenarios),
        per_scenario,
    ))
}

fn scenario_record(id: &str, task_type: &str, episodes: &[Episode], status: ScenarioStatus) -> ScenarioRecord {
    let mut record = ScenarioRecord {
        scenario_id: id.to_string(),
        task_type: task_type.to_string(),
        first_success_episode: None,
        status,
        episodes: episodes.iter().map(EpisodeRecord::from).collect(),
    };
    record.first_success_episode = record.first_success();
    record
}

/// Run an experiment in memory, without persistence.
pub fn run_experiment<B: CompletionBackend + ?Sized>(
    scenarios: &[Scenario],
    config: &HarnessConfig,
    backend: &B,
) -> Result<RunReport, HarnessError> {
    execute(scenarios, config, backend, None, RunState::default())
}

/// Run an experiment persisted under `dir`, resuming any committed work there.
pub fn run_experiment_in<B: CompletionBackend + ?Sized>(
    dir: &Path,
    scenarios: &[Scenario],
    config: &HarnessConfig,
    backend: &B,
) -> Result<RunReport, HarnessError> {
    config.validate()?;
    let (mut store, prior) = RunStore::open(dir, &config.manifest(scenarios))?;
    if !prior.episodes.is_empty() {
        tracing::info!(episodes = prior.episodes.len(), dir = %dir.display(), "resuming run");
    }
    let report = execute(scenarios, config, backend, Some(&mut store), prior)?;
    store.write_report(&report)?;
    Ok(report)
}

/// Rebuild a report from a run directory's committed episodes.
pub fn report_from_dir(dir: &Path, scenarios: &[Scenario]) -> Result<RunReport, HarnessError> {
    let (manifest, state) = load_run(dir)?;
    let config: HarnessConfig =
        serde_json::from_value(manifest.config).map_err(|e| HarnessError::CorruptManifest(e.to_string()))?;
    let mode = config.mode();
    let mut per_scenario = Vec::new();
    for id in &manifest.scenarios {
        let mut episodes: Vec<Episode> = state
            .episodes
            .iter()
            .filter(|e| &e.scenario_id == id)
            .cloned()
            .collect();
        episodes.sort_by_key(|e| e.episode_index);
        let task_type = scenarios
            .iter()
            .find(|s| &s.id == id)
            .map(|s| s.task_type.clone())
            .or_else(|| episodes.first().map(|e| e.task_type.clone()))
            .unwrap_or_default();
        let status = if episodes.iter().any(Episode::is_success) {
            ScenarioStatus::Solved
        } else if episodes.last().is_some_and(|e| is_exhausted(mode, e)) {
            ScenarioStatus::Exhausted
        } else if episodes.len() as u32 >= config.episodes {
            ScenarioStatus::Unsolved
        } else {
            ScenarioStatus::Incomplete
        };
        per_scenario.push(scenario_record(id, &task_type, &episodes, status));
    }
    Ok(RunReport::new(
        config.env,
        mode,
        config.episodes,
        manifest.config_digest,
        per_scenario,
    ))
}
