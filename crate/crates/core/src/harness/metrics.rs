use crate::engine::Mode;
use crate::envs::EnvId;
use crate::types::{Episode, Outcome, Termination};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Summary of one persisted episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u32,
    pub outcome: Outcome,
    pub reward: f64,
    pub termination: Termination,
    pub actions: usize,
    pub goals: usize,
    pub finished_goals: usize,
}

impl From<&Episode> for EpisodeRecord {
    fn from(e: &Episode) -> Self {
        EpisodeRecord {
            episode: e.episode_index,
            outcome: e.outcome,
            reward: e.reward,
            termination: e.termination.clone(),
            actions: e.trajectory.action_count(),
            goals: e.trajectory.goals.len(),
            finished_goals: e.trajectory.finished_goals(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioStatus {
    Solved,
    /// Every episode ran and failed.
    Unsolved,
    /// The prompt outgrew the character budget (retry mode).
    Exhausted,
    /// A backend or environment error stopped the scenario.
    Aborted {
        error: String,
    },
    /// Fewer episodes on disk than configured and no recorded reason.
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub scenario_id: String,
    pub task_type: String,
    pub first_success_episode: Option<u32>,
    pub status: ScenarioStatus,
    pub episodes: Vec<EpisodeRecord>,
}

impl ScenarioRecord {
    pub fn first_success(&self) -> Option<u32> {
        self.episodes
            .iter()
            .filter(|e| e.outcome == Outcome::Success)
            .map(|e| e.episode)
            .min()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskBreakdown {
    pub scenarios: usize,
    pub success_at: BTreeMap<u32, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub success_at: BTreeMap<u32, f64>,
    pub per_task_type: BTreeMap<String, TaskBreakdown>,
}

fn success_at<'a>(records: impl Iterator<Item = &'a ScenarioRecord> + Clone, episodes: u32) -> BTreeMap<u32, f64> {
    let total = records.clone().count();
    (1..=episodes)
        .map(|k| {
            let solved = records
                .clone()
                .filter(|r| r.first_success().is_some_and(|f| f <= k))
                .count();
            let rate = if total == 0 { 0.0 } else { solved as f64 / total as f64 };
            (k, rate)
        })
        .collect()
}

/// Sticky success rates for episode numbers `1..=episodes`, overall and per
/// task type.
pub fn compute_metrics(records: &[ScenarioRecord], episodes: u32) -> Metrics {
    let mut per_task_type = BTreeMap::new();
    let types: std::collections::BTreeSet<&str> = records.iter().map(|r| r.task_type.as_str()).collect();
    for ty in types {
        let group = records.iter().filter(move |r| r.task_type == ty);
        per_task_type.insert(
            ty.to_string(),
            TaskBreakdown {
                scenarios: group.clone().count(),
                success_at: success_at(group, episodes),
            },
        );
    }
    Metrics {
        success_at: success_at(records.iter(), episodes),
        per_task_type,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub env: EnvId,
    pub mode: Mode,
    pub episodes: u32,
    pub config_digest: String,
    pub success_at: BTreeMap<u32, f64>,
    pub per_task_type: BTreeMap<String, TaskBreakdown>,
    pub per_scenario: Vec<ScenarioRecord>,
}

impl RunReport {
    pub fn new(
        env: EnvId,
        mode: Mode,
        episodes: u32,
        config_digest: String,
        per_scenario: Vec<ScenarioRecord>,
    ) -> Self {
        let metrics = compute_metrics(&per_scenario, episodes);
        RunReport {
            env,
            mode,
            episodes,
            config_digest,
            success_at: metrics.success_at,
            per_task_type: metrics.per_task_type,
            per_scenario,
        }
    }

    pub fn count(&self, pred: impl Fn(&ScenarioStatus) -> bool) -> usize {
        self.per_scenario.iter().filter(|s| pred(&s.status)).count()
    }

    /// Plain-text success table in percent.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "env {}  mode {}  scenarios {}  config {}",
            self.env,
            self.mode,
            self.per_scenario.len(),
            self.config_digest
        );
        let mut header = format!("{:<12}{:>5}", "task", "n");
        for k in 1..=self.episodes {
            let _ = write!(header, "{:>8}", format!("ep{k}"));
        }
        let _ = writeln!(out, "{header}");
        let row = |out: &mut String, name: &str, n: usize, rates: &BTreeMap<u32, f64>| {
            let _ = write!(out, "{name:<12}{n:>5}");
            for rate in rates.values() {
                let _ = write!(out, "{:>8.1}", rate * 100.0);
            }
            out.push('\n');
        };
        row(&mut out, "all", self.per_scenario.len(), &self.success_at);
        for (ty, b) in &self.per_task_type {
            row(&mut out, ty, b.scenarios, &b.success_at);
        }
        for s in &self.per_scenario {
            match &s.status {
                ScenarioStatus::Exhausted => {
                    let _ = writeln!(
                        out,
                        "exhausted: {} after {} episode(s)",
                        s.scenario_id,
                        s.episodes.len()
                    );
                }
                ScenarioStatus::Aborted { error } => {
                    let _ = writeln!(out, "aborted: {}: {error}", s.scenario_id);
                }
                ScenarioStatus::Incomplete => {
                    let _ = writeln!(out, "incomplete: {} ({} episode(s))", s.scenario_id, s.episodes.len());
                }
                _ => {}
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(ty: &str, first: Option<u32>) -> ScenarioRecord {
        let n = first.unwrap_or(5);
        ScenarioRecord {
            scenario_id: format!("{ty}-{first:?}"),
            task_type: ty.into(),
            first_success_episode: first,
            status: ScenarioStatus::Unsolved,
            episodes: (1..=n)
                .map(|k| EpisodeRecord {
                    episode: k,
                    outcome: if Some(k) == first {
                        Outcome::Success
                    } else {
                        Outcome::Failure
                    },
                    reward: 0.0,
                    termination: Termination::EnvDone,
                    actions: 1,
                    goals: 1,
                    finished_goals: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn counting_example() {
        let mut records: Vec<_> = (0..4).map(|_| record("a", Some(1))).collect();
        records.push(record("a", Some(3)));
        records.push(record("b", Some(5)));
        records.extend((0..4).map(|_| record("b", None)));
        let m = compute_metrics(&records, 5);
        assert_eq!(m.success_at[&1], 0.4);
        assert_eq!(m.success_at[&5], 0.6);
        assert_eq!(m.per_task_type["a"].success_at[&1], 0.8);
        assert_eq!(m.per_task_type["b"].success_at[&5], 0.2);
    }

    #[test]
    fn single_late_success() {
        let m = compute_metrics(&[record("x", Some(3))], 5);
        assert_eq!(
            m.success_at.values().copied().collect::<Vec<_>>(),
            [0.0, 0.0, 1.0, 1.0, 1.0]
        );
    }

    #[test]
    fn empty_and_all_failing() {
        let m = compute_metrics(&[], 5);
        assert_eq!(m.success_at.len(), 5);
        assert!(m.success_at.values().all(|&v| v == 0.0));
        let m = compute_metrics(&[record("x", None), record("y", None)], 5);
        assert!(m.success_at.values().all(|&v| v == 0.0));
    }

    #[test]
    fn json_keys_are_episode_numbers() {
        let report = RunReport::new(EnvId::MiniHouse, Mode::Hmr, 5, "d".into(), vec![record("x", Some(2))]);
        let json = serde_json::to_value(&report).unwrap();
        let keys: Vec<&String> = json["success_at"].as_object().unwrap().keys().collect();
        assert_eq!(keys, ["1", "2", "3", "4", "5"]);
        let back: RunReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, report);
        assert!(report.render_table().contains("x               1     0.0   100.0"));
    }
}
