//! The decision loop: a cue state machine that queries the high-level policy
//! for goals, the low-level policy for thoughts and actions, and the finisher
//! after every action.
//!
//! ```text
//! NeedGoal ─► NeedThink ─► NeedAction ─► NeedFinish ─┬─ Yes ─► NeedGoal
//!                              ▲                     └─ No ──► NeedAction
//!                              └──────────────────────────────┘
//! any ─► Done   (env done, step cap, goal cap)
//! ```

use crate::backend::{BackendError, CompletionBackend, CompletionRequest, RoleHint, SessionKey};
use crate::envs::{EnvError, EnvId, Scenario, TextEnv};
use crate::hmr::route_reflections;
use crate::memory::LongTermMemory;
use crate::promptkit::{
    assemble_prompt, parse_action, parse_finish, parse_free_step, parse_goal, parse_think, ParseError, PromptBundle,
    PromptError, PromptStyle, DEFAULT_CHAR_BUDGET,
};
use crate::types::{
    Episode, FewShotExample, Goal, GrammarError, Outcome, Tag, Termination, Trajectory, FINISH_NO, FINISH_YES,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Learning rule applied between episodes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Hindsight modular reflection: n low-level + 1 high-level entries.
    #[default]
    Hmr,
    /// One reflection over the whole trajectory.
    Reflexion,
    /// Past failed trajectories, verbatim.
    Retry,
    /// HMR with tag-free prompting; the model chooses its own step type.
    Notag,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Hmr, Mode::Reflexion, Mode::Retry, Mode::Notag];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Hmr => "hmr",
            Mode::Reflexion => "reflexion",
            Mode::Retry => "retry",
            Mode::Notag => "notag",
        }
    }

    pub fn style(self) -> PromptStyle {
        match self {
            Mode::Notag => PromptStyle::TagFree,
            _ => PromptStyle::Tagged,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown mode {s:?} (expected hmr, reflexion, retry or notag)"))
    }
}

pub const DEFAULT_MAX_GOALS: usize = 10;
pub const DEFAULT_MAX_PARSE_RETRIES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub max_env_steps: usize,
    pub max_goals: usize,
    /// Consecutive unparseable completions tolerated per cue.
    pub max_parse_retries: usize,
    /// Discount factor in `(0, 1]`.
    pub gamma: f64,
    pub char_budget: usize,
    pub mode: Mode,
}

impl RunConfig {
    pub fn for_env(env: EnvId, mode: Mode) -> Self {
        RunConfig {
            max_env_steps: env.default_max_steps(),
            max_goals: DEFAULT_MAX_GOALS,
            max_parse_retries: DEFAULT_MAX_PARSE_RETRIES,
            gamma: 1.0,
            char_budget: DEFAULT_CHAR_BUDGET,
            mode,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_env_steps == 0 || self.max_goals == 0 || self.max_parse_retries == 0 || self.char_budget == 0 {
            return Err("caps and budget must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    NeedGoal,
    NeedThink,
    NeedAction,
    NeedFinish,
    Done,
}

impl Phase {
    pub fn cue(self) -> Option<Tag> {
        match self {
            Phase::NeedGoal => Some(Tag::Goal),
            Phase::NeedThink => Some(Tag::Think),
            Phase::NeedAction => Some(Tag::Action),
            Phase::NeedFinish => Some(Tag::Finish),
            Phase::Done => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineState {
    pub phase: Phase,
    pub active_goal: Option<Goal>,
    pub steps_taken: usize,
    pub goals_proposed: usize,
}

impl EngineState {
    pub fn new() -> Self {
        EngineState {
            phase: Phase::NeedGoal,
            active_goal: None,
            steps_taken: 0,
            goals_proposed: 0,
        }
    }
}

impl Default for EngineState {
    fn default() -> Self {
        Self::new()
    }
}

/// The phase following `state.phase`, or the reason the episode must stop.
pub fn transition(
    state: &EngineState,
    verdict: Option<bool>,
    env_done: bool,
    config: &RunConfig,
) -> Result<Phase, Termination> {
    if env_done {
        return Err(Termination::EnvDone);
    }
    if state.steps_taken >= config.max_env_steps {
        return Err(Termination::StepCap);
    }
    if state.goals_proposed > config.max_goals {
        return Err(Termination::GoalCap);
    }
    let next = match state.phase {
        Phase::NeedGoal => Phase::NeedThink,
        Phase::NeedThink => Phase::NeedAction,
        Phase::NeedAction => Phase::NeedFinish,
        Phase::NeedFinish if verdict == Some(true) => Phase::NeedGoal,
        Phase::NeedFinish => Phase::NeedAction,
        Phase::Done => Phase::Done,
    };
    if next == Phase::NeedGoal && state.goals_proposed >= config.max_goals {
        return Err(Termination::GoalCap);
    }
    Ok(next)
}

/// Next cue, collapsing every termination reason into [`Phase::Done`].
pub fn next_cue(state: &EngineState, verdict: Option<bool>, env_done: bool, config: &RunConfig) -> Phase {
    transition(state, verdict, env_done, config).unwrap_or(Phase::Done)
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("engine produced an invalid trajectory: {0}")]
    Grammar(#[from] GrammarError),
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Inputs for one episode.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeInputs<'a> {
    pub scenario: &'a Scenario,
    /// 1-based.
    pub episode_index: u32,
    pub memory: &'a LongTermMemory,
    pub examples: &'a [FewShotExample],
    pub config: &'a RunConfig,
}

pub(crate) fn digest(text: &str) -> String {
    let hash = Sha256::digest(text.as_bytes());
    hex::encode(&hash[..8])
}

fn role_for(tag: Tag) -> RoleHint {
    match tag {
        Tag::Goal => RoleHint::Goal,
        Tag::Think => RoleHint::Think,
        Tag::Action => RoleHint::Action,
        Tag::Finish => RoleHint::Finish,
    }
}

impl From<PromptError> for Termination {
    fn from(e: PromptError) -> Self {
        Termination::Budget { detail: e.to_string() }
    }
}

impl From<BackendError> for Termination {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Budget(detail) => Termination::Budget { detail },
            other => Termination::Backend {
                error: other.to_string(),
            },
        }
    }
}

struct Runner<'a, B: ?Sized> {
    inputs: EpisodeInputs<'a>,
    backend: &'a B,
    session: SessionKey,
    task: String,
    trajectory: Trajectory,
}

impl<B: CompletionBackend + ?Sized> Runner<'_, B> {
    fn query(&self, cue: Tag) -> Result<String, Termination> {
        let config = self.inputs.config;
        let style = config.mode.style();
        let routed = route_reflections(self.inputs.memory, cue);
        let bundle = PromptBundle::new(&self.task, &self.trajectory, cue)
            .examples(self.inputs.examples)
            .reflections(&routed)
            .goal_context(self.trajectory.active_goal())
            .style(style);
        let prompt = assemble_prompt(&bundle, config.char_budget)?;
        let request = CompletionRequest::new(self.session.clone(), role_for(cue), prompt);
        let response = self.backend.complete(&request)?;
        tracing::debug!(
            scenario = %self.session.scenario,
            episode = self.session.episode,
            cue = %cue,
            prompt_chars = request.prompt.chars().count(),
            prompt_sha = %digest(&request.prompt),
            response_sha = %digest(&response.text),
            "cue"
        );
        Ok(response.text)
    }

    /// Query `cue` until `parse` succeeds; `None` after `attempts` failures.
    fn query_parsed<T>(
        &self,
        cue: Tag,
        attempts: usize,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<(Option<T>, String), Termination> {
        let mut last = String::new();
        for attempt in 1..=attempts {
            last = self.query(cue)?;
            match parse(&last) {
                Ok(v) => return Ok((Some(v), last)),
                Err(e) => {
                    tracing::warn!(scenario = %self.session.scenario, attempt, error = %e, "unparseable completion")
                }
            }
        }
        Ok((None, last))
    }
}

fn free_parser(expected: Tag) -> impl Fn(&str) -> Result<String, ParseError> {
    move |text| {
        let (tag, content) = parse_free_step(text)?;
        if tag != expected {
            return Err(ParseError {
                cue: expected,
                reason: format!("expected a {} step, got {}", expected.keyword(), tag.keyword()),
            });
        }
        Ok(content)
    }
}

/// Run one episode from a fresh environment reset.
///
/// Backend failures and budget overruns end the episode as `Truncated` with
/// the cause recorded in [`Episode::termination`]; only environment or
/// internal errors are returned as `Err`.
pub fn run_episode<B: CompletionBackend + ?Sized>(
    inputs: EpisodeInputs<'_>,
    env: &mut dyn TextEnv,
    backend: &B,
) -> Result<Episode, EngineError> {
    let config = inputs.config;
    config.validate().map_err(EngineError::Config)?;
    let task = env.reset(inputs.scenario)?;
    let mut runner = Runner {
        inputs,
        backend,
        session: SessionKey::new(inputs.scenario.id.clone(), inputs.episode_index),
        task,
        trajectory: Trajectory::new(),
    };
    let free = config.mode == Mode::Notag;
    let mut state = EngineState::new();
    let mut env_done = false;
    let mut reward = 0.0;
    let mut success = false;

    let termination = loop {
        let cue = state.phase.cue().expect("loop exits before Done");
        let attempts = if cue == Tag::Finish && !free {
            2
        } else {
            config.max_parse_retries
        };
        let parsed = if free {
            runner.query_parsed(cue, attempts, free_parser(cue))
        } else {
            match cue {
                Tag::Goal => runner.query_parsed(cue, attempts, parse_goal),
                Tag::Think => runner.query_parsed(cue, attempts, parse_think),
                Tag::Action => runner.query_parsed(cue, attempts, parse_action),
                Tag::Finish => runner.query_parsed(cue, attempts, |t| {
                    parse_finish(t).map(|v| if v { FINISH_YES } else { FINISH_NO }.to_string())
                }),
            }
        };
        let (content, raw) = match parsed {
            Ok(v) => v,
            Err(t) => break t,
        };
        let content = match content {
            Some(c) => c,
            // The finisher defaults to "not achieved" after its retry.
            None if cue == Tag::Finish && !free => FINISH_NO.to_string(),
            None => break Termination::ParseAbort { cue },
        };
        let traj = &mut runner.trajectory;
        let mut verdict = None;
        match cue {
            Tag::Goal => {
                state.active_goal = Some(traj.propose_goal(content)?.clone());
                state.goals_proposed += 1;
            }
            Tag::Think => traj.push_think(content)?,
            Tag::Action => {
                let result = env.step(&content)?;
                state.steps_taken += 1;
                traj.push_action(content, result.observation.clone())?;
                if result.done {
                    env_done = true;
                    reward = result.reward;
                    success = result.is_success();
                }
            }
            Tag::Finish => {
                let achieved = content == FINISH_YES;
                let raw = (raw.trim() != content).then_some(raw);
                traj.push_finish(achieved, raw)?;
                verdict = Some(achieved);
                if achieved {
                    state.active_goal = None;
                }
            }
        }
        match transition(&state, verdict, env_done, config) {
            Ok(next) => state.phase = next,
            Err(t) => break t,
        }
    };
    state.phase = Phase::Done;
    let mut trajectory = runner.trajectory;
    trajectory.close();
    let outcome = match &termination {
        Termination::EnvDone if success => Outcome::Success,
        Termination::EnvDone | Termination::ParseAbort { .. } => Outcome::Failure,
        _ => Outcome::Truncated,
    };
    tracing::info!(
        scenario = %inputs.scenario.id,
        episode = inputs.episode_index,
        outcome = ?outcome,
        steps = state.steps_taken,
        goals = state.goals_proposed,
        "episode finished"
    );
    Ok(Episode {
        scenario_id: inputs.scenario.id.clone(),
        task_type: inputs.scenario.task_type.clone(),
        episode_index: inputs.episode_index,
        trajectory,
        outcome,
        reward,
        termination,
    })
}

/// The first prompt an episode would send: the goal cue on a fresh reset.
pub fn first_prompt(
    scenario: &Scenario,
    memory: &LongTermMemory,
    examples: &[FewShotExample],
    config: &RunConfig,
) -> Result<String, EngineError> {
    let mut env = crate::envs::make_env(scenario.env);
    let task = env.reset(scenario)?;
    let trajectory = Trajectory::new();
    let routed = route_reflections(memory, Tag::Goal);
    let bundle = PromptBundle::new(&task, &trajectory, Tag::Goal)
        .examples(examples)
        .reflections(&routed)
        .style(config.mode.style());
    Ok(assemble_prompt(&bundle, config.char_budget)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(phase: Phase, steps: usize, goals: usize) -> EngineState {
        EngineState {
            phase,
            active_goal: None,
            steps_taken: steps,
            goals_proposed: goals,
        }
    }

    fn cfg() -> RunConfig {
        RunConfig::for_env(EnvId::MiniHouse, Mode::Hmr)
    }

    #[test]
    fn transitions() {
        let c = cfg();
        assert_eq!(
            next_cue(&state(Phase::NeedGoal, 0, 1), None, false, &c),
            Phase::NeedThink
        );
        assert_eq!(
            next_cue(&state(Phase::NeedThink, 0, 1), None, false, &c),
            Phase::NeedAction
        );
        assert_eq!(
            next_cue(&state(Phase::NeedAction, 0, 1), None, false, &c),
            Phase::NeedFinish
        );
        assert_eq!(
            next_cue(&state(Phase::NeedFinish, 1, 1), Some(true), false, &c),
            Phase::NeedGoal
        );
        assert_eq!(
            next_cue(&state(Phase::NeedFinish, 1, 1), Some(false), false, &c),
            Phase::NeedAction
        );
        assert_eq!(next_cue(&state(Phase::NeedAction, 1, 1), None, true, &c), Phase::Done);
    }

    #[test]
    fn caps_end_the_episode() {
        let c = cfg();
        assert_eq!(
            transition(&state(Phase::NeedFinish, 40, 1), Some(false), false, &c),
            Err(Termination::StepCap)
        );
        assert_eq!(
            transition(&state(Phase::NeedFinish, 3, 10), Some(true), false, &c),
            Err(Termination::GoalCap)
        );
        assert_eq!(
            transition(&state(Phase::NeedFinish, 3, 10), Some(false), false, &c),
            Ok(Phase::NeedAction)
        );
        assert_eq!(
            transition(&state(Phase::NeedThink, 3, 11), None, false, &c),
            Err(Termination::GoalCap)
        );
    }

    #[test]
    fn mode_names() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!("tags".parse::<Mode>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        assert!(c.validate().is_ok());
        c.gamma = 0.0;
        assert!(c.validate().is_err());
        c.gamma = 1.0;
        c.max_goals = 0;
        assert!(c.validate().is_err());
    }
}
