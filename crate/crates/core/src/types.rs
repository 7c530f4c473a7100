//! Domain types shared by every module: tags, steps, goals, trajectories,
//! episodes, reflections and few-shot exemplars.
//!
//! A [`Trajectory`] can only be grown through its `push_*` methods, which
//! enforce the tag grammar `(Goal Think (Action Finish)*)+` at construction
//! time. [`check_grammar`] re-validates an arbitrary step list (used on
//! deserialized data and in tests).

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// One of the four cue tags structuring generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    #[serde(rename = "[Goal]")]
    Goal,
    #[serde(rename = "[Think]")]
    Think,
    #[serde(rename = "[Action]")]
    Action,
    #[serde(rename = "[Finish]")]
    Finish,
}

impl Tag {
    pub const ALL: [Tag; 4] = [Tag::Goal, Tag::Think, Tag::Action, Tag::Finish];

    /// The literal serialized form, e.g. `"[Goal]"`.
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Goal => "[Goal]",
            Tag::Think => "[Think]",
            Tag::Action => "[Action]",
            Tag::Finish => "[Finish]",
        }
    }

    /// Lower-case keyword used by the tag-free prompting mode (`goal:`, `think:` ...).
    pub fn keyword(self) -> &'static str {
        match self {
            Tag::Goal => "goal",
            Tag::Think => "think",
            Tag::Action => "action",
            Tag::Finish => "finish",
        }
    }

    pub fn from_literal(s: &str) -> Option<Tag> {
        Tag::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single tag-labeled record in an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub index: usize,
    pub tag: Tag,
    /// Goal text, thought, action string, or `"Yes"`/`"No"` for Finish.
    pub content: String,
    /// Environment observation; present exactly when `tag == Action`.
    pub observation: Option<String>,
    /// Raw completion text before parsing (debug only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

impl Step {
    /// `true` for a Finish step whose verdict is "Yes".
    pub fn is_finish_yes(&self) -> bool {
        self.tag == Tag::Finish && self.content == FINISH_YES
    }
}

pub const FINISH_YES: &str = "Yes";
pub const FINISH_NO: &str = "No";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalStatus {
    Active,
    Finished,
    OpenAtTermination,
}

/// A natural-language sub-task proposed by the high-level policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub id: usize,
    pub text: String,
    pub status: GoalStatus,
    /// Index of the Goal step that introduced it.
    pub proposed_at: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("step {index}: expected {expected}, found {found}")]
    Unexpected {
        index: usize,
        expected: &'static str,
        found: Tag,
    },
    #[error("step {index}: index out of sequence (expected {expected})")]
    Index { index: usize, expected: usize },
    #[error("step {index}: empty content")]
    EmptyContent { index: usize },
    #[error("step {index}: observation must be present iff tag is [Action]")]
    Observation { index: usize },
    #[error("step {index}: finish verdict must be Yes or No, found {content:?}")]
    Verdict { index: usize, content: String },
}

/// Grammar position after consuming a prefix of steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GrammarState {
    /// Start of the episode or right after a Finish=Yes.
    ExpectGoal,
    ExpectThink,
    ExpectAction,
    ExpectFinish,
}

impl GrammarState {
    fn expected(self) -> &'static str {
        match self {
            GrammarState::ExpectGoal => "[Goal]",
            GrammarState::ExpectThink => "[Think]",
            GrammarState::ExpectAction => "[Action]",
            GrammarState::ExpectFinish => "[Finish]",
        }
    }

    fn advance(self, step: &Step) -> Result<GrammarState, GrammarError> {
        let index = step.index;
        if step.content.trim().is_empty() {
            return Err(GrammarError::EmptyContent { index });
        }
        if step.observation.is_some() != (step.tag == Tag::Action) {
            return Err(GrammarError::Observation { index });
        }
        let next = match (self, step.tag) {
            (GrammarState::ExpectGoal, Tag::Goal) => GrammarState::ExpectThink,
            (GrammarState::ExpectThink, Tag::Think) => GrammarState::ExpectAction,
            (GrammarState::ExpectAction, Tag::Action) => GrammarState::ExpectFinish,
            (GrammarState::ExpectFinish, Tag::Finish) => match step.content.as_str() {
                FINISH_YES => GrammarState::ExpectGoal,
                FINISH_NO => GrammarState::ExpectAction,
                other => {
                    return Err(GrammarError::Verdict {
                        index,
                        content: other.to_string(),
                    })
                }
            },
            (state, found) => {
                return Err(GrammarError::Unexpected {
                    index,
                    expected: state.expected(),
                    found,
                })
            }
        };
        Ok(next)
    }
}

/// Validate a step list against `(Goal Think (Action Finish)*)+`, allowing the
/// list to stop anywhere (termination cut). A Goal may only open the episode
/// or follow a Finish=Yes; a Finish=No is followed by another Action.
pub fn check_grammar(steps: &[Step]) -> Result<(), GrammarError> {
    let mut state = GrammarState::ExpectGoal;
    for (expected, step) in steps.iter().enumerate() {
        if step.index != expected {
            return Err(GrammarError::Index {
                index: step.index,
                expected,
            });
        }
        state = state.advance(step)?;
    }
    Ok(())
}

/// Short-term memory: the ordered steps and goals of one episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub goals: Vec<Goal>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuild from persisted parts, validating the grammar.
    pub fn from_parts(steps: Vec<Step>, goals: Vec<Goal>) -> Result<Self, GrammarError> {
        check_grammar(&steps)?;
        Ok(Trajectory { steps, goals })
    }

    // The grammar position depends only on the last step.
    fn current_state(&self) -> GrammarState {
        match self.steps.last() {
            None => GrammarState::ExpectGoal,
            Some(step) => match step.tag {
                Tag::Goal => GrammarState::ExpectThink,
                Tag::Think => GrammarState::ExpectAction,
                Tag::Action => GrammarState::ExpectFinish,
                Tag::Finish if step.is_finish_yes() => GrammarState::ExpectGoal,
                Tag::Finish => GrammarState::ExpectAction,
            },
        }
    }

    fn push(
        &mut self,
        tag: Tag,
        content: String,
        observation: Option<String>,
        raw: Option<String>,
    ) -> Result<usize, GrammarError> {
        let index = self.steps.len();
        let step = Step {
            index,
            tag,
            content,
            observation,
            raw,
        };
        self.current_state().advance(&step)?;
        self.steps.push(step);
        Ok(index)
    }

    /// Append a Goal step and mark the new goal active.
    pub fn propose_goal(&mut self, text: impl Into<String>) -> Result<&Goal, GrammarError> {
        let text = text.into();
        let index = self.push(Tag::Goal, text.clone(), None, None)?;
        let id = self.goals.len();
        self.goals.push(Goal {
            id,
            text,
            status: GoalStatus::Active,
            proposed_at: index,
        });
        Ok(&self.goals[id])
    }

    pub fn push_think(&mut self, thought: impl Into<String>) -> Result<(), GrammarError> {
        self.push(Tag::Think, thought.into(), None, None).map(drop)
    }

    pub fn push_action(
        &mut self,
        action: impl Into<String>,
        observation: impl Into<String>,
    ) -> Result<(), GrammarError> {
        self.push(Tag::Action, action.into(), Some(observation.into()), None)
            .map(drop)
    }

    /// Append a Finish verdict; a `true` verdict closes the active goal.
    pub fn push_finish(&mut self, achieved: bool, raw: Option<String>) -> Result<(), GrammarError> {
        let content = if achieved { FINISH_YES } else { FINISH_NO };
        self.push(Tag::Finish, content.to_string(), None, raw)?;
        if achieved {
            if let Some(goal) = self.goals.iter_mut().find(|g| g.status == GoalStatus::Active) {
                goal.status = GoalStatus::Finished;
            }
        }
        Ok(())
    }

    /// Mark the active goal (if any) as open at termination.
    pub fn close(&mut self) {
        for goal in &mut self.goals {
            if goal.status == GoalStatus::Active {
                goal.status = GoalStatus::OpenAtTermination;
            }
        }
    }

    pub fn active_goal(&self) -> Option<&Goal> {
        self.goals.iter().find(|g| g.status == GoalStatus::Active)
    }

    pub fn finished_goals(&self) -> usize {
        self.goals.iter().filter(|g| g.status == GoalStatus::Finished).count()
    }

    pub fn action_count(&self) -> usize {
        self.steps.iter().filter(|s| s.tag == Tag::Action).count()
    }

    /// Index of the first step after the last Finish=Yes (0 when none).
    pub fn active_segment_start(&self) -> usize {
        self.steps.iter().rposition(Step::is_finish_yes).map_or(0, |i| i + 1)
    }

    /// Steps after the last completed goal.
    pub fn active_segment(&self) -> &[Step] {
        &self.steps[self.active_segment_start()..]
    }

    /// The tag the grammar expects next.
    pub fn expected_tag(&self) -> Tag {
        match self.current_state() {
            GrammarState::ExpectGoal => Tag::Goal,
            GrammarState::ExpectThink => Tag::Think,
            GrammarState::ExpectAction => Tag::Action,
            GrammarState::ExpectFinish => Tag::Finish,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
    Truncated,
}

/// Why an episode stopped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    /// The environment reported `done`.
    EnvDone,
    StepCap,
    GoalCap,
    /// Too many consecutive unparseable completions for one cue.
    ParseAbort {
        cue: Tag,
    },
    /// The prompt no longer fits the character budget.
    Budget {
        detail: String,
    },
    /// The completion backend failed.
    Backend {
        error: String,
    },
}

/// One complete attempt at a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub scenario_id: String,
    pub task_type: String,
    /// 1-based.
    pub episode_index: u32,
    pub trajectory: Trajectory,
    pub outcome: Outcome,
    /// Terminal environment reward in `[0, 1]`.
    pub reward: f64,
    pub termination: Termination,
}

impl Episode {
    pub fn is_success(&self) -> bool {
        self.outcome == Outcome::Success
    }

    /// Discounted return of the sparse terminal reward, received on the last
    /// environment step.
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let actions = self.trajectory.action_count();
        if actions == 0 {
            return 0.0;
        }
        self.reward * gamma.powi(actions as i32 - 1)
    }
}

/// Which policy a reflection is meant to correct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectionLevel {
    /// Per sub-goal lesson for the low-level policy.
    Low,
    /// Lesson on the goal sequence for the high-level policy.
    High,
    /// Whole-trajectory lesson (Reflexion ablation).
    Full,
    /// A raw failed trajectory stored verbatim (retry ablation).
    Trajectory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reflection {
    pub level: ReflectionLevel,
    /// The sub-goal the lesson is about; present iff `level == Low`.
    pub goal_text: Option<String>,
    pub body: String,
    pub source_episode: u32,
    pub source_scenario: String,
}

/// A bundled few-shot exemplar: a full successful trajectory in tag format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub env_id: String,
    pub task_type: String,
    pub body: String,
}

/// Per-step JSONL line or the per-episode trailer.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpisodeLine {
    Trailer(EpisodeTrailer),
    Step(Step),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrailer {
    pub scenario: String,
    pub task_type: String,
    pub episode: u32,
    pub outcome: Outcome,
    pub reward: f64,
    pub goals: Vec<Goal>,
    pub termination: Termination,
}

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("episode ending at line {line}: {source}")]
    Grammar {
        line: usize,
        #[source]
        source: GrammarError,
    },
    #[error("{0} trailing step line(s) without an episode trailer")]
    Unterminated(usize),
}

impl Episode {
    /// Serialize as JSON Lines: one object per step plus a trailing episode object.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for step in &self.trajectory.steps {
            out.push_str(&serde_json::to_string(step).expect("step serializes"));
            out.push('\n');
        }
        let trailer = EpisodeTrailer {
            scenario: self.scenario_id.clone(),
            task_type: self.task_type.clone(),
            episode: self.episode_index,
            outcome: self.outcome,
            reward: self.reward,
            goals: self.trajectory.goals.clone(),
            termination: self.termination.clone(),
        };
        out.push_str(&serde_json::to_string(&trailer).expect("trailer serializes"));
        out.push('\n');
        out
    }

    pub fn from_parts(steps: Vec<Step>, trailer: EpisodeTrailer) -> Result<Episode, GrammarError> {
        Ok(Episode {
            scenario_id: trailer.scenario,
            task_type: trailer.task_type,
            episode_index: trailer.episode,
            trajectory: Trajectory::from_parts(steps, trailer.goals)?,
            outcome: trailer.outcome,
            reward: trailer.reward,
            termination: trailer.termination,
        })
    }
}

/// Parse a JSON Lines stream of episodes. Blank lines are ignored.
pub fn parse_episodes_jsonl(text: &str) -> Result<Vec<Episode>, JsonlError> {
    let mut episodes = Vec::new();
    let mut pending = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: EpisodeLine =
            serde_json::from_str(line).map_err(|source| JsonlError::Json { line: i + 1, source })?;
        match parsed {
            EpisodeLine::Step(step) => pending.push(step),
            EpisodeLine::Trailer(trailer) => {
                let steps = std::mem::take(&mut pending);
                let episode = Episode::from_parts(steps, trailer)
                    .map_err(|source| JsonlError::Grammar { line: i + 1, source })?;
                episodes.push(episode);
            }
        }
    }
    if !pending.is_empty() {
        return Err(JsonlError::Unterminated(pending.len()));
    }
    Ok(episodes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trajectory {
        let mut t = Trajectory::new();
        t.propose_goal("find a mug").unwrap();
        t.push_think("The mug is probably on the countertop.").unwrap();
        t.push_action("go to countertop 1", "You arrive at countertop 1.")
            .unwrap();
        t.push_finish(false, None).unwrap();
        t.push_action(
            "take mug 1 from countertop 1",
            "You pick up the mug 1 from the countertop 1.",
        )
        .unwrap();
        t.push_finish(true, Some("Yes, I have it.".into())).unwrap();
        t.propose_goal("cool the mug").unwrap();
        t
    }

    #[test]
    fn tag_literals() {
        let lits: Vec<_> = Tag::ALL.iter().map(|t| t.as_str()).collect();
        assert_eq!(lits, ["[Goal]", "[Think]", "[Action]", "[Finish]"]);
        assert_eq!(serde_json::to_string(&Tag::Finish).unwrap(), "\"[Finish]\"");
        assert_eq!(Tag::from_literal("[Think]"), Some(Tag::Think));
        assert_eq!(Tag::from_literal("Think"), None);
    }

    #[test]
    fn push_enforces_grammar() {
        let mut t = Trajectory::new();
        assert!(t.push_think("x").is_err());
        t.propose_goal("g").unwrap();
        assert!(t.push_action("a", "o").is_err());
        t.push_think("plan").unwrap();
        assert!(t.propose_goal("g2").is_err());
        t.push_action("a", "o").unwrap();
        assert!(t.push_action("a", "o").is_err());
        t.push_finish(false, None).unwrap();
        assert!(t.propose_goal("g2").is_err());
        assert!(t.push_think("").is_err());
    }

    #[test]
    fn goal_lifecycle() {
        let mut t = sample();
        assert_eq!(t.goals[0].status, GoalStatus::Finished);
        assert_eq!(t.active_goal().unwrap().text, "cool the mug");
        assert_eq!(t.active_segment_start(), 6);
        t.close();
        assert_eq!(t.goals[1].status, GoalStatus::OpenAtTermination);
        assert!(t.active_goal().is_none());
        check_grammar(&t.steps).unwrap();
    }

    #[test]
    fn grammar_rejects_bad_lists() {
        let t = sample();
        let mut steps = t.steps.clone();
        steps[3].content = "Maybe".into();
        assert!(matches!(check_grammar(&steps), Err(GrammarError::Verdict { .. })));
        let mut steps = t.steps.clone();
        steps[2].observation = None;
        assert!(matches!(check_grammar(&steps), Err(GrammarError::Observation { .. })));
        let mut steps = t.steps.clone();
        steps.remove(1);
        assert!(check_grammar(&steps).is_err());
        assert!(check_grammar(&[]).is_ok());
    }

    #[test]
    fn jsonl_roundtrip_and_keys() {
        let mut t = sample();
        t.close();
        let ep = Episode {
            scenario_id: "house-cool-1".into(),
            task_type: "cool".into(),
            episode_index: 1,
            trajectory: t,
            outcome: Outcome::Failure,
            reward: 0.0,
            termination: Termination::StepCap,
        };
        let text = ep.to_jsonl();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["index", "tag", "content", "observation"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        assert!(first["observation"].is_null());
        let last: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
        for key in ["outcome", "reward", "goals"] {
            assert!(last.get(key).is_some(), "missing {key}");
        }
        let back = parse_episodes_jsonl(&text).unwrap();
        assert_eq!(back, vec![ep]);
    }

    #[test]
    fn unterminated_jsonl_is_reported() {
        let ep = Episode {
            scenario_id: "s".into(),
            task_type: "t".into(),
            episode_index: 1,
            trajectory: sample(),
            outcome: Outcome::Truncated,
            reward: 0.0,
            termination: Termination::GoalCap,
        };
        let text = ep.to_jsonl();
        let cut: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(matches!(parse_episodes_jsonl(&cut), Err(JsonlError::Unterminated(3))));
    }

    #[test]
    fn discounted_return_uses_terminal_step() {
        let mut t = Trajectory::new();
        t.propose_goal("g").unwrap();
        t.push_think("p").unwrap();
        for _ in 0..3 {
            t.push_action("a", "o").unwrap();
            t.push_finish(false, None).unwrap();
        }
        let ep = Episode {
            scenario_id: "s".into(),
            task_type: "t".into(),
            episode_index: 1,
            trajectory: t,
            outcome: Outcome::Success,
            reward: 1.0,
            termination: Termination::EnvDone,
        };
        assert_eq!(ep.discounted_return(1.0), 1.0);
        assert!((ep.discounted_return(0.9) - 0.81).abs() < 1e-12);
    }
}
