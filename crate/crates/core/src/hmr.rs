//! Hindsight modular reflection.
//!
//! A failed episode is cut at its Finish=Yes steps. Each finished sub-goal gets
//! a low-level reflection written with the sub-goal (not the task) as the
//! objective; the goal sequence as a whole gets one high-level reflection.
//! Stored reflections are routed back by cue: high-level lessons to the goal
//! proposer, low-level lessons to the thinker and actor, nothing to the
//! finisher.

use crate::backend::{BackendError, CompletionBackend, CompletionRequest, RoleHint, SessionKey};
use crate::engine::Mode;
use crate::memory::LongTermMemory;
use crate::promptkit::fixtures::{FULL_REFLECTION_EXEMPLARS, HIGH_REFLECTION_EXEMPLARS, LOW_REFLECTION_EXEMPLARS};
use crate::promptkit::{render_steps, render_trajectory, PromptStyle};
use crate::types::{Episode, Goal, GoalStatus, Outcome, Reflection, ReflectionLevel, Step, Tag, Trajectory};
use serde::{Deserialize, Serialize};

pub const NOTHING_TO_REFLECT: &str = "Nothing to reflect.";
pub const DEFAULT_REFLECTION_CAP: usize = 320;

const LOW_INSTRUCTIONS: &str = "You are reviewing how an agent pursued one sub-goal during a failed attempt. \
Judge the steps only against the sub-goal, not the overall task. \
The trajectory might be correct and there might be nothing to reflect on; in that case reply exactly \
\"Nothing to reflect.\" Otherwise reply with one or two sentences naming the mistake and what to do instead.";

const HIGH_INSTRUCTIONS: &str =
    "You are reviewing the sequence of sub-goals an agent proposed during a failed attempt. \
The sub-goals might be correct and there might be nothing to reflect on at this level; if so, say which sub-goal \
needs more care. Otherwise reply with one or two sentences naming the wrong or missing sub-goal and the sequence \
to use instead.";

const FULL_INSTRUCTIONS: &str = "You are reviewing a failed attempt at a task. \
Reply with one or two sentences naming the mistake and a plan that avoids it.";

/// The steps serving one goal.
#[derive(Debug, Clone, PartialEq)]
pub struct SubTrajectory {
    pub goal: Goal,
    pub steps: Vec<Step>,
}

impl SubTrajectory {
    /// Ends with Finish=Yes.
    pub fn is_finished(&self) -> bool {
        self.steps.last().is_some_and(Step::is_finish_yes)
    }

    pub fn action_count(&self) -> usize {
        self.steps.iter().filter(|s| s.tag == Tag::Action).count()
    }
}

/// Partition a grammar-valid trajectory at its Finish=Yes steps. The open tail,
/// if any, is the last segment.
pub fn segment_by_finish(trajectory: &Trajectory) -> Vec<SubTrajectory> {
    let steps = &trajectory.steps;
    let mut segments = Vec::new();
    let mut start = 0;
    for end in 0..steps.len() {
        let closes = steps[end].is_finish_yes();
        if closes || end + 1 == steps.len() {
            let slice = &steps[start..=end];
            let id = segments.len();
            let goal = trajectory.goals.get(id).cloned().unwrap_or_else(|| Goal {
                id,
                text: slice
                    .iter()
                    .find(|s| s.tag == Tag::Goal)
                    .map(|s| s.content.clone())
                    .unwrap_or_default(),
                status: if closes {
                    GoalStatus::Finished
                } else {
                    GoalStatus::OpenAtTermination
                },
                proposed_at: start,
            });
            segments.push(SubTrajectory {
                goal,
                steps: slice.to_vec(),
            });
            start = end + 1;
        }
    }
    segments
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HmrOptions {
    /// Also reflect on the unfinished last segment.
    pub include_tail: bool,
    /// Maximum reflection body length in characters.
    pub cap: usize,
    pub style: PromptStyle,
    /// Treat "Nothing to reflect." as a normal body instead of dropping it.
    pub disable_sentinel: bool,
}

impl Default for HmrOptions {
    fn default() -> Self {
        HmrOptions {
            include_tail: false,
            cap: DEFAULT_REFLECTION_CAP,
            style: PromptStyle::Tagged,
            disable_sentinel: false,
        }
    }
}

impl HmrOptions {
    pub fn for_mode(mode: Mode) -> Self {
        HmrOptions {
            style: mode.style(),
            ..Self::default()
        }
    }
}

/// Collapse whitespace, drop an echoed "Reflection:" label and cut to `cap`
/// characters at the last sentence boundary that fits.
pub fn cap_body(text: &str, cap: usize) -> String {
    let mut body = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if let Some(rest) = body.strip_prefix("Reflection:") {
        body = rest.trim_start().to_string();
    }
    if body.chars().count() <= cap {
        return body;
    }
    let cut: String = body.chars().take(cap).collect();
    let boundary = cut
        .char_indices()
        .rev()
        .find(|&(i, c)| matches!(c, '.' | '!' | '?') && cut[i + 1..].chars().next().is_none_or(char::is_whitespace))
        .map(|(i, _)| i + 1);
    match boundary {
        Some(end) => cut[..end].to_string(),
        None => cut.trim_end().to_string(),
    }
}

fn is_sentinel(body: &str) -> bool {
    body.is_empty()
        || body
            .trim_end_matches('.')
            .eq_ignore_ascii_case(NOTHING_TO_REFLECT.trim_end_matches('.'))
}

fn style_exemplar(text: &str, style: PromptStyle) -> String {
    let text = text.trim_end();
    if style == PromptStyle::Tagged {
        return text.to_string();
    }
    text.lines()
        .map(|line| {
            for tag in Tag::ALL {
                if let Some(rest) = line.strip_prefix(tag.as_str()) {
                    return format!("{}:{rest}", tag.keyword());
                }
            }
            match line.strip_prefix("Observation:") {
                Some(rest) => format!("observation:{rest}"),
                None => line.to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn build_prompt(instructions: &str, exemplars: &[&str], body: &str, style: PromptStyle) -> String {
    let mut parts = vec![instructions.to_string(), "Examples:".to_string()];
    parts.extend(exemplars.iter().map(|e| style_exemplar(e, style)));
    parts.push(format!("{body}\nReflection:"));
    parts.join("\n\n")
}

fn status_label(status: GoalStatus) -> &'static str {
    match status {
        GoalStatus::Finished => "finished",
        GoalStatus::Active => "active",
        GoalStatus::OpenAtTermination => "open at termination",
    }
}

fn outcome_label(outcome: Outcome) -> &'static str {
    match outcome {
        Outcome::Success => "success",
        Outcome::Failure => "failure",
        Outcome::Truncated => "truncated",
    }
}

pub fn low_prompt(segment: &SubTrajectory, style: PromptStyle) -> String {
    let body = format!(
        "Sub-goal: {}\n{}",
        segment.goal.text,
        render_steps(&segment.steps, style).join("\n")
    );
    build_prompt(LOW_INSTRUCTIONS, &LOW_REFLECTION_EXEMPLARS, &body, style)
}

pub fn high_prompt(task: &str, goals: &[Goal], outcome: Outcome, style: PromptStyle) -> String {
    let list: Vec<String> = goals
        .iter()
        .enumerate()
        .map(|(i, g)| format!("{}. {} ({})", i + 1, g.text, status_label(g.status)))
        .collect();
    let body = format!(
        "Task: {task}\nSub-goals:\n{}\nOutcome: {}",
        list.join("\n"),
        outcome_label(outcome)
    );
    build_prompt(HIGH_INSTRUCTIONS, &HIGH_REFLECTION_EXEMPLARS, &body, style)
}

pub fn full_prompt(task: &str, episode: &Episode, style: PromptStyle) -> String {
    let body = format!(
        "Task: {task}\n{}\nOutcome: {}",
        render_trajectory(&episode.trajectory.steps, style),
        outcome_label(episode.outcome)
    );
    build_prompt(FULL_INSTRUCTIONS, &FULL_REFLECTION_EXEMPLARS, &body, style)
}

fn ask<B: CompletionBackend + ?Sized>(
    backend: &B,
    episode: &Episode,
    role: RoleHint,
    prompt: String,
    cap: usize,
) -> Result<String, BackendError> {
    let session = SessionKey::new(episode.scenario_id.clone(), episode.episode_index);
    let response = backend.complete(&CompletionRequest::new(session, role, prompt))?;
    Ok(cap_body(&response.text, cap))
}

/// Low-level reflection on one segment; `None` for the sentinel answer or a
/// segment without actions.
pub fn reflect_low<B: CompletionBackend + ?Sized>(
    episode: &Episode,
    segment: &SubTrajectory,
    backend: &B,
    opts: &HmrOptions,
) -> Result<Option<Reflection>, BackendError> {
    if segment.action_count() == 0 {
        tracing::warn!(goal = %segment.goal.text, "segment without actions, skipping reflection");
        return Ok(None);
    }
    let body = ask(
        backend,
        episode,
        RoleHint::ReflectLow,
        low_prompt(segment, opts.style),
        opts.cap,
    )?;
    if !opts.disable_sentinel && is_sentinel(&body) {
        return Ok(None);
    }
    Ok(Some(Reflection {
        level: ReflectionLevel::Low,
        goal_text: Some(segment.goal.text.clone()),
        body,
        source_episode: episode.episode_index,
        source_scenario: episode.scenario_id.clone(),
    }))
}

/// High-level reflection on the goal sequence. Always yields an entry; an
/// empty answer is stored as the sentinel text.
pub fn reflect_high<B: CompletionBackend + ?Sized>(
    task: &str,
    episode: &Episode,
    backend: &B,
    opts: &HmrOptions,
) -> Result<Reflection, BackendError> {
    let goals = &episode.trajectory.goals;
    if goals.is_empty() {
        return Err(BackendError::Input(
            "high-level reflection needs at least one goal".into(),
        ));
    }
    let prompt = high_prompt(task, goals, episode.outcome, opts.style);
    let body = ask(backend, episode, RoleHint::ReflectHigh, prompt, opts.cap)?;
    Ok(Reflection {
        level: ReflectionLevel::High,
        goal_text: None,
        body: if body.is_empty() {
            NOTHING_TO_REFLECT.to_string()
        } else {
            body
        },
        source_episode: episode.episode_index,
        source_scenario: episode.scenario_id.clone(),
    })
}

/// Reflexion-style single reflection over the whole trajectory.
pub fn reflect_full<B: CompletionBackend + ?Sized>(
    task: &str,
    episode: &Episode,
    backend: &B,
    opts: &HmrOptions,
) -> Result<Reflection, BackendError> {
    let body = ask(
        backend,
        episode,
        RoleHint::ReflectFull,
        full_prompt(task, episode, opts.style),
        opts.cap,
    )?;
    Ok(Reflection {
        level: ReflectionLevel::Full,
        goal_text: None,
        body: if body.is_empty() {
            NOTHING_TO_REFLECT.to_string()
        } else {
            body
        },
        source_episode: episode.episode_index,
        source_scenario: episode.scenario_id.clone(),
    })
}

/// n low-level reflections (one per finished goal, minus sentinel drops) and
/// one high-level reflection. Requests run in segment order; any backend
/// error discards the whole batch. Successful episodes yield nothing.
pub fn run_hmr<B: CompletionBackend + ?Sized>(
    task: &str,
    episode: &Episode,
    backend: &B,
    opts: &HmrOptions,
) -> Result<Vec<Reflection>, BackendError> {
    if episode.outcome == Outcome::Success || episode.trajectory.goals.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for segment in segment_by_finish(&episode.trajectory) {
        if segment.is_finished() || opts.include_tail {
            out.extend(reflect_low(episode, &segment, backend, opts)?);
        }
    }
    out.push(reflect_high(task, episode, backend, opts)?);
    Ok(out)
}

/// The stored form of a failed trajectory in the retry ablation.
pub fn retry_entry(episode: &Episode) -> Reflection {
    Reflection {
        level: ReflectionLevel::Trajectory,
        goal_text: None,
        body: render_trajectory(&episode.trajectory.steps, PromptStyle::Tagged),
        source_episode: episode.episode_index,
        source_scenario: episode.scenario_id.clone(),
    }
}

/// Apply `mode`'s learning rule to a finished episode.
pub fn learn<B: CompletionBackend + ?Sized>(
    mode: Mode,
    task: &str,
    episode: &Episode,
    backend: &B,
    opts: &HmrOptions,
) -> Result<Vec<Reflection>, BackendError> {
    if episode.outcome == Outcome::Success {
        return Ok(Vec::new());
    }
    match mode {
        Mode::Hmr | Mode::Notag => run_hmr(task, episode, backend, opts),
        Mode::Reflexion => {
            if episode.trajectory.is_empty() {
                return Ok(Vec::new());
            }
            reflect_full(task, episode, backend, opts).map(|r| vec![r])
        }
        Mode::Retry => Ok(if episode.trajectory.is_empty() {
            Vec::new()
        } else {
            vec![retry_entry(episode)]
        }),
    }
}

/// Reflections shown with `cue`: high-level (goal proposer), low-level (thinker
/// and actor), full and raw-trajectory entries to both, none to the finisher.
pub fn route_reflections(memory: &LongTermMemory, cue: Tag) -> Vec<Reflection> {
    memory
        .reflections()
        .iter()
        .filter(|r| match (cue, r.level) {
            (Tag::Finish, _) => false,
            (_, ReflectionLevel::Full | ReflectionLevel::Trajectory) => true,
            (Tag::Goal, level) => level == ReflectionLevel::High,
            (Tag::Think | Tag::Action, level) => level == ReflectionLevel::Low,
        })
        .cloned()
        .collect()
}
