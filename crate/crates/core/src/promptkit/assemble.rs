//! Three-part prompt assembly under a character budget.
//!
//! Layout (blocks separated by a blank line):
//!
//! ```text
//! <examples header + few-shot examples>      droppable, last example first
//! Lessons from past attempts:                omitted when empty
//! - ...
//! Previous failed attempts:                  retry ablation only
//! ...
//! <task>
//! <trajectory so far>                        oldest finished sub-goals elided first
//! <cue>
//! ```
//!
//! For the Finish cue the trajectory block holds only the steps after the last
//! completed goal, followed by the yes/no question.

use super::render::{render_steps, restyle};
use super::PromptStyle;
use crate::types::{FewShotExample, Goal, Reflection, ReflectionLevel, Step, Tag, Trajectory};
use thiserror::Error;

pub const DEFAULT_CHAR_BUDGET: usize = 24_000;
pub const LESSONS_HEADER: &str = "Lessons from past attempts:";
pub const ATTEMPTS_HEADER: &str = "Previous failed attempts:";
pub const TAGGED_EXAMPLES_HEADER: &str =
    "Solve the task step by step using the tags [Goal], [Think], [Action] and [Finish]. Here are examples:";
pub const FREE_EXAMPLES_HEADER: &str =
    "Solve the task step by step. Start every line with goal:, think:, action: or finish:. Here are examples:";
pub const FREE_CUE: &str = "Next step:";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("prompt needs at least {required} characters but the budget is {budget}")]
    Budget { required: usize, budget: usize },
    #[error("invalid prompt bundle: {0}")]
    Invalid(String),
}

/// Everything needed to build the prompt for one cue.
#[derive(Debug, Clone, Copy)]
pub struct PromptBundle<'a> {
    pub examples: &'a [FewShotExample],
    /// Already routed for this cue.
    pub reflections: &'a [Reflection],
    pub task: &'a str,
    pub trajectory: &'a Trajectory,
    pub cue: Tag,
    /// The goal being judged; required when `cue == Finish`.
    pub goal_context: Option<&'a Goal>,
    pub style: PromptStyle,
}

impl<'a> PromptBundle<'a> {
    pub fn new(task: &'a str, trajectory: &'a Trajectory, cue: Tag) -> Self {
        PromptBundle {
            examples: &[],
            reflections: &[],
            task,
            trajectory,
            cue,
            goal_context: None,
            style: PromptStyle::Tagged,
        }
    }

    pub fn examples(mut self, examples: &'a [FewShotExample]) -> Self {
        self.examples = examples;
        self
    }

    pub fn reflections(mut self, reflections: &'a [Reflection]) -> Self {
        self.reflections = reflections;
        self
    }

    pub fn goal_context(mut self, goal: Option<&'a Goal>) -> Self {
        self.goal_context = goal;
        self
    }

    pub fn style(mut self, style: PromptStyle) -> Self {
        self.style = style;
        self
    }
}

pub fn finish_question(goal: &str) -> String {
    format!("Has the goal '{goal}' been achieved? Answer Yes or No.")
}

pub fn elision_line(k: usize) -> String {
    format!("…({k} earlier sub-goals completed)…")
}

fn chars(s: &str) -> usize {
    s.chars().count()
}

/// Render the examples section for `style`; empty when there are no examples.
pub fn render_examples(examples: &[FewShotExample], style: PromptStyle) -> String {
    if examples.is_empty() {
        return String::new();
    }
    let header = match style {
        PromptStyle::Tagged => TAGGED_EXAMPLES_HEADER,
        PromptStyle::TagFree => FREE_EXAMPLES_HEADER,
    };
    let mut parts = vec![header.to_string()];
    parts.extend(
        examples
            .iter()
            .map(|e| restyle(&e.body, style).unwrap_or_else(|_| e.body.trim_end().to_string())),
    );
    parts.join("\n\n")
}

/// Render routed reflections: a lessons list plus, for the retry ablation, raw
/// past attempts.
pub fn render_memory(reflections: &[Reflection]) -> Vec<String> {
    let lessons: Vec<String> = reflections
        .iter()
        .filter(|r| r.level != ReflectionLevel::Trajectory)
        .map(|r| match (&r.level, &r.goal_text) {
            (ReflectionLevel::Low, Some(goal)) => format!("- (sub-goal: {goal}) {}", r.body),
            _ => format!("- {}", r.body),
        })
        .collect();
    let attempts: Vec<String> = reflections
        .iter()
        .filter(|r| r.level == ReflectionLevel::Trajectory)
        .map(|r| format!("Attempt {}:\n{}", r.source_episode, r.body))
        .collect();
    let mut blocks = Vec::new();
    if !lessons.is_empty() {
        blocks.push(format!("{LESSONS_HEADER}\n{}", lessons.join("\n")));
    }
    if !attempts.is_empty() {
        blocks.push(format!("{ATTEMPTS_HEADER}\n{}", attempts.join("\n\n")));
    }
    blocks
}

/// Split steps into finished-goal segments (each ending in Finish=Yes) and the
/// active remainder.
fn finished_segments(steps: &[Step]) -> (Vec<&[Step]>, &[Step]) {
    let mut segments = Vec::new();
    let mut start = 0;
    for (i, s) in steps.iter().enumerate() {
        if s.is_finish_yes() {
            segments.push(&steps[start..=i]);
            start = i + 1;
        }
    }
    (segments, &steps[start..])
}

struct Layout {
    examples: Vec<String>,
    memory: Vec<String>,
    /// Finished segments, already rendered.
    finished: Vec<Vec<String>>,
    active: Vec<String>,
    task: String,
    cue_lines: Vec<String>,
    examples_header: &'static str,
}

impl Layout {
    fn render(&self, elided: usize, kept_examples: usize) -> String {
        let mut blocks = Vec::new();
        if kept_examples > 0 {
            let mut ex = vec![self.examples_header.to_string()];
            ex.extend(self.examples[..kept_examples].iter().cloned());
            blocks.push(ex.join("\n\n"));
        }
        blocks.extend(self.memory.iter().cloned());
        let mut tail = vec![self.task.clone()];
        if elided > 0 {
            tail.push(elision_line(elided));
        }
        for seg in &self.finished[elided..] {
            tail.extend(seg.iter().cloned());
        }
        tail.extend(self.active.iter().cloned());
        tail.extend(self.cue_lines.iter().cloned());
        blocks.push(tail.join("\n"));
        blocks.join("\n\n")
    }

    fn irreducible(&self) -> usize {
        chars(&self.task) + 1 + self.cue_lines.iter().map(|l| chars(l) + 1).sum::<usize>()
    }
}

/// Build the prompt for `bundle.cue` within `char_budget` characters.
///
/// Over budget, the oldest finished sub-goal segments are replaced by a single
/// elision line, then few-shot examples are dropped from the end. Reflections,
/// the active segment, the task and the cue are never cut; if they alone do not
/// fit, [`PromptError::Budget`] is returned.
pub fn assemble_prompt(bundle: &PromptBundle<'_>, char_budget: usize) -> Result<String, PromptError> {
    let style = bundle.style;
    let steps = &bundle.trajectory.steps;
    let (finished, active, cue_lines) = match (style, bundle.cue) {
        (PromptStyle::Tagged, Tag::Finish) => {
            let goal = bundle
                .goal_context
                .ok_or_else(|| PromptError::Invalid("Finish cue requires a goal".into()))?;
            let active = render_steps(bundle.trajectory.active_segment(), style);
            let cue = vec![finish_question(&goal.text), Tag::Finish.as_str().to_string()];
            (Vec::new(), active, cue)
        }
        _ => {
            let (segments, active) = finished_segments(steps);
            let finished: Vec<Vec<String>> = segments.iter().map(|s| render_steps(s, style)).collect();
            let cue = match style {
                PromptStyle::Tagged => bundle.cue.as_str().to_string(),
                PromptStyle::TagFree => FREE_CUE.to_string(),
            };
            (finished, render_steps(active, style), vec![cue])
        }
    };
    let examples_header = match style {
        PromptStyle::Tagged => TAGGED_EXAMPLES_HEADER,
        PromptStyle::TagFree => FREE_EXAMPLES_HEADER,
    };
    let layout = Layout {
        examples: bundle
            .examples
            .iter()
            .map(|e| restyle(&e.body, style).unwrap_or_else(|_| e.body.trim_end().to_string()))
            .collect(),
        memory: render_memory(bundle.reflections),
        finished,
        active,
        task: bundle.task.trim_end().to_string(),
        cue_lines,
        examples_header,
    };

    if layout.irreducible() > char_budget {
        return Err(PromptError::Budget {
            required: layout.irreducible(),
            budget: char_budget,
        });
    }
    let all_examples = layout.examples.len();
    let mut elided = 0;
    let mut kept = all_examples;
    loop {
        let text = layout.render(elided, kept);
        let len = chars(&text);
        if len <= char_budget {
            return Ok(text);
        }
        if elided < layout.finished.len() {
            elided += 1;
        } else if kept > 0 {
            kept -= 1;
        } else {
            return Err(PromptError::Budget {
                required: len,
                budget: char_budget,
            });
        }
    }
}
