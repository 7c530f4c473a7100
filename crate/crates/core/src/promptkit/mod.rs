//! Prompt assembly and completion parsing.

mod assemble;
pub mod fixtures;
mod parse;
mod render;

pub use assemble::{
    assemble_prompt, elision_line, finish_question, render_examples, render_memory, PromptBundle, PromptError,
    ATTEMPTS_HEADER, DEFAULT_CHAR_BUDGET, FREE_CUE, LESSONS_HEADER,
};
pub use parse::{parse_action, parse_finish, parse_free_step, parse_goal, parse_think, strip_tag_echo, ParseError};
pub use render::{
    parse_tagged, render_step, render_steps, render_trajectory, restyle, split_preamble, GrammarParseError, ParsedStep,
    OBSERVATION_PREFIX,
};

use serde::{Deserialize, Serialize};

/// How steps are presented to the model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    /// `[Goal] ...` lines and an explicit cue tag.
    #[default]
    Tagged,
    /// `goal: ...` lines; the model picks its own next step type.
    TagFree,
}
