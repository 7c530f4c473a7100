//! Deterministic text environments.
//!
//! Three desk-scale worlds share the [`TextEnv`] interface:
//!
//! | env         | actions                                                        |
//! |-------------|----------------------------------------------------------------|
//! | `minihouse` | `go to R`, `open R`, `take O from R`, `cool O with fridge N` … |
//! | `minishop`  | `search[q]`, `click[item-id]`, `click[option]`, `click[Buy Now]` |
//! | `miniwiki`  | `search[entity]`, `lookup[keyword]`, `finish[answer]`           |
//!
//! Scenarios ship as JSON packs (see [`pack`]). Unrecognized or inapplicable
//! actions return [`NOTHING_HAPPENS`] and leave the world untouched.

pub mod house;
pub mod pack;
pub mod shop;
pub mod wiki;

pub use house::MiniHouse;
pub use pack::{bundled_pack, bundled_scenarios, load_pack, Scenario, ScenarioPack, World};
pub use shop::{minishop_score, MiniShop};
pub use wiki::{miniwiki_normalize, MiniWiki};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const NOTHING_HAPPENS: &str = "Nothing happens.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    MiniHouse,
    MiniShop,
    MiniWiki,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [EnvId::MiniHouse, EnvId::MiniShop, EnvId::MiniWiki];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::MiniHouse => "minihouse",
            EnvId::MiniShop => "minishop",
            EnvId::MiniWiki => "miniwiki",
        }
    }

    /// Environment step cap used by the engine for this world.
    pub fn default_max_steps(self) -> usize {
        match self {
            EnvId::MiniHouse => 40,
            EnvId::MiniShop => 15,
            EnvId::MiniWiki => 12,
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EnvId::ALL
            .into_iter()
            .find(|e| e.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| EnvError::UnknownEnv(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("unknown environment {0:?}")]
    UnknownEnv(String),
    #[error("no scenario with seed {seed} in {env}")]
    BadSeed { env: EnvId, seed: u64 },
    #[error("scenario {scenario} belongs to {expected}, not {found}")]
    WrongEnv {
        scenario: String,
        expected: EnvId,
        found: EnvId,
    },
    #[error("step called before reset")]
    NotReset,
    #[error("episode already finished")]
    AlreadyDone,
    #[error("invalid scenario pack: {0}")]
    InvalidPack(String),
}

/// Result of one environment step. `reward > 0` only when `done`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: String,
    pub reward: f64,
    pub done: bool,
}

impl StepResult {
    pub fn running(observation: impl Into<String>) -> Self {
        StepResult {
            observation: observation.into(),
            reward: 0.0,
            done: false,
        }
    }

    pub fn nothing() -> Self {
        Self::running(NOTHING_HAPPENS)
    }

    /// A terminal reward of 1 means the task was solved.
    pub fn is_success(&self) -> bool {
        self.done && self.reward >= 1.0
    }
}

pub trait TextEnv: Send {
    fn id(&self) -> EnvId;

    /// Rebuild the world for `scenario` and return the initial observation.
    fn reset(&mut self, scenario: &Scenario) -> Result<String, EnvError>;

    fn step(&mut self, action: &str) -> Result<StepResult, EnvError>;
}

pub fn make_env(env: EnvId) -> Box<dyn TextEnv> {
    match env {
        EnvId::MiniHouse => Box::new(MiniHouse::default()),
        EnvId::MiniShop => Box::new(MiniShop::default()),
        EnvId::MiniWiki => Box::new(MiniWiki::default()),
    }
}

/// Outcome of replaying a scenario's oracle script.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    pub scenario_id: String,
    pub steps: usize,
    pub success: bool,
    pub transcript: Vec<(String, String)>,
}

/// Replay the scenario's oracle script from a fresh reset.
pub fn run_oracle(scenario: &Scenario) -> Result<OracleRun, EnvError> {
    let mut env = make_env(scenario.env);
    env.reset(scenario)?;
    let mut transcript = Vec::new();
    let mut success = false;
    for action in &scenario.oracle {
        let r = env.step(action)?;
        transcript.push((action.clone(), r.observation.clone()));
        if r.done {
            success = r.is_success();
            break;
        }
    }
    Ok(OracleRun {
        scenario_id: scenario.id.clone(),
        steps: transcript.len(),
        success,
        transcript,
    })
}

/// Lower-case, whitespace-collapsed action text.
pub(crate) fn normalize_action(action: &str) -> String {
    action
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_ascii_lowercase()
}

/// Parse `name[arg]`, returning the trimmed argument.
pub(crate) fn bracket_command<'a>(action: &'a str, name: &str) -> Option<&'a str> {
    let action = action.trim();
    let head = action.get(..name.len())?;
    if !head.eq_ignore_ascii_case(name) {
        return None;
    }
    let rest = action[name.len()..].trim_start();
    let inner = rest.strip_prefix('[')?.strip_suffix(']')?;
    Some(inner.trim())
}
