//! Text rendering of trajectories and the inverse tag-grammar parser.

use super::PromptStyle;
use crate::types::{check_grammar, GrammarError, Step, Tag};
use thiserror::Error;

pub const OBSERVATION_PREFIX: &str = "Observation:";

/// Collapse internal line breaks so every step renders on one line.
pub(crate) fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn prefix(tag: Tag, style: PromptStyle) -> String {
    match style {
        PromptStyle::Tagged => tag.as_str().to_string(),
        PromptStyle::TagFree => format!("{}:", tag.keyword()),
    }
}

fn observation_prefix(style: PromptStyle) -> &'static str {
    match style {
        PromptStyle::Tagged => OBSERVATION_PREFIX,
        PromptStyle::TagFree => "observation:",
    }
}

/// Render one step (plus its observation line for actions).
pub fn render_step(step: &Step, style: PromptStyle) -> Vec<String> {
    let mut lines = vec![format!("{} {}", prefix(step.tag, style), one_line(&step.content))];
    if let Some(obs) = &step.observation {
        lines.push(format!("{} {}", observation_prefix(style), one_line(obs)));
    }
    lines
}

pub fn render_steps(steps: &[Step], style: PromptStyle) -> Vec<String> {
    steps.iter().flat_map(|s| render_step(s, style)).collect()
}

/// Render a full trajectory, one line per step/observation.
pub fn render_trajectory(steps: &[Step], style: PromptStyle) -> String {
    render_steps(steps, style).join("\n")
}

/// A step recovered from text: `(tag, content, observation)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedStep {
    pub tag: Tag,
    pub content: String,
    pub observation: Option<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GrammarParseError {
    #[error("line {0}: text outside the tag grammar")]
    StrayLine(usize),
    #[error("line {0}: observation without a preceding action")]
    OrphanObservation(usize),
    #[error("line {line}: {source}")]
    Grammar {
        line: usize,
        #[source]
        source: GrammarError,
    },
    #[error("no tagged steps found")]
    Empty,
}

fn split_prefix(line: &str, style: PromptStyle) -> Option<(Tag, String)> {
    Tag::ALL.into_iter().find_map(|tag| {
        let p = prefix(tag, style);
        let rest = match style {
            PromptStyle::Tagged => line.strip_prefix(p.as_str()),
            PromptStyle::TagFree => {
                let head = line.get(..p.len())?;
                head.eq_ignore_ascii_case(&p).then(|| &line[p.len()..])
            }
        }?;
        (rest.is_empty() || rest.starts_with(' ')).then(|| (tag, rest.trim().to_string()))
    })
}

/// Parse tag-formatted text (e.g. a few-shot exemplar). Lines before the first
/// tagged line form a free-text preamble (the task statement) and are skipped;
/// blank lines are ignored. The resulting step list must satisfy the grammar.
pub fn parse_tagged(text: &str, style: PromptStyle) -> Result<Vec<ParsedStep>, GrammarParseError> {
    let mut out: Vec<ParsedStep> = Vec::new();
    let obs_prefix = observation_prefix(style);
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        if line.trim().is_empty() {
            continue;
        }
        if let Some((tag, content)) = split_prefix(line, style) {
            out.push(ParsedStep {
                tag,
                content,
                observation: None,
            });
            continue;
        }
        if out.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix(obs_prefix) {
            let last = out.last_mut().expect("non-empty");
            if last.tag != Tag::Action || last.observation.is_some() {
                return Err(GrammarParseError::OrphanObservation(i + 1));
            }
            last.observation = Some(rest.trim().to_string());
            continue;
        }
        return Err(GrammarParseError::StrayLine(i + 1));
    }
    if out.is_empty() {
        return Err(GrammarParseError::Empty);
    }
    let steps: Vec<Step> = out
        .iter()
        .enumerate()
        .map(|(index, p)| Step {
            index,
            tag: p.tag,
            content: p.content.clone(),
            observation: p.observation.clone(),
            raw: None,
        })
        .collect();
    check_grammar(&steps).map_err(|source| GrammarParseError::Grammar { line: 0, source })?;
    Ok(out)
}

/// Split text into its preamble (before the first tagged line) and steps.
pub fn split_preamble(text: &str, style: PromptStyle) -> (String, String) {
    let mut pre = Vec::new();
    let mut rest = Vec::new();
    let mut in_steps = false;
    for line in text.lines() {
        if !in_steps && split_prefix(line.trim_end(), style).is_some() {
            in_steps = true;
        }
        if in_steps {
            rest.push(line);
        } else {
            pre.push(line);
        }
    }
    (pre.join("\n").trim().to_string(), rest.join("\n"))
}

/// Re-render a tagged exemplar in another style, preserving its preamble.
pub fn restyle(text: &str, style: PromptStyle) -> Result<String, GrammarParseError> {
    if style == PromptStyle::Tagged {
        return Ok(text.trim_end().to_string());
    }
    let (preamble, _) = split_preamble(text, PromptStyle::Tagged);
    let steps: Vec<Step> = parse_tagged(text, PromptStyle::Tagged)?
        .into_iter()
        .enumerate()
        .map(|(index, p)| Step {
            index,
            tag: p.tag,
            content: p.content,
            observation: p.observation,
            raw: None,
        })
        .collect();
    let body = render_trajectory(&steps, style);
    Ok(if preamble.is_empty() {
        body
    } else {
        format!("{preamble}\n{body}")
    })
}
