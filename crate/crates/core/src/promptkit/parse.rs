//! Parsers turning raw completions into typed goals, thoughts, actions and
//! finish verdicts.

use crate::types::Tag;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("could not parse {cue} completion: {reason}")]
pub struct ParseError {
    pub cue: Tag,
    pub reason: String,
}

impl ParseError {
    fn new(cue: Tag, reason: impl Into<String>) -> Self {
        ParseError {
            cue,
            reason: reason.into(),
        }
    }
}

/// Strip any echoed `[Tag]` prefixes (case-insensitive). Idempotent.
pub fn strip_tag_echo(line: &str) -> &str {
    let mut rest = line.trim();
    loop {
        let stripped = Tag::ALL.into_iter().find_map(|tag| {
            let lit = tag.as_str();
            let head = rest.get(..lit.len())?;
            head.eq_ignore_ascii_case(lit).then(|| rest[lit.len()..].trim_start())
        });
        match stripped {
            Some(next) => rest = next,
            None => return rest.trim_end(),
        }
    }
}

/// First line that is non-empty once tag echoes are stripped.
fn first_content_line(text: &str) -> Option<&str> {
    text.lines().map(strip_tag_echo).find(|l| !l.is_empty())
}

fn parse_line(text: &str, cue: Tag) -> Result<String, ParseError> {
    first_content_line(text)
        .map(str::to_string)
        .ok_or_else(|| ParseError::new(cue, "empty completion"))
}

pub fn parse_goal(text: &str) -> Result<String, ParseError> {
    parse_line(text, Tag::Goal)
}

pub fn parse_think(text: &str) -> Result<String, ParseError> {
    parse_line(text, Tag::Think)
}

/// The returned action is passed verbatim to the environment.
pub fn parse_action(text: &str) -> Result<String, ParseError> {
    parse_line(text, Tag::Action)
}

/// `true` iff the first alphabetic token is "yes", `false` iff it is "no"
/// (case-insensitive).
pub fn parse_finish(text: &str) -> Result<bool, ParseError> {
    let line = first_content_line(text).ok_or_else(|| ParseError::new(Tag::Finish, "empty completion"))?;
    verdict(line).ok_or_else(|| ParseError::new(Tag::Finish, format!("no yes/no verdict in {line:?}")))
}

fn verdict(line: &str) -> Option<bool> {
    let token = line.split(|c: char| !c.is_ascii_alphabetic()).find(|t| !t.is_empty())?;
    match token.to_ascii_lowercase().as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// Parse a tag-free completion of the form `goal: ...`, `think: ...`,
/// `action: ...` or `finish: yes|no`. Finish content is normalized to
/// `"Yes"`/`"No"`.
pub fn parse_free_step(text: &str) -> Result<(Tag, String), ParseError> {
    let line = first_content_line(text).ok_or_else(|| ParseError::new(Tag::Goal, "empty completion"))?;
    let (head, rest) = line
        .split_once(':')
        .ok_or_else(|| ParseError::new(Tag::Goal, format!("no step type in {line:?}")))?;
    let head = head.trim().to_ascii_lowercase();
    let tag = Tag::ALL
        .into_iter()
        .find(|t| t.keyword() == head)
        .ok_or_else(|| ParseError::new(Tag::Goal, format!("unknown step type {head:?}")))?;
    let content = rest.trim();
    if content.is_empty() {
        return Err(ParseError::new(tag, "empty step content"));
    }
    if tag == Tag::Finish {
        let v = verdict(content).ok_or_else(|| ParseError::new(tag, format!("no yes/no verdict in {content:?}")))?;
        return Ok((tag, if v { "Yes" } else { "No" }.to_string()));
    }
    Ok((tag, content.to_string()))
}
