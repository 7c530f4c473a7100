use super::{
    strip_stop, BackendError, CompletionBackend, CompletionRequest, CompletionResponse, RoleHint, SessionKey, Usage,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;

/// One fixture line: the `seq`-th response for `(scenario, episode)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub scenario: String,
    pub episode: u32,
    pub seq: usize,
    pub text: String,
}

/// A request served by the scripted backend, kept for audit.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub session: SessionKey,
    pub seq: usize,
    pub role: RoleHint,
    pub prompt: String,
    pub response: String,
}

/// Deterministic playback of fixture responses, strictly in call order per
/// `(scenario, episode)`.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    responses: HashMap<SessionKey, Vec<String>>,
    cursors: Mutex<HashMap<SessionKey, usize>>,
    audit: Mutex<Vec<AuditEntry>>,
}

impl ScriptedBackend {
    pub fn from_entries(entries: impl IntoIterator<Item = FixtureEntry>) -> Result<Self, BackendError> {
        let mut grouped: HashMap<SessionKey, BTreeMap<usize, String>> = HashMap::new();
        for e in entries {
            let key = SessionKey::new(e.scenario, e.episode);
            let slot = grouped.entry(key.clone()).or_default();
            if slot.insert(e.seq, e.text).is_some() {
                return Err(BackendError::Fixture(format!(
                    "duplicate seq {} for {} episode {}",
                    e.seq, key.scenario, key.episode
                )));
            }
        }
        let mut responses = HashMap::new();
        for (key, seqs) in grouped {
            for (expected, seq) in seqs.keys().enumerate() {
                if *seq != expected {
                    return Err(BackendError::Fixture(format!(
                        "missing seq {expected} for {} episode {}",
                        key.scenario, key.episode
                    )));
                }
            }
            responses.insert(key, seqs.into_values().collect());
        }
        Ok(ScriptedBackend {
            responses,
            ..Default::default()
        })
    }

    pub fn from_jsonl(text: &str) -> Result<Self, BackendError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry =
                serde_json::from_str(line).map_err(|e| BackendError::Fixture(format!("line {}: {e}", i + 1)))?;
            entries.push(entry);
        }
        Self::from_entries(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| BackendError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_jsonl(&text)
    }

    /// Requests served so far, in service order.
    pub fn audit(&self) -> Vec<AuditEntry> {
        self.audit.lock().expect("audit poisoned").clone()
    }

    /// Number of responses consumed for a session.
    pub fn consumed(&self, session: &SessionKey) -> usize {
        self.cursors
            .lock()
            .expect("cursor poisoned")
            .get(session)
            .copied()
            .unwrap_or(0)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &SessionKey> {
        self.responses.keys()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        request.validate()?;
        let seq = {
            let mut cursors = self.cursors.lock().expect("cursor poisoned");
            let cursor = cursors.entry(request.session.clone()).or_insert(0);
            let seq = *cursor;
            *cursor += 1;
            seq
        };
        let raw = self
            .responses
            .get(&request.session)
            .and_then(|r| r.get(seq))
            .ok_or_else(|| BackendError::FixtureExhausted {
                scenario: request.session.scenario.clone(),
                episode: request.session.episode,
                seq,
            })?;
        let text = strip_stop(raw, &request.stop_sequences);
        self.audit.lock().expect("audit poisoned").push(AuditEntry {
            session: request.session.clone(),
            seq,
            role: request.role_hint,
            prompt: request.prompt.clone(),
            response: text.clone(),
        });
        Ok(CompletionResponse {
            usage: Usage {
                prompt_tokens: request.prompt.split_whitespace().count() as u32,
                completion_tokens: text.split_whitespace().count() as u32,
            },
            text,
            provider: "scripted".into(),
        })
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

/// Assembles fixture entries session by session.
///
/// ```
/// use hicrl::backend::FixtureBuilder;
/// let entries = FixtureBuilder::new()
///     .session("house-put-1", 1)
///     .push("find a mug")
///     .push("I should look on the countertop.")
///     .build();
/// assert_eq!(entries[1].seq, 1);
/// ```
#[derive(Debug, Default, Clone)]
pub struct FixtureBuilder {
    entries: Vec<FixtureEntry>,
    current: Option<SessionKey>,
    next_seq: HashMap<SessionKey, usize>,
}

impl FixtureBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Switch to (or resume) a session; subsequent pushes append to it.
    pub fn session(mut self, scenario: impl Into<String>, episode: u32) -> Self {
        self.current = Some(SessionKey::new(scenario, episode));
        self
    }

    pub fn push(mut self, text: impl Into<String>) -> Self {
        let key = self.current.clone().expect("call session() before push()");
        let seq = self.next_seq.entry(key.clone()).or_insert(0);
        self.entries.push(FixtureEntry {
            scenario: key.scenario,
            episode: key.episode,
            seq: *seq,
            text: text.into(),
        });
        *seq += 1;
        self
    }

    pub fn extend<I, S>(mut self, texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for t in texts {
            self = self.push(t);
        }
        self
    }

    pub fn build(self) -> Vec<FixtureEntry> {
        self.entries
    }

    pub fn to_jsonl(&self) -> String {
        entries_to_jsonl(&self.entries)
    }

    pub fn backend(self) -> ScriptedBackend {
        ScriptedBackend::from_entries(self.entries).expect("builder produces contiguous seqs")
    }
}

pub(crate) fn entries_to_jsonl(entries: &[FixtureEntry]) -> String {
    entries
        .iter()
        .map(|e| serde_json::to_string(e).expect("fixture entry serializes") + "\n")
        .collect()
}
