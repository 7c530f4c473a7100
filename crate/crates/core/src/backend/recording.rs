use super::scripted::entries_to_jsonl;
use super::{BackendError, CompletionBackend, CompletionRequest, CompletionResponse, FixtureEntry, SessionKey};
use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

/// One request/response pair observed by [`RecordingBackend`].
#[derive(Debug, Clone, PartialEq)]
pub struct Exchange {
    pub seq: usize,
    pub request: CompletionRequest,
    pub response: Result<CompletionResponse, BackendError>,
}

/// Transparent wrapper that logs every exchange with the inner backend.
///
/// The logged request is the exact value handed to the inner provider, so the
/// log doubles as a check that prompts are forwarded unmodified.
#[derive(Debug)]
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<Exchange>>,
    seqs: Mutex<HashMap<SessionKey, usize>>,
}

impl<B: CompletionBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            log: Mutex::new(Vec::new()),
            seqs: Mutex::new(HashMap::new()),
        }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().expect("log poisoned").clone()
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    /// Successful responses as fixture entries, ready for scripted replay.
    pub fn fixture_entries(&self) -> Vec<FixtureEntry> {
        self.exchanges()
            .into_iter()
            .filter_map(|ex| {
                ex.response.ok().map(|resp| FixtureEntry {
                    scenario: ex.request.session.scenario,
                    episode: ex.request.session.episode,
                    seq: ex.seq,
                    text: resp.text,
                })
            })
            .collect()
    }

    pub fn write_fixture(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, entries_to_jsonl(&self.fixture_entries()))
    }
}

impl<B: CompletionBackend> CompletionBackend for RecordingBackend<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let response = self.inner.complete(request);
        let seq = {
            let mut seqs = self.seqs.lock().expect("seqs poisoned");
            let next = seqs.entry(request.session.clone()).or_insert(0);
            let seq = *next;
            // Failed calls do not consume a fixture slot.
            if response.is_ok() {
                *next += 1;
            }
            seq
        };
        self.log.lock().expect("log poisoned").push(Exchange {
            seq,
            request: request.clone(),
            response: response.clone(),
        });
        response
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{FixtureBuilder, RoleHint, ScriptedBackend};

    #[test]
    fn recorded_fixture_replays_identically() {
        let inner = FixtureBuilder::new()
            .session("a", 1)
            .extend(["go to fridge 1", "Yes"])
            .session("b", 2)
            .push("search[denim jacket]")
            .backend();
        let rec = RecordingBackend::new(inner);
        let calls = [("a", 1), ("b", 2), ("a", 1)];
        let first: Vec<_> = calls
            .iter()
            .map(|(s, e)| {
                let r = CompletionRequest::new(SessionKey::new(*s, *e), RoleHint::Action, format!("p {s}"));
                rec.complete(&r).unwrap().text
            })
            .collect();
        let replay = ScriptedBackend::from_entries(rec.fixture_entries()).unwrap();
        let second: Vec<_> = calls
            .iter()
            .map(|(s, e)| {
                let r = CompletionRequest::new(SessionKey::new(*s, *e), RoleHint::Action, format!("p {s}"));
                replay.complete(&r).unwrap().text
            })
            .collect();
        assert_eq!(first, second);
        assert_eq!(rec.exchanges()[0].request.prompt, "p a");
    }
}
