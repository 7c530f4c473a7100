//! MiniWiki: two-hop question answering over a small fictional encyclopedia.
//!
//! `search[entity]` opens an article, `lookup[keyword]` walks the sentences of
//! the open article that mention the keyword, and `finish[answer]` ends the
//! episode with an exact match after normalization.

use super::pack::{Scenario, World};
use super::{bracket_command, EnvError, EnvId, StepResult, TextEnv};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

const SIMILAR_LIMIT: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Article {
    pub title: String,
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    articles: Vec<Article>,
    by_title: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(articles: Vec<Article>) -> Result<Corpus, String> {
        let mut by_title = HashMap::new();
        for (i, a) in articles.iter().enumerate() {
            if a.sentences.is_empty() {
                return Err(format!("article {} has no sentences", a.title));
            }
            if by_title.insert(a.title.to_lowercase(), i).is_some() {
                return Err(format!("duplicate article {}", a.title));
            }
        }
        Ok(Corpus { articles, by_title })
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn get(&self, title: &str) -> Option<&Article> {
        self.find(title).map(|i| &self.articles[i])
    }

    fn find(&self, title: &str) -> Option<usize> {
        self.by_title.get(&title.trim().to_lowercase()).copied()
    }

    /// Titles sharing words with `query`, best overlap first.
    pub fn similar(&self, query: &str) -> Vec<&str> {
        let q = words(query);
        let mut scored: Vec<(usize, &str)> = self
            .articles
            .iter()
            .map(|a| (words(&a.title).intersection(&q).count(), a.title.as_str()))
            .filter(|&(n, _)| n > 0)
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        scored.into_iter().take(SIMILAR_LIMIT).map(|(_, t)| t).collect()
    }
}

fn words(text: &str) -> BTreeSet<String> {
    miniwiki_normalize(text)
        .split(' ')
        .filter(|w| !w.is_empty())
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WikiGold {
    pub answer: String,
}

/// Lowercase, punctuation to spaces, collapse whitespace, drop one leading
/// article.
pub fn miniwiki_normalize(answer: &str) -> String {
    let lowered: String = answer
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    let mut tokens: Vec<&str> = lowered.split_whitespace().collect();
    if tokens.len() > 1 && matches!(tokens[0], "a" | "an" | "the") {
        tokens.remove(0);
    }
    tokens.join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WikiState {
    pub article: Option<usize>,
    /// Active lookup keyword (normalized) and next result position.
    pub lookup: Option<(String, usize)>,
}

#[derive(Debug, Default)]
pub struct MiniWiki {
    world: Option<(Arc<Corpus>, WikiGold)>,
    state: Option<WikiState>,
    done: bool,
}

impl MiniWiki {
    pub fn state(&self) -> Option<&WikiState> {
        self.state.as_ref()
    }
}

impl TextEnv for MiniWiki {
    fn id(&self) -> EnvId {
        EnvId::MiniWiki
    }

    fn reset(&mut self, scenario: &Scenario) -> Result<String, EnvError> {
        let World::Wiki { corpus, gold } = &scenario.world else {
            return Err(EnvError::WrongEnv {
                scenario: scenario.id.clone(),
                expected: scenario.env,
                found: EnvId::MiniWiki,
            });
        };
        self.world = Some((Arc::clone(corpus), gold.clone()));
        self.state = Some(WikiState::default());
        self.done = false;
        Ok(scenario.task_text.clone())
    }

    fn step(&mut self, action: &str) -> Result<StepResult, EnvError> {
        let (Some((corpus, gold)), Some(state)) = (&self.world, &mut self.state) else {
            return Err(EnvError::NotReset);
        };
        if self.done {
            return Err(EnvError::AlreadyDone);
        }
        if let Some(entity) = bracket_command(action, "search") {
            if entity.is_empty() {
                return Ok(StepResult::nothing());
            }
            return Ok(StepResult::running(match corpus.find(entity) {
                Some(i) => {
                    state.article = Some(i);
                    state.lookup = None;
                    corpus.articles[i].sentences.join(" ")
                }
                None => {
                    let similar: Vec<String> = corpus.similar(entity).iter().map(|t| format!("'{t}'")).collect();
                    format!("Could not find {entity}. Similar: [{}].", similar.join(", "))
                }
            }));
        }
        if let Some(keyword) = bracket_command(action, "lookup") {
            let key = miniwiki_normalize(keyword);
            let Some(article) = state.article.filter(|_| !key.is_empty()) else {
                return Ok(StepResult::nothing());
            };
            let hits: Vec<&String> = corpus.articles[article]
                .sentences
                .iter()
                .filter(|s| format!(" {} ", miniwiki_normalize(s)).contains(&format!(" {key} ")))
                .collect();
            let cursor = match &state.lookup {
                Some((k, c)) if *k == key => *c,
                _ => 0,
            };
            return Ok(StepResult::running(if cursor < hits.len() {
                state.lookup = Some((key, cursor + 1));
                format!("(Result {} / {}) {}", cursor + 1, hits.len(), hits[cursor])
            } else {
                state.lookup = Some((key, 0));
                "No more results.".to_string()
            }));
        }
        if let Some(answer) = bracket_command(action, "finish") {
            let correct = !answer.is_empty() && miniwiki_normalize(answer) == miniwiki_normalize(&gold.answer);
            self.done = true;
            let reward = if correct { 1.0 } else { 0.0 };
            return Ok(StepResult {
                observation: format!("Episode finished, reward = {reward}"),
                reward,
                done: true,
            });
        }
        Ok(StepResult::nothing())
    }
}
