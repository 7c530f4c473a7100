//! MiniShop: a small web-shop in the style of Webshop.
//!
//! Pages are rendered as `[SEP]`-joined strings. The agent searches, opens an
//! item, picks option values and buys. The purchase is graded by
//! [`minishop_score`]; only a perfect score counts as success.

use super::pack::{Scenario, World};
use super::{bracket_command, EnvError, EnvId, StepResult, TextEnv};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::sync::Arc;

pub const PAGE_SIZE: usize = 5;
const SEP: &str = " [SEP] ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionGroup {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShopItem {
    pub id: String,
    pub title: String,
    pub category: String,
    pub attributes: Vec<String>,
    pub options: Vec<OptionGroup>,
    pub price: f64,
}

impl ShopItem {
    fn group_of(&self, value: &str) -> Option<(usize, &str)> {
        self.options.iter().enumerate().find_map(|(g, group)| {
            group
                .values
                .iter()
                .find(|v| v.eq_ignore_ascii_case(value))
                .map(|v| (g, v.as_str()))
        })
    }

    fn tokens(&self) -> BTreeSet<String> {
        let mut t = tokenize(&self.title);
        t.extend(tokenize(&self.category));
        for a in &self.attributes {
            t.extend(tokenize(a));
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShopGold {
    pub category: String,
    pub attributes: Vec<String>,
    pub options: Vec<String>,
    pub price_cap: f64,
}

impl ShopGold {
    pub fn constraint_count(&self) -> usize {
        2 + self.attributes.len() + self.options.len()
    }
}

/// Fraction of gold constraints met by buying `item` with `selected_options`.
pub fn minishop_score(item: &ShopItem, selected_options: &[String], gold: &ShopGold) -> f64 {
    let mut met = 0;
    if item.category.eq_ignore_ascii_case(&gold.category) {
        met += 1;
    }
    met += gold
        .attributes
        .iter()
        .filter(|a| item.attributes.iter().any(|b| b.eq_ignore_ascii_case(a)))
        .count();
    met += gold
        .options
        .iter()
        .filter(|o| selected_options.iter().any(|s| s.eq_ignore_ascii_case(o)))
        .count();
    if item.price <= gold.price_cap {
        met += 1;
    }
    met as f64 / gold.constraint_count() as f64
}

/// Whether some choice of options on `item` reaches a perfect score.
pub fn can_satisfy(item: &ShopItem, gold: &ShopGold) -> bool {
    let mut groups = BTreeSet::new();
    for o in &gold.options {
        match item.group_of(o) {
            Some((g, _)) if groups.insert(g) => {}
            _ => return false,
        }
    }
    minishop_score(item, &gold.options, gold) >= 1.0
}

fn tokenize(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Item indices ranked by distinct-token overlap, ties broken by id.
pub fn search(catalog: &[ShopItem], query: &str) -> Vec<usize> {
    let q = tokenize(query);
    let mut hits: Vec<(usize, usize)> = catalog
        .iter()
        .enumerate()
        .map(|(i, item)| (i, item.tokens().intersection(&q).count()))
        .filter(|&(_, n)| n > 0)
        .collect();
    hits.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| catalog[a.0].id.cmp(&catalog[b.0].id)));
    hits.into_iter().map(|(i, _)| i).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Page {
    Search,
    Results {
        query: String,
        hits: Vec<usize>,
        page: usize,
    },
    Item {
        item: usize,
        selected: Vec<Option<String>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShopState {
    pub page: Page,
}

#[derive(Debug, Default)]
pub struct MiniShop {
    world: Option<(Arc<Vec<ShopItem>>, ShopGold, String)>,
    state: Option<ShopState>,
    done: bool,
}

impl MiniShop {
    pub fn state(&self) -> Option<&ShopState> {
        self.state.as_ref()
    }

    fn render(&self, page: &Page) -> String {
        let (catalog, _, task) = self.world.as_ref().expect("reset");
        let mut parts = vec![format!("Instruction: {task}")];
        match page {
            Page::Search => {
                parts.push("Search page: type search[your query] to look for products".into());
            }
            Page::Results { query, hits, page } => {
                parts.push("Back to Search".into());
                parts.push(format!(
                    "Results for \"{query}\": page {} (total results: {})",
                    page + 1,
                    hits.len()
                ));
                if (page + 1) * PAGE_SIZE < hits.len() {
                    parts.push("Next >".into());
                }
                for &i in hits.iter().skip(page * PAGE_SIZE).take(PAGE_SIZE) {
                    let item = &catalog[i];
                    parts.push(item.id.clone());
                    parts.push(item.title.clone());
                    parts.push(format!("${:.2}", item.price));
                }
            }
            Page::Item { item, selected } => {
                let item = &catalog[*item];
                parts.push("Back to Search".into());
                for (group, sel) in item.options.iter().zip(selected) {
                    let values: Vec<String> = group
                        .values
                        .iter()
                        .map(|v| {
                            if sel.as_deref() == Some(v) {
                                format!("{v} (selected)")
                            } else {
                                v.clone()
                            }
                        })
                        .collect();
                    parts.push(format!("{}: {}", group.name, values.join(", ")));
                }
                parts.push(item.title.clone());
                parts.push(format!("Category: {}", item.category));
                parts.push(format!("Features: {}", item.attributes.join(", ")));
                parts.push(format!("Price: ${:.2}", item.price));
                parts.push("Buy Now".into());
            }
        }
        parts.join(SEP)
    }

    /// New page for a click, or `None` if the click is not applicable.
    fn click(&self, target: &str) -> Option<Result<Page, f64>> {
        let (catalog, gold, _) = self.world.as_ref()?;
        let state = self.state.as_ref()?;
        if target.eq_ignore_ascii_case("Back to Search") {
            return match state.page {
                Page::Search => None,
                _ => Some(Ok(Page::Search)),
            };
        }
        match &state.page {
            Page::Search => None,
            Page::Results { query, hits, page } => {
                if target.eq_ignore_ascii_case("Next >") {
                    return ((page + 1) * PAGE_SIZE < hits.len()).then(|| {
                        Ok(Page::Results {
                            query: query.clone(),
                            hits: hits.clone(),
                            page: page + 1,
                        })
                    });
                }
                let shown = hits.iter().skip(page * PAGE_SIZE).take(PAGE_SIZE);
                let idx = *shown
                    .into_iter()
                    .find(|&&i| catalog[i].id.eq_ignore_ascii_case(target))?;
                Some(Ok(Page::Item {
                    item: idx,
                    selected: vec![None; catalog[idx].options.len()],
                }))
            }
            Page::Item { item, selected } => {
                let it = &catalog[*item];
                if target.eq_ignore_ascii_case("Buy Now") {
                    let chosen: Vec<String> = selected.iter().flatten().cloned().collect();
                    return Some(Err(minishop_score(it, &chosen, gold)));
                }
                let (g, value) = it.group_of(target)?;
                if selected[g].as_deref() == Some(value) {
                    return None;
                }
                let mut selected = selected.clone();
                selected[g] = Some(value.to_string());
                Some(Ok(Page::Item { item: *item, selected }))
            }
        }
    }
}

impl TextEnv for MiniShop {
    fn id(&self) -> EnvId {
        EnvId::MiniShop
    }

    fn reset(&mut self, scenario: &Scenario) -> Result<String, EnvError> {
        let World::Shop { catalog, gold } = &scenario.world else {
            return Err(EnvError::WrongEnv {
                scenario: scenario.id.clone(),
                expected: scenario.env,
                found: EnvId::MiniShop,
            });
        };
        self.world = Some((Arc::clone(catalog), gold.clone(), scenario.task_text.clone()));
        self.state = Some(ShopState { page: Page::Search });
        self.done = false;
        Ok(self.render(&Page::Search))
    }

    fn step(&mut self, action: &str) -> Result<StepResult, EnvError> {
        if self.state.is_none() {
            return Err(EnvError::NotReset);
        }
        if self.done {
            return Err(EnvError::AlreadyDone);
        }
        if let Some(query) = bracket_command(action, "search") {
            if query.is_empty() {
                return Ok(StepResult::nothing());
            }
            let (catalog, _, _) = self.world.as_ref().expect("reset");
            let page = Page::Results {
                query: query.to_string(),
                hits: search(catalog, query),
                page: 0,
            };
            let obs = self.render(&page);
            self.state = Some(ShopState { page });
            return Ok(StepResult::running(obs));
        }
        let Some(target) = bracket_command(action, "click") else {
            return Ok(StepResult::nothing());
        };
        match self.click(target) {
            None => Ok(StepResult::nothing()),
            Some(Ok(page)) => {
                let obs = self.render(&page);
                self.state = Some(ShopState { page });
                Ok(StepResult::running(obs))
            }
            Some(Err(score)) => {
                self.done = true;
                Ok(StepResult {
                    observation: format!(
                        "Thank you for shopping with us!{SEP}Your score (min 0.0, max 1.0){SEP}{score:.2}"
                    ),
                    reward: score,
                    done: true,
                })
            }
        }
    }
}
