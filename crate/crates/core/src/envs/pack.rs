//! Scenario packs: JSON files bundling worlds, hidden gold specs and oracle
//! action scripts.
//!
//! Schema (all envs):
//!
//! ```json
//! {
//!   "env": "minihouse" | "minishop" | "miniwiki",
//!   "catalog":  [ ...shop items... ],        // minishop only
//!   "articles": [ ...wiki articles... ],     // miniwiki only
//!   "scenarios": [
//!     { "id": "house-cool-1", "seed": 1, "task_type": "cool",
//!       "task": "cool some mug and put it in cabinet.",
//!       "world": { ... },                    // minihouse only
//!       "gold": { ... },
//!       "oracle": ["go to countertop 1", "..."] }
//!   ],
//!   "exemplars": [ ...same shape, used to author few-shot prompts... ]
//! }
//! ```
//!
//! See [`super::house`], [`super::shop`] and [`super::wiki`] for the per-env
//! `world`, `gold`, `catalog` and `articles` shapes.

use super::house::{HouseGold, HouseLayout};
use super::shop::{ShopGold, ShopItem};
use super::wiki::{Article, Corpus, WikiGold};
use super::{EnvError, EnvId};
use serde::Deserialize;
use std::collections::HashSet;
use std::path::Path;
use std::sync::{Arc, OnceLock};

/// The hidden part of a scenario: world layout and success specification.
#[derive(Debug, Clone, PartialEq)]
pub enum World {
    House {
        layout: HouseLayout,
        gold: HouseGold,
    },
    Shop {
        catalog: Arc<Vec<ShopItem>>,
        gold: ShopGold,
    },
    Wiki {
        corpus: Arc<Corpus>,
        gold: WikiGold,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub env: EnvId,
    pub seed: u64,
    pub task_type: String,
    /// Instruction shown to the agent.
    pub task_text: String,
    pub world: World,
    /// Known-good action script reaching success.
    pub oracle: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPack {
    pub env: EnvId,
    pub scenarios: Vec<Scenario>,
    pub exemplars: Vec<Scenario>,
}

impl ScenarioPack {
    pub fn get(&self, seed: u64) -> Result<&Scenario, EnvError> {
        self.scenarios
            .iter()
            .find(|s| s.seed == seed)
            .ok_or(EnvError::BadSeed { env: self.env, seed })
    }

    pub fn by_id(&self, id: &str) -> Option<&Scenario> {
        self.scenarios.iter().chain(&self.exemplars).find(|s| s.id == id)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PackFile {
    env: EnvId,
    #[serde(default)]
    catalog: Vec<ShopItem>,
    #[serde(default)]
    articles: Vec<Article>,
    scenarios: Vec<ScenarioFile>,
    #[serde(default)]
    exemplars: Vec<ScenarioFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    id: String,
    seed: u64,
    task_type: String,
    task: String,
    #[serde(default)]
    world: Option<HouseLayout>,
    gold: serde_json::Value,
    oracle: Vec<String>,
}

fn invalid(msg: impl Into<String>) -> EnvError {
    EnvError::InvalidPack(msg.into())
}

impl ScenarioPack {
    pub fn from_json(text: &str) -> Result<ScenarioPack, EnvError> {
        let file: PackFile = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        let catalog = Arc::new(file.catalog);
        let corpus = Arc::new(Corpus::new(file.articles).map_err(invalid)?);
        let env = file.env;
        let build = |sf: ScenarioFile| -> Result<Scenario, EnvError> {
            let world = match env {
                EnvId::MiniHouse => {
                    let layout = sf.world.ok_or_else(|| invalid(format!("{}: missing world", sf.id)))?;
                    let gold: HouseGold =
                        serde_json::from_value(sf.gold).map_err(|e| invalid(format!("{}: {e}", sf.id)))?;
                    layout.validate().map_err(|e| invalid(format!("{}: {e}", sf.id)))?;
                    World::House { layout, gold }
                }
                EnvId::MiniShop => {
                    let gold: ShopGold =
                        serde_json::from_value(sf.gold).map_err(|e| invalid(format!("{}: {e}", sf.id)))?;
                    World::Shop {
                        catalog: Arc::clone(&catalog),
                        gold,
                    }
                }
                EnvId::MiniWiki => {
                    let gold: WikiGold =
                        serde_json::from_value(sf.gold).map_err(|e| invalid(format!("{}: {e}", sf.id)))?;
                    World::Wiki {
                        corpus: Arc::clone(&corpus),
                        gold,
                    }
                }
            };
            Ok(Scenario {
                id: sf.id,
                env,
                seed: sf.seed,
                task_type: sf.task_type,
                task_text: sf.task,
                world,
                oracle: sf.oracle,
            })
        };
        let scenarios = file.scenarios.into_iter().map(build).collect::<Result<Vec<_>, _>>()?;
        let exemplars = file.exemplars.into_iter().map(build).collect::<Result<Vec<_>, _>>()?;
        let mut ids = HashSet::new();
        for s in scenarios.iter().chain(&exemplars) {
            if !ids.insert(s.id.clone()) {
                return Err(invalid(format!("duplicate scenario id {}", s.id)));
            }
        }
        let mut seeds = HashSet::new();
        for s in &scenarios {
            if !seeds.insert(s.seed) {
                return Err(invalid(format!("duplicate seed {}", s.seed)));
            }
        }
        Ok(ScenarioPack {
            env,
            scenarios,
            exemplars,
        })
    }
}

/// Load a user-authored pack from disk.
pub fn load_pack(path: impl AsRef<Path>) -> Result<ScenarioPack, EnvError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    ScenarioPack::from_json(&text)
}

const HOUSE_PACK: &str = include_str!("../../assets/packs/minihouse.json");
const SHOP_PACK: &str = include_str!("../../assets/packs/minishop.json");
const WIKI_PACK: &str = include_str!("../../assets/packs/miniwiki.json");

/// The pack bundled with the crate for `env`.
pub fn bundled_pack(env: EnvId) -> &'static ScenarioPack {
    static HOUSE: OnceLock<ScenarioPack> = OnceLock::new();
    static SHOP: OnceLock<ScenarioPack> = OnceLock::new();
    static WIKI: OnceLock<ScenarioPack> = OnceLock::new();
    let (cell, text) = match env {
        EnvId::MiniHouse => (&HOUSE, HOUSE_PACK),
        EnvId::MiniShop => (&SHOP, SHOP_PACK),
        EnvId::MiniWiki => (&WIKI, WIKI_PACK),
    };
    cell.get_or_init(|| ScenarioPack::from_json(text).expect("bundled pack is valid"))
}

pub fn bundled_scenarios(env: EnvId) -> &'static [Scenario] {
    &bundled_pack(env).scenarios
}
