//! MiniHouse: a household world in the style of ALFWorld.
//!
//! The agent moves between numbered receptacles (`cabinet 1`, `fridge 1` ...),
//! carries at most one object, and can clean, heat or cool what it holds at
//! the matching appliance. Success is a predicate over the final world state.

use super::pack::{Scenario, World};
use super::{normalize_action, EnvError, EnvId, StepResult, TextEnv};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceptacleSpec {
    pub name: String,
    #[serde(default)]
    pub openable: bool,
    #[serde(default)]
    pub open: bool,
    #[serde(default)]
    pub contents: Vec<String>,
}

/// Initial room layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseLayout {
    pub receptacles: Vec<ReceptacleSpec>,
}

impl HouseLayout {
    pub fn validate(&self) -> Result<(), String> {
        let mut names = HashSet::new();
        for r in &self.receptacles {
            if !names.insert(r.name.as_str()) {
                return Err(format!("duplicate name {}", r.name));
            }
            for o in &r.contents {
                if !names.insert(o.as_str()) {
                    return Err(format!("duplicate name {o}"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Process {
    Clean,
    Heat,
    Cool,
}

/// Success predicate. With `light`, the agent must hold an `object` while a
/// lamp at its location is on; otherwise `count` objects of type `object`
/// (processed if `process` is set) must rest in receptacles of type `target`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseGold {
    pub object: String,
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub process: Option<Process>,
    #[serde(default = "one")]
    pub count: usize,
    #[serde(default)]
    pub light: bool,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ObjectState {
    pub clean: bool,
    pub hot: bool,
    pub cool: bool,
    /// Lamps only.
    pub on: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receptacle {
    pub name: String,
    pub openable: bool,
    pub open: bool,
    pub contents: Vec<String>,
}

impl Receptacle {
    fn accessible(&self) -> bool {
        !self.openable || self.open
    }
}

/// Full mutable world state; compared bit-for-bit in state-safety tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HouseState {
    pub receptacles: Vec<Receptacle>,
    pub objects: BTreeMap<String, ObjectState>,
    pub location: Option<usize>,
    pub holding: Option<String>,
}

/// `"mug 1"` → `"mug"`.
pub fn object_type(name: &str) -> &str {
    match name.rsplit_once(' ') {
        Some((ty, n)) if n.chars().all(|c| c.is_ascii_digit()) => ty,
        _ => name,
    }
}

fn is_lamp(name: &str) -> bool {
    object_type(name).ends_with("lamp")
}

/// ALFWorld-style list: "a mug 1, a plate 1, and a fork 1".
fn list_items(items: &[String]) -> String {
    let with_article: Vec<String> = items.iter().map(|i| format!("a {i}")).collect();
    match with_article.len() {
        0 => "nothing".to_string(),
        1 => with_article[0].clone(),
        n => format!("{}, and {}", with_article[..n - 1].join(", "), with_article[n - 1]),
    }
}

impl HouseState {
    pub fn from_layout(layout: &HouseLayout) -> Self {
        let mut objects = BTreeMap::new();
        let receptacles = layout
            .receptacles
            .iter()
            .map(|r| {
                for o in &r.contents {
                    objects.insert(o.clone(), ObjectState::default());
                }
                Receptacle {
                    name: r.name.clone(),
                    openable: r.openable,
                    open: r.open,
                    contents: r.contents.clone(),
                }
            })
            .collect();
        HouseState {
            receptacles,
            objects,
            location: None,
            holding: None,
        }
    }

    fn find(&self, name: &str) -> Option<usize> {
        self.receptacles.iter().position(|r| r.name == name)
    }

    fn here(&self) -> Option<&Receptacle> {
        self.location.map(|i| &self.receptacles[i])
    }

    fn describe(&self, r: &Receptacle) -> String {
        if r.openable {
            if r.open {
                format!("The {} is open. In it, you see {}.", r.name, list_items(&r.contents))
            } else {
                format!("The {} is closed.", r.name)
            }
        } else {
            format!("On the {}, you see {}.", r.name, list_items(&r.contents))
        }
    }

    pub fn initial_observation(&self, task: &str) -> String {
        let names: Vec<String> = self.receptacles.iter().map(|r| r.name.clone()).collect();
        format!(
            "You are in the middle of a room. Looking quickly around you, you see {}. Your task is to: {}",
            list_items(&names),
            task
        )
    }

    /// Apply an action; `None` means it was not applicable (state untouched).
    fn apply(&mut self, action: &str) -> Option<String> {
        let a = normalize_action(action);
        if let Some(target) = a.strip_prefix("go to ") {
            let idx = self.find(target)?;
            self.location = Some(idx);
            let r = &self.receptacles[idx];
            return Some(format!("You arrive at {}. {}", r.name, self.describe(r)));
        }
        if let Some(target) = a.strip_prefix("open ") {
            let idx = self.location.filter(|&i| self.receptacles[i].name == target)?;
            let r = &mut self.receptacles[idx];
            if !r.openable || r.open {
                return None;
            }
            r.open = true;
            let r = &self.receptacles[idx];
            return Some(format!("You open the {}. {}", r.name, self.describe(r)));
        }
        if let Some(target) = a.strip_prefix("close ") {
            let idx = self.location.filter(|&i| self.receptacles[i].name == target)?;
            let r = &mut self.receptacles[idx];
            if !r.openable || !r.open {
                return None;
            }
            r.open = false;
            return Some(format!("You close the {}.", r.name));
        }
        if let Some(rest) = a.strip_prefix("take ") {
            let (obj, from) = rest.split_once(" from ")?;
            let idx = self.location.filter(|&i| self.receptacles[i].name == from)?;
            if self.holding.is_some() || !self.receptacles[idx].accessible() {
                return None;
            }
            let pos = self.receptacles[idx].contents.iter().position(|o| o == obj)?;
            let obj = self.receptacles[idx].contents.remove(pos);
            let msg = format!("You pick up the {} from the {}.", obj, from);
            self.holding = Some(obj);
            return Some(msg);
        }
        if let Some(rest) = a.strip_prefix("put ") {
            let (obj, to) = [" in/on ", " in ", " on "]
                .iter()
                .find_map(|sep| rest.split_once(sep))?;
            let idx = self.location.filter(|&i| self.receptacles[i].name == to)?;
            if self.holding.as_deref() != Some(obj) || !self.receptacles[idx].accessible() {
                return None;
            }
            let obj = self.holding.take().expect("checked");
            let msg = format!("You put the {} in/on the {}.", obj, to);
            self.receptacles[idx].contents.push(obj);
            return Some(msg);
        }
        for (verb, appliance, process) in [
            ("heat", "microwave", Process::Heat),
            ("cool", "fridge", Process::Cool),
            ("clean", "sinkbasin", Process::Clean),
        ] {
            let Some(rest) = a.strip_prefix(verb).and_then(|r| r.strip_prefix(' ')) else {
                continue;
            };
            let (obj, with) = rest.split_once(" with ")?;
            let here = self.here()?.name.clone();
            if object_type(&here) != appliance || (with != here && with != appliance) {
                return None;
            }
            if self.holding.as_deref() != Some(obj) {
                return None;
            }
            let st = self.objects.get_mut(obj)?;
            match process {
                Process::Heat => {
                    st.hot = true;
                    st.cool = false;
                }
                Process::Cool => {
                    st.cool = true;
                    st.hot = false;
                }
                Process::Clean => st.clean = true,
            }
            return Some(format!("You {verb} the {obj} using the {here}."));
        }
        if let Some(lamp) = a.strip_prefix("use ") {
            let here = self.here()?;
            if !is_lamp(lamp) || !here.contents.iter().any(|o| o == lamp) {
                return None;
            }
            let st = self.objects.get_mut(lamp)?;
            if st.on {
                return None;
            }
            st.on = true;
            return Some(format!("You turn on the {lamp}."));
        }
        if let Some(x) = a.strip_prefix("examine ") {
            let here = self.here();
            if let Some(r) = here.filter(|r| r.name == x) {
                return Some(self.describe(r));
            }
            let visible = self.holding.as_deref() == Some(x)
                || here.is_some_and(|r| r.accessible() && r.contents.iter().any(|o| o == x));
            if !visible {
                return None;
            }
            let st = &self.objects[x];
            let mut traits = Vec::new();
            if st.clean {
                traits.push("clean");
            }
            if st.hot {
                traits.push("hot");
            }
            if st.cool {
                traits.push("cool");
            }
            if st.on {
                traits.push("turned on");
            }
            return Some(if traits.is_empty() {
                format!("This is a normal {x}.")
            } else {
                format!("This is a {} {x}.", traits.join(" and "))
            });
        }
        None
    }

    pub fn satisfies(&self, gold: &HouseGold) -> bool {
        let processed = |name: &str| {
            let st = &self.objects[name];
            match gold.process {
                None => true,
                Some(Process::Clean) => st.clean,
                Some(Process::Heat) => st.hot,
                Some(Process::Cool) => st.cool,
            }
        };
        if gold.light {
            let Some(held) = &self.holding else { return false };
            let Some(here) = self.here() else { return false };
            return object_type(held) == gold.object
                && here.contents.iter().any(|o| is_lamp(o) && self.objects[o.as_str()].on);
        }
        let Some(target) = &gold.target else { return false };
        let placed = self
            .receptacles
            .iter()
            .filter(|r| object_type(&r.name) == target)
            .flat_map(|r| &r.contents)
            .filter(|o| object_type(o) == gold.object && processed(o))
            .count();
        placed >= gold.count
    }
}

#[derive(Debug, Default)]
pub struct MiniHouse {
    state: Option<(HouseState, HouseGold)>,
    done: bool,
}

impl MiniHouse {
    pub fn state(&self) -> Option<&HouseState> {
        self.state.as_ref().map(|(s, _)| s)
    }
}

impl TextEnv for MiniHouse {
    fn id(&self) -> EnvId {
        EnvId::MiniHouse
    }

    fn reset(&mut self, scenario: &Scenario) -> Result<String, EnvError> {
        let World::House { layout, gold } = &scenario.world else {
            return Err(EnvError::WrongEnv {
                scenario: scenario.id.clone(),
                expected: scenario.env,
                found: EnvId::MiniHouse,
            });
        };
        let state = HouseState::from_layout(layout);
        let obs = state.initial_observation(&scenario.task_text);
        self.state = Some((state, gold.clone()));
        self.done = false;
        Ok(obs)
    }

    fn step(&mut self, action: &str) -> Result<StepResult, EnvError> {
        let (state, gold) = self.state.as_mut().ok_or(EnvError::NotReset)?;
        if self.done {
            return Err(EnvError::AlreadyDone);
        }
        let Some(observation) = state.apply(action) else {
            return Ok(StepResult::nothing());
        };
        if state.satisfies(gold) {
            self.done = true;
            return Ok(StepResult {
                observation,
                reward: 1.0,
                done: true,
            });
        }
        Ok(StepResult::running(observation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{bundled_scenarios, NOTHING_HAPPENS};

    fn layout() -> HouseLayout {
        serde_json::from_str(
            r#"{"receptacles":[
                {"name":"countertop 1","contents":["mug 1","apple 1"]},
                {"name":"fridge 1","openable":true},
                {"name":"cabinet 1","openable":true,"contents":["plate 1"]},
                {"name":"desk 1","contents":["desklamp 1"]}
            ]}"#,
        )
        .unwrap()
    }

    fn scenario(gold: HouseGold) -> Scenario {
        Scenario {
            id: "t".into(),
            env: EnvId::MiniHouse,
            seed: 0,
            task_type: "cool".into(),
            task_text: "cool some mug and put it in cabinet.".into(),
            world: World::House { layout: layout(), gold },
            oracle: vec![],
        }
    }

    fn cool_gold() -> HouseGold {
        HouseGold {
            object: "mug".into(),
            target: Some("cabinet".into()),
            process: Some(Process::Cool),
            count: 1,
            light: false,
        }
    }

    #[test]
    fn cool_sets_attribute() {
        let mut env = MiniHouse::default();
        env.reset(&scenario(cool_gold())).unwrap();
        env.step("go to countertop 1").unwrap();
        env.step("take mug 1 from countertop 1").unwrap();
        env.step("go to fridge 1").unwrap();
        let r = env.step("cool mug 1 with fridge 1").unwrap();
        assert_eq!(r.observation, "You cool the mug 1 using the fridge 1.");
        // World-state oracle: the attribute is set on the held mug.
        let st = env.state().unwrap();
        assert_eq!(st.holding.as_deref(), Some("mug 1"));
        assert!(st.objects["mug 1"].cool);
        assert!(!st.objects["apple 1"].cool);
    }

    #[test]
    fn full_cool_task_succeeds() {
        let mut env = MiniHouse::default();
        let obs = env.reset(&scenario(cool_gold())).unwrap();
        assert!(obs.contains("a countertop 1, a fridge 1, a cabinet 1, and a desk 1"));
        assert!(obs.ends_with("Your task is to: cool some mug and put it in cabinet."));
        for a in [
            "go to countertop 1",
            "take mug 1 from countertop 1",
            "go to fridge 1",
            "cool mug 1 with fridge 1",
            "go to cabinet 1",
            "open cabinet 1",
        ] {
            assert!(!env.step(a).unwrap().done, "{a}");
        }
        let r = env.step("put mug 1 in/on cabinet 1").unwrap();
        assert!(r.is_success());
        assert_eq!(env.step("look"), Err(EnvError::AlreadyDone));
    }

    #[test]
    fn observations_follow_templates() {
        let mut env = MiniHouse::default();
        env.reset(&scenario(cool_gold())).unwrap();
        assert_eq!(
            env.step("go to countertop 1").unwrap().observation,
            "You arrive at countertop 1. On the countertop 1, you see a mug 1, and a apple 1."
        );
        assert_eq!(
            env.step("go to fridge 1").unwrap().observation,
            "You arrive at fridge 1. The fridge 1 is closed."
        );
        assert_eq!(
            env.step("open fridge 1").unwrap().observation,
            "You open the fridge 1. The fridge 1 is open. In it, you see nothing."
        );
        assert_eq!(
            env.step("close fridge 1").unwrap().observation,
            "You close the fridge 1."
        );
    }

    #[test]
    fn invalid_actions_leave_state_identical() {
        let mut env = MiniHouse::default();
        env.reset(&scenario(cool_gold())).unwrap();
        env.step("go to countertop 1").unwrap();
        let before = env.state().unwrap().clone();
        for a in [
            "take plate 1 from countertop 1",
            "take mug 1 from cabinet 1",
            "open countertop 1",
            "cool mug 1 with fridge 1",
            "put mug 1 in countertop 1",
            "use desklamp 1",
            "dance",
            "go to moon 1",
            "examine plate 1",
        ] {
            let r = env.step(a).unwrap();
            assert_eq!(r.observation, NOTHING_HAPPENS, "{a}");
            assert_eq!(env.state().unwrap(), &before, "{a}");
        }
    }

    #[test]
    fn light_task() {
        let gold = HouseGold {
            object: "apple".into(),
            target: None,
            process: None,
            count: 1,
            light: true,
        };
        let mut env = MiniHouse::default();
        env.reset(&scenario(gold)).unwrap();
        env.step("go to countertop 1").unwrap();
        env.step("take apple 1 from countertop 1").unwrap();
        env.step("go to desk 1").unwrap();
        assert_eq!(
            env.step("examine apple 1").unwrap().observation,
            "This is a normal apple 1."
        );
        let r = env.step("use desklamp 1").unwrap();
        assert_eq!(r.observation, "You turn on the desklamp 1.");
        assert!(r.is_success());
    }

    #[test]
    fn step_before_reset() {
        let mut env = MiniHouse::default();
        assert_eq!(env.step("go to desk 1"), Err(EnvError::NotReset));
    }

    #[test]
    fn reset_is_deterministic() {
        let s = &bundled_scenarios(EnvId::MiniHouse)[6];
        let mut a = MiniHouse::default();
        let mut b = MiniHouse::default();
        assert_eq!(a.reset(s).unwrap(), b.reset(s).unwrap());
        assert_eq!(a.reset(s).unwrap(), b.reset(s).unwrap());
        for action in &s.oracle {
            assert_eq!(a.step(action).unwrap(), b.step(action).unwrap());
        }
    }

    #[test]
    fn object_types() {
        assert_eq!(object_type("mug 1"), "mug");
        assert_eq!(object_type("soap bar 12"), "soap bar");
        assert_eq!(object_type("mug"), "mug");
    }
}
