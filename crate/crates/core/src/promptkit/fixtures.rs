//! Bundled few-shot examples and reflection exemplars.
//!
//! Household tasks get two examples per task type; shop and wiki get two full
//! trajectories each. Reflection exemplars: two low-level, one high-level and
//! one full-trajectory (for the Reflexion-style ablation).

use crate::envs::EnvId;
use crate::types::FewShotExample;

macro_rules! prompt {
    ($path:literal) => {
        include_str!(concat!("../../assets/prompts/", $path))
    };
}

const HOUSE: [(&str, [&str; 2]); 6] = [
    ("put", [prompt!("minihouse/put_1.txt"), prompt!("minihouse/put_2.txt")]),
    (
        "clean",
        [prompt!("minihouse/clean_1.txt"), prompt!("minihouse/clean_2.txt")],
    ),
    (
        "heat",
        [prompt!("minihouse/heat_1.txt"), prompt!("minihouse/heat_2.txt")],
    ),
    (
        "cool",
        [prompt!("minihouse/cool_1.txt"), prompt!("minihouse/cool_2.txt")],
    ),
    (
        "examine",
        [prompt!("minihouse/examine_1.txt"), prompt!("minihouse/examine_2.txt")],
    ),
    (
        "puttwo",
        [prompt!("minihouse/puttwo_1.txt"), prompt!("minihouse/puttwo_2.txt")],
    ),
];

const SHOP: [&str; 2] = [prompt!("minishop/example_1.txt"), prompt!("minishop/example_2.txt")];
const WIKI: [&str; 2] = [prompt!("miniwiki/example_1.txt"), prompt!("miniwiki/example_2.txt")];

pub const LOW_REFLECTION_EXEMPLARS: [&str; 2] = [prompt!("reflections/low_1.txt"), prompt!("reflections/low_2.txt")];
pub const HIGH_REFLECTION_EXEMPLARS: [&str; 1] = [prompt!("reflections/high_1.txt")];
pub const FULL_REFLECTION_EXEMPLARS: [&str; 1] = [prompt!("reflections/full_1.txt")];

/// Few-shot examples for a scenario. Unknown household task types fall back
/// to the `put` pair.
pub fn few_shot_examples(env: EnvId, task_type: &str) -> Vec<FewShotExample> {
    let (ty, bodies): (&str, &[&str]) = match env {
        EnvId::MiniHouse => {
            let (ty, bodies) = HOUSE.iter().find(|(t, _)| *t == task_type).unwrap_or(&HOUSE[0]);
            (ty, bodies)
        }
        EnvId::MiniShop => (task_type, &SHOP),
        EnvId::MiniWiki => (task_type, &WIKI),
    };
    bodies
        .iter()
        .map(|body| FewShotExample {
            env_id: env.as_str().to_string(),
            task_type: ty.to_string(),
            body: body.to_string(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{bundled_pack, make_env};
    use crate::promptkit::{parse_tagged, PromptStyle};
    use crate::types::Tag;

    #[test]
    fn counts() {
        for (ty, _) in HOUSE {
            assert_eq!(few_shot_examples(EnvId::MiniHouse, ty).len(), 2);
        }
        assert_eq!(few_shot_examples(EnvId::MiniShop, "jacket").len(), 2);
        assert_eq!(few_shot_examples(EnvId::MiniWiki, "bridge").len(), 2);
        assert_eq!(few_shot_examples(EnvId::MiniHouse, "unknown")[0].task_type, "put");
    }

    #[test]
    fn every_example_parses_under_the_grammar() {
        for env in EnvId::ALL {
            for ty in ["put", "clean", "heat", "cool", "examine", "puttwo"] {
                for ex in few_shot_examples(env, ty) {
                    let steps = parse_tagged(&ex.body, PromptStyle::Tagged).unwrap();
                    assert_eq!(steps[0].tag, Tag::Goal);
                }
            }
        }
    }

    // Each example is a replay of an exemplar scenario: its actions must
    // reproduce its observations against the live environment.
    #[test]
    fn examples_replay_against_exemplar_scenarios() {
        for env in EnvId::ALL {
            let pack = bundled_pack(env);
            let bodies: Vec<&str> = match env {
                EnvId::MiniHouse => HOUSE.iter().flat_map(|(_, b)| b.iter().copied()).collect(),
                EnvId::MiniShop => SHOP.to_vec(),
                EnvId::MiniWiki => WIKI.to_vec(),
            };
            for body in bodies {
                let first = body.lines().next().unwrap();
                let scenario = pack
                    .exemplars
                    .iter()
                    .find(|s| {
                        let mut e = make_env(env);
                        e.reset(s).unwrap() == first
                    })
                    .unwrap_or_else(|| panic!("no exemplar for {first}"));
                let mut e = make_env(env);
                e.reset(scenario).unwrap();
                let steps = parse_tagged(body, PromptStyle::Tagged).unwrap();
                let mut last = None;
                for s in steps.iter().filter(|s| s.tag == Tag::Action) {
                    let r = e.step(&s.content).unwrap();
                    assert_eq!(Some(&r.observation), s.observation.as_ref(), "{}", scenario.id);
                    last = Some(r);
                }
                assert!(last.unwrap().is_success(), "{}", scenario.id);
            }
        }
    }

    #[test]
    fn reflection_exemplars_end_with_a_reflection() {
        for ex in LOW_REFLECTION_EXEMPLARS
            .iter()
            .chain(&HIGH_REFLECTION_EXEMPLARS)
            .chain(&FULL_REFLECTION_EXEMPLARS)
        {
            assert!(ex.trim_end().lines().last().unwrap().starts_with("Reflection: "));
        }
    }
}
