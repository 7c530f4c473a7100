#![allow(dead_code)]

use hicrl::backend::{
    BackendError, CompletionBackend, CompletionRequest, CompletionResponse, FixtureBuilder, RoleHint, Usage,
};
use hicrl::envs::{bundled_pack, EnvId, Scenario};
use hicrl::types::{Step, Tag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

pub fn scenario(env: EnvId, id: &str) -> Scenario {
    bundled_pack(env).by_id(id).unwrap().clone()
}

/// Three sub-goals solving house-cool-1.
pub fn cool_golden() -> Vec<&'static str> {
    vec![
        "find a mug and take it",
        "A mug is usually on a countertop. I will check countertop 1.",
        "go to countertop 1",
        "No",
        "take mug 1 from countertop 1",
        "Yes",
        "cool the mug with fridge",
        "I hold the mug. The fridge will cool it.",
        "go to fridge 1",
        "No",
        "cool mug 1 with fridge 1",
        "Yes",
        "put the mug in cabinet",
        "Cabinet 3 is closed, so I open it first.",
        "go to cabinet 3",
        "No",
        "open cabinet 3",
        "No",
        "put mug 1 in/on cabinet 3",
    ]
}

/// The same plan, but the mug goes into cabinet 3 without cooling; the
/// episode then wanders until the step cap.
pub fn cool_failing(max_steps: usize) -> Vec<String> {
    let mut r: Vec<String> = [
        "find a mug and take it",
        "A mug is usually on a countertop.",
        "go to countertop 1",
        "No",
        "take mug 1 from countertop 1",
        "Yes",
        "put the mug in cabinet",
        "Cabinet 3 is the target.",
        "go to cabinet 3",
        "No",
        "open cabinet 3",
        "No",
        "put mug 1 in/on cabinet 3",
        "Yes",
        "look around for what is missing",
        "Maybe something else is needed.",
    ]
    .map(String::from)
    .to_vec();
    for i in 5..max_steps {
        r.push("look".into());
        if i + 1 < max_steps {
            r.push("No".into());
        }
    }
    r
}

/// One goal, then the oracle script with a "No" verdict after every action but
/// the last.
pub fn oracle_responses(s: &Scenario) -> Vec<String> {
    let mut r = vec!["complete the task".to_string(), "I know the way.".to_string()];
    for (i, a) in s.oracle.iter().enumerate() {
        r.push(a.clone());
        if i + 1 < s.oracle.len() {
            r.push("No".into());
        }
    }
    r
}

/// One goal and `steps` useless actions, ending at the step cap.
pub fn failing_responses(steps: usize) -> Vec<String> {
    let mut r = vec!["look around".to_string(), "Nothing to do but look.".to_string()];
    for i in 0..steps {
        r.push("look".into());
        if i + 1 < steps {
            r.push("No".into());
        }
    }
    r
}

/// Fixture with `episodes` failing episodes per scenario, each followed by
/// `reflections` reflection texts.
pub fn always_fail_fixture(scenarios: &[Scenario], episodes: u32, reflections: usize) -> FixtureBuilder {
    let mut b = FixtureBuilder::new();
    for s in scenarios {
        for k in 1..=episodes {
            b = b
                .session(s.id.clone(), k)
                .extend(failing_responses(s.env.default_max_steps()));
            for j in 0..reflections {
                b = b.push(format!(
                    "Lesson {j} from episode {k}: check every receptacle before looking again."
                ));
            }
        }
    }
    b
}

/// Independent grammar oracle: a tiny automaton over tag letters, accepting any
/// prefix of (Goal Think (Action Finish)*)+.
pub fn grammar_ok(steps: &[Step]) -> bool {
    let mut state = 'G';
    for (i, s) in steps.iter().enumerate() {
        if s.index != i || s.content.trim().is_empty() {
            return false;
        }
        state = match (state, s.tag, s.content.as_str()) {
            ('G', Tag::Goal, _) => 'T',
            ('T', Tag::Think, _) => 'A',
            ('A', Tag::Action, _) if s.observation.is_some() => 'F',
            ('F', Tag::Finish, "Yes") => 'G',
            ('F', Tag::Finish, "No") => 'A',
            _ => return false,
        };
    }
    true
}

/// Seeded random stand-in for a language model: plausible completions per
/// role, with occasional garbage, wrong step types and empty answers.
pub struct RandomPolicy {
    pub seed: u64,
    pub free: bool,
    pub actions: Vec<String>,
}

impl RandomPolicy {
    pub fn new(seed: u64, scenario: &Scenario, free: bool) -> Self {
        let mut actions = scenario.oracle.clone();
        actions.extend(["look", "inventory", "search[nothing]", "click[Buy Now]", "dance"].map(String::from));
        RandomPolicy { seed, free, actions }
    }

    fn rng(&self, request: &CompletionRequest) -> ChaCha8Rng {
        let mut h = DefaultHasher::new();
        (
            self.seed,
            &request.session,
            request.role_hint as u8,
            request.prompt.len(),
        )
            .hash(&mut h);
        ChaCha8Rng::seed_from_u64(h.finish())
    }
}

impl CompletionBackend for RandomPolicy {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let mut rng = self.rng(request);
        let roll: f64 = rng.gen();
        let text = match request.role_hint {
            RoleHint::Goal => {
                ["find the object", "take it", "finish the job", "explore"][rng.gen_range(0..4)].to_string()
            }
            RoleHint::Think => ["I should act.", "Let me think.", "Keep going."][rng.gen_range(0..3)].to_string(),
            RoleHint::Action => self.actions[rng.gen_range(0..self.actions.len())].clone(),
            RoleHint::Finish => {
                if roll < 0.35 {
                    "Yes".into()
                } else if roll < 0.85 {
                    "No".into()
                } else {
                    "perhaps".into()
                }
            }
            _ => {
                if roll < 0.3 {
                    "Nothing to reflect.".into()
                } else {
                    "Check the receptacle before acting.".into()
                }
            }
        };
        let text = if request.role_hint.is_reflection() {
            text
        } else if roll > 0.93 {
            String::new()
        } else if self.free {
            let tag = match request.role_hint {
                RoleHint::Goal => Tag::Goal,
                RoleHint::Think => Tag::Think,
                RoleHint::Action => Tag::Action,
                _ => Tag::Finish,
            };
            // Sometimes the model picks the wrong step type.
            let tag = if roll > 0.88 { Tag::Think } else { tag };
            format!("{}: {text}", tag.keyword())
        } else {
            text
        };
        Ok(CompletionResponse {
            text,
            usage: Usage::default(),
            provider: "random".into(),
        })
    }

    fn name(&self) -> &str {
        "random"
    }
}
