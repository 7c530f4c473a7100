//! Hindsight modular reflection on a failed episode: one low-level entry per
//! finished sub-goal plus one high-level entry, then routing by cue.
//!
//! cargo run --example hindsight_reflection

use hicrl::backend::{FixtureBuilder, RecordingBackend};
use hicrl::engine::{run_episode, EpisodeInputs, Mode, RunConfig};
use hicrl::envs::{bundled_pack, make_env, EnvId};
use hicrl::hmr::{route_reflections, run_hmr, segment_by_finish, HmrOptions};
use hicrl::memory::LongTermMemory;
use hicrl::promptkit::fixtures::few_shot_examples;
use hicrl::types::Tag;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = bundled_pack(EnvId::MiniHouse)
        .by_id("house-cool-1")
        .expect("bundled")
        .clone();
    // The mug is shelved without being cooled; the agent then wanders.
    let mut script: Vec<String> = [
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
    let max_steps = 8;
    for i in 5..max_steps {
        script.push("look".into());
        if i + 1 < max_steps {
            script.push("No".into());
        }
    }
    script.extend([
        "Nothing to reflect.".to_string(),
        "Putting the mug away was fine, but only after it was cooled.".to_string(),
        "The plan skipped cooling the mug with the fridge before putting it in the cabinet.".to_string(),
    ]);
    let backend = RecordingBackend::new(FixtureBuilder::new().session(&scenario.id, 1).extend(script).backend());

    let mut config = RunConfig::for_env(EnvId::MiniHouse, Mode::Hmr);
    config.max_env_steps = max_steps;
    let examples = few_shot_examples(scenario.env, &scenario.task_type);
    let memory = LongTermMemory::default();
    let inputs = EpisodeInputs {
        scenario: &scenario,
        episode_index: 1,
        memory: &memory,
        examples: &examples,
        config: &config,
    };
    let episode = run_episode(inputs, make_env(scenario.env).as_mut(), &backend)?;
    println!("episode 1: {:?} ({:?})", episode.outcome, episode.termination);
    for (i, seg) in segment_by_finish(&episode.trajectory).iter().enumerate() {
        println!(
            "  segment {}: {:?} finished={} actions={}",
            i + 1,
            seg.goal.text,
            seg.is_finished(),
            seg.action_count()
        );
    }

    let reflections = run_hmr(&scenario.task_text, &episode, &backend, &HmrOptions::default())?;
    println!("\nreflections kept:");
    for r in &reflections {
        println!("  {:?} {:?}: {}", r.level, r.goal_text, r.body);
    }

    let memory = memory.record_reflections(&reflections);
    for cue in [Tag::Goal, Tag::Think, Tag::Action, Tag::Finish] {
        let routed = route_reflections(&memory, cue);
        println!("\n{cue:?} cue sees {} reflection(s)", routed.len());
        for r in routed {
            println!("  - {}", r.body);
        }
    }
    Ok(())
}
