//! One episode on MiniHouse driven by a scripted backend: three sub-goals,
//! each closed by the finisher.
//!
//! cargo run --example scripted_episode

use hicrl::backend::{FixtureBuilder, RecordingBackend};
use hicrl::engine::{run_episode, EpisodeInputs, Mode, RunConfig};
use hicrl::envs::{bundled_pack, make_env, EnvId};
use hicrl::memory::LongTermMemory;
use hicrl::promptkit::fixtures::few_shot_examples;
use hicrl::promptkit::{render_trajectory, PromptStyle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = bundled_pack(EnvId::MiniHouse)
        .by_id("house-cool-1")
        .expect("bundled")
        .clone();
    let script = [
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
    ];
    let backend = RecordingBackend::new(FixtureBuilder::new().session(&scenario.id, 1).extend(script).backend());

    let config = RunConfig::for_env(EnvId::MiniHouse, Mode::Hmr);
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

    println!("{}", scenario.task_text);
    println!("{}", render_trajectory(&episode.trajectory.steps, PromptStyle::Tagged));
    println!();
    println!(
        "outcome {:?}, reward {}, {} sub-goals ({} finished), {} completion calls",
        episode.outcome,
        episode.reward,
        episode.trajectory.goals.len(),
        episode.trajectory.finished_goals(),
        backend.exchanges().len()
    );
    let last = backend.exchanges().into_iter().last().expect("calls");
    println!("\nlast prompt ({:?}), tail:", last.request.role_hint);
    let lines: Vec<&str> = last.request.prompt.lines().collect();
    for line in &lines[lines.len().saturating_sub(8)..] {
        println!("  {line}");
    }
    Ok(())
}
