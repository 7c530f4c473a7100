//! Prompt assembly for each cue, and what happens as the character budget
//! shrinks: old sub-goals are elided, then examples are dropped, and finally
//! the budget error.
//!
//! cargo run --example prompt_assembly

use hicrl::envs::EnvId;
use hicrl::promptkit::fixtures::few_shot_examples;
use hicrl::promptkit::{assemble_prompt, PromptBundle, PromptStyle};
use hicrl::types::{Reflection, ReflectionLevel, Tag, Trajectory};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let task = "Your task is to: put a clean apple in fridge.";
    let mut t = Trajectory::new();
    t.propose_goal("find an apple and take it")?;
    t.push_think("Apples are often on the countertop.")?;
    t.push_action("go to countertop 1", "On the countertop 1, you see a apple 1.")?;
    t.push_finish(false, None)?;
    t.push_action(
        "take apple 1 from countertop 1",
        "You pick up the apple 1 from the countertop 1.",
    )?;
    t.push_finish(true, None)?;
    t.propose_goal("clean the apple with the sinkbasin")?;
    t.push_think("The sinkbasin is where things get cleaned.")?;
    t.push_action("go to sinkbasin 1", "You arrive at sinkbasin 1.")?;

    let examples = few_shot_examples(EnvId::MiniHouse, "clean");
    let lessons = [Reflection {
        level: ReflectionLevel::High,
        goal_text: None,
        body: "Clean the object before heading to the fridge.".into(),
        source_episode: 1,
        source_scenario: "house-clean-1".into(),
    }];

    let goal = t.active_goal().cloned();
    let finish = PromptBundle::new(task, &t, Tag::Finish).goal_context(goal.as_ref());
    println!(
        "== Finish prompt (active sub-goal only) ==\n{}\n",
        assemble_prompt(&finish, 24_000)?
    );

    let action = PromptBundle::new(task, &t, Tag::Action)
        .examples(&examples)
        .reflections(&lessons);
    let full = assemble_prompt(&action, 24_000)?;
    println!("== Action prompt, tail ==");
    for line in full.lines().skip_while(|l| !l.starts_with("Lessons")) {
        println!("{line}");
    }

    println!("\n== budget sweep ==");
    let n = full.chars().count();
    for budget in [n, n - 50, 1200, 150] {
        match assemble_prompt(&action, budget) {
            Ok(p) => println!(
                "budget {budget:>5}: {:>5} chars, examples kept: {}, elided: {}",
                p.chars().count(),
                p.contains("Here are examples:"),
                p.lines().any(|l| l.contains("earlier sub-goal"))
            ),
            Err(e) => println!("budget {budget:>5}: {e}"),
        }
    }

    let free = assemble_prompt(&action.style(PromptStyle::TagFree), 24_000)?;
    println!("\n== tag-free style, last lines ==");
    let lines: Vec<&str> = free.lines().collect();
    for line in &lines[lines.len() - 4..] {
        println!("{line}");
    }
    Ok(())
}
