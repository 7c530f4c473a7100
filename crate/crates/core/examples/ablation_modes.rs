//! The four learning modes on the same scripted workload. Scenario i fails
//! `i % 3` times before solving; what each mode stores between episodes
//! differs, and so do the prompts of the next attempt.
//!
//! cargo run --example ablation_modes

use hicrl::backend::{FixtureBuilder, RecordingBackend, RoleHint};
use hicrl::engine::Mode;
use hicrl::envs::{bundled_pack, EnvId, Scenario};
use hicrl::harness::{run_experiment, HarnessConfig};

fn decisions(mode: Mode, texts: Vec<(&str, String)>) -> Vec<String> {
    texts
        .into_iter()
        .map(|(kind, text)| match mode {
            Mode::Notag => format!("{kind}: {text}"),
            _ => text,
        })
        .collect()
}

fn failing(mode: Mode, steps: usize) -> Vec<String> {
    let mut r = vec![
        ("goal", "look around".to_string()),
        ("think", "I will look.".to_string()),
    ];
    for i in 0..steps {
        r.push(("action", "look".into()));
        if i + 1 < steps {
            r.push(("finish", "No".into()));
        }
    }
    decisions(mode, r)
}

fn solving(mode: Mode, s: &Scenario) -> Vec<String> {
    let mut r = vec![
        ("goal", "complete the task".to_string()),
        ("think", "I know the way.".to_string()),
    ];
    for (i, a) in s.oracle.iter().enumerate() {
        r.push(("action", a.clone()));
        if i + 1 < s.oracle.len() {
            r.push(("finish", "No".into()));
        }
    }
    decisions(mode, r)
}

fn fixture(mode: Mode, scenarios: &[Scenario]) -> FixtureBuilder {
    let mut b = FixtureBuilder::new();
    for (i, s) in scenarios.iter().enumerate() {
        let fails = (i % 3) as u32;
        for k in 1..=fails {
            b = b
                .session(s.id.clone(), k)
                .extend(failing(mode, s.env.default_max_steps()));
            if mode != Mode::Retry {
                b = b.push(format!(
                    "Attempt {k} only looked around; search the receptacles named in the task."
                ));
            }
        }
        b = b.session(s.id.clone(), fails + 1).extend(solving(mode, s));
    }
    b
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenarios = bundled_pack(EnvId::MiniHouse).scenarios[..6].to_vec();
    for mode in Mode::ALL {
        let backend = RecordingBackend::new(fixture(mode, &scenarios).backend());
        let mut config = HarnessConfig::new(EnvId::MiniHouse, mode);
        config.episodes = 3;
        let report = run_experiment(&scenarios, &config, &backend)?;
        println!("== {mode} ==");
        print!("{}", report.render_table());

        let exchanges = backend.exchanges();
        let reflections = exchanges.iter().filter(|e| e.request.role_hint.is_reflection()).count();
        let goal2 = exchanges
            .iter()
            .find(|e| {
                e.request.session.scenario == scenarios[1].id
                    && e.request.session.episode == 2
                    && e.request.role_hint == RoleHint::Goal
            })
            .expect("episode 2 goal prompt");
        println!(
            "{reflections} reflection call(s); episode-2 goal prompt of {} is {} chars",
            scenarios[1].id,
            goal2.request.prompt.chars().count()
        );
        let memory: Vec<&str> = goal2
            .request
            .prompt
            .split("\n\n")
            .filter(|b| b.starts_with("Lessons") || b.starts_with("Previous failed"))
            .collect();
        for block in memory {
            let lines: Vec<&str> = block.lines().collect();
            println!("  {}", lines[0]);
            for line in lines.iter().skip(1).take(3) {
                println!("    {line}");
            }
            if lines.len() > 4 {
                println!("    ... {} more line(s)", lines.len() - 4);
            }
        }
        println!();
    }
    Ok(())
}
