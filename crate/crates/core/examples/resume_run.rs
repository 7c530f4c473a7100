//! A persisted run that is cut short by a failing backend and then resumed
//! from its run directory. The resumed transcript matches an uninterrupted
//! run byte for byte.
//!
//! cargo run --example resume_run

use hicrl::backend::{
    BackendError, CompletionBackend, CompletionRequest, CompletionResponse, FixtureBuilder, ScriptedBackend,
};
use hicrl::engine::Mode;
use hicrl::envs::{bundled_pack, EnvId, Scenario};
use hicrl::harness::{run_experiment_in, HarnessConfig, EPISODES_FILE, REFLECTIONS_FILE};
use std::sync::atomic::{AtomicUsize, Ordering};

/// Serves `limit` requests, then fails every call.
struct Flaky {
    inner: ScriptedBackend,
    limit: usize,
    served: AtomicUsize,
}

impl CompletionBackend for Flaky {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        if self.served.fetch_add(1, Ordering::SeqCst) >= self.limit {
            return Err(BackendError::Transport {
                attempts: 1,
                message: "connection reset".into(),
            });
        }
        self.inner.complete(request)
    }

    fn name(&self) -> &str {
        "flaky"
    }
}

/// Every scenario fails three times (one lesson each), then solves.
fn fixture(scenarios: &[Scenario]) -> ScriptedBackend {
    let mut b = FixtureBuilder::new();
    for s in scenarios {
        for k in 1..=3 {
            b = b
                .session(s.id.clone(), k)
                .push("look around")
                .push("Nothing to do but look.");
            for i in 0..s.env.default_max_steps() {
                b = b.push("look");
                if i + 1 < s.env.default_max_steps() {
                    b = b.push("No");
                }
            }
            b = b.push(format!("Episode {k} never left the start; go to the receptacles."));
        }
        b = b
            .session(s.id.clone(), 4)
            .push("complete the task")
            .push("I know the way.");
        for (i, a) in s.oracle.iter().enumerate() {
            b = b.push(a.clone());
            if i + 1 < s.oracle.len() {
                b = b.push("No");
            }
        }
    }
    b.backend()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenarios = bundled_pack(EnvId::MiniHouse).scenarios[..3].to_vec();
    let config = HarnessConfig::new(EnvId::MiniHouse, Mode::Hmr);
    let root = tempfile::tempdir()?;
    let (whole, cut) = (root.path().join("whole"), root.path().join("cut"));

    run_experiment_in(&whole, &scenarios, &config, &fixture(&scenarios))?;

    let flaky = Flaky {
        inner: fixture(&scenarios),
        limit: 500,
        served: AtomicUsize::new(0),
    };
    let partial = run_experiment_in(&cut, &scenarios, &config, &flaky)?;
    println!("first attempt:");
    for s in &partial.per_scenario {
        println!("  {}: {} episode(s), {:?}", s.scenario_id, s.episodes.len(), s.status);
    }

    let resumed = run_experiment_in(&cut, &scenarios, &config, &fixture(&scenarios))?;
    println!("after resume:");
    for s in &resumed.per_scenario {
        println!("  {}: {} episode(s), {:?}", s.scenario_id, s.episodes.len(), s.status);
    }
    print!("{}", resumed.render_table());

    for name in [EPISODES_FILE, REFLECTIONS_FILE] {
        let same = std::fs::read(whole.join(name))? == std::fs::read(cut.join(name))?;
        println!("{name} identical to the uninterrupted run: {same}");
    }
    Ok(())
}
