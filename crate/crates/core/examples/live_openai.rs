//! Live run against an OpenAI-compatible endpoint: the MiniHouse scenarios,
//! five episodes, hmr against reflexion. Each run's exchanges are recorded to
//! a fixture so it can be replayed offline.
//!
//! HICRL_API_KEY=sk-... cargo run --example live_openai [model] [scenarios]
//!
//! `HICRL_BASE_URL` may point at any chat-completions server.

use hicrl::backend::{HttpBackend, HttpConfig, RecordingBackend, API_KEY_ENV, BASE_URL_ENV};
use hicrl::engine::Mode;
use hicrl::envs::{bundled_pack, EnvId};
use hicrl::harness::{run_experiment, HarnessConfig, RunReport};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let model = args.next().unwrap_or_else(|| "gpt-3.5-turbo".into());
    let limit: usize = args.next().map(|n| n.parse()).transpose()?.unwrap_or(24);
    let base_url = std::env::var(BASE_URL_ENV).unwrap_or_else(|_| "https://api.openai.com/v1".into());
    let Ok(mut http) = HttpConfig::from_env(&base_url, &model) else {
        eprintln!("set {API_KEY_ENV} to run this example");
        return Ok(());
    };
    http.requests_per_minute = Some(120);
    let client = HttpBackend::new(http)?;

    let pack = bundled_pack(EnvId::MiniHouse);
    let scenarios = &pack.scenarios[..limit.min(pack.scenarios.len())];
    let mut reports: Vec<RunReport> = Vec::new();
    for mode in [Mode::Hmr, Mode::Reflexion] {
        let backend = RecordingBackend::new(client.clone());
        let mut config = HarnessConfig::new(EnvId::MiniHouse, mode);
        config.workers = 4;
        let report = run_experiment(scenarios, &config, &backend)?;
        print!("{}", report.render_table());
        let fixture = std::env::temp_dir().join(format!("hicrl-live-{mode}.jsonl"));
        backend.write_fixture(&fixture)?;
        println!(
            "{} exchanges recorded to {}\n",
            backend.exchanges().len(),
            fixture.display()
        );
        reports.push(report);
    }

    println!("{:<8}{:>8}{:>8}{:>8}", "episode", "hmr", "reflex", "delta");
    for k in 1..=reports[0].episodes {
        let (h, r) = (reports[0].success_at[&k], reports[1].success_at[&k]);
        println!("{k:<8}{:>8.1}{:>8.1}{:>+8.1}", h * 100.0, r * 100.0, (h - r) * 100.0);
    }
    let hmr = &reports[0].success_at;
    println!(
        "hmr success_at[5] >= success_at[1]: {}",
        hmr[&reports[0].episodes] >= hmr[&1]
    );
    Ok(())
}
