//! Command-line entry point: `run`, `report`, `replay` and `oracle`.
//!
//! Settings resolve as flags, then the `--config` file (`key = value` lines),
//! then `HICRL_*` environment variables, then defaults.

use crate::backend::{
    CompletionBackend, HttpBackend, HttpConfig, RecordingBackend, ScriptedBackend, API_KEY_ENV, BASE_URL_ENV,
};
use crate::engine::{first_prompt, Mode};
use crate::envs::shop::can_satisfy;
use crate::envs::{bundled_pack, load_pack, run_oracle, EnvId, Scenario, World};
use crate::harness::{load_report, load_run, report_from_dir, run_experiment_in, HarnessConfig, ScenarioStatus};
use crate::memory::LongTermMemory;
use crate::promptkit::fixtures::few_shot_examples;
use crate::promptkit::{render_trajectory, PromptStyle};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const EXIT_OK: i32 = 0;
pub const EXIT_SCENARIO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Debug, Parser)]
#[command(
    name = "hicrl",
    version,
    about = "Hierarchical in-context RL agents with hindsight modular reflection"
)]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run (or resume) an experiment.
    Run(RunArgs),
    /// Print the success table of a run directory.
    Report(ReportArgs),
    /// Print a persisted episode as tagged text.
    Replay(ReplayArgs),
    /// Check that every bundled scenario is solvable by its oracle script.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Http,
    Scripted,
}

impl FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Debug, Default, Args)]
struct RunArgs {
    /// Plain-text `key = value` settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// minihouse, minishop or miniwiki [default: minihouse]
    #[arg(long)]
    env: Option<String>,
    /// hmr, reflexion, retry or notag [default: hmr]
    #[arg(long)]
    mode: Option<String>,
    /// Episodes per scenario [default: 5]
    #[arg(long)]
    episodes: Option<u32>,
    /// http or scripted [default: http]
    #[arg(long)]
    backend: Option<String>,
    /// JSONL fixture for the scripted backend.
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Model name for the http backend [default: gpt-3.5-turbo]
    #[arg(long)]
    model: Option<String>,
    /// OpenAI-compatible API root [default: https://api.openai.com/v1]
    #[arg(long)]
    base_url: Option<String>,
    /// Run directory; an existing one is resumed.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scenarios run in parallel [default: 1]
    #[arg(long)]
    workers: Option<usize>,
    /// Run only the scenario with this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run only the first N scenarios.
    #[arg(long)]
    limit: Option<usize>,
    /// Scenario pack file instead of the bundled one.
    #[arg(long)]
    pack: Option<PathBuf>,
    /// Prompt size limit in characters
    #[arg(long)]
    char_budget: Option<usize>,
    /// Environment step cap per episode
    #[arg(long)]
    max_steps: Option<usize>,
    /// Reflection entries kept per scenario [default: 12]
    #[arg(long)]
    memory_budget: Option<usize>,
    /// Rate limit for the http backend
    #[arg(long)]
    requests_per_minute: Option<u32>,
    /// Write every exchange of an http run to this fixture file.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Print the first assembled prompt and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    dir: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    dir: PathBuf,
    #[arg(long)]
    scenario: String,
    /// Defaults to every episode of the scenario.
    #[arg(long)]
    episode: Option<u32>,
    /// Render with tag-free step labels.
    #[arg(long)]
    tag_free: bool,
}

#[derive(Debug, Args)]
struct OracleArgs {
    /// Defaults to all environments.
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    pack: Option<PathBuf>,
}

/// A usage or configuration error, reported with exit code 2.
#[derive(Debug)]
struct Usage(String);

impl<E: std::fmt::Display> From<E> for Usage {
    fn from(e: E) -> Self {
        Usage(e.to_string())
    }
}

const CONFIG_KEYS: [&str; 17] = [
    "env",
    "mode",
    "episodes",
    "backend",
    "fixture",
    "model",
    "base_url",
    "out",
    "workers",
    "seed",
    "limit",
    "pack",
    "char_budget",
    "max_steps",
    "memory_budget",
    "requests_per_minute",
    "record",
];

/// Parse a `key = value` settings file. `#` starts a comment line; keys may
/// use `-` or `_`.
pub fn parse_config_file(text: &str) -> Result<HashMap<String, String>, String> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
        let key = key.trim().replace('-', "_");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(format!("line {}: unknown key {key:?}", i + 1));
        }
        let value = value.trim().trim_matches('"').to_string();
        out.insert(key, value);
    }
    Ok(out)
}

/// Settings after precedence resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub env: EnvId,
    pub mode: Mode,
    pub episodes: u32,
    pub backend: BackendKind,
    pub fixture: Option<PathBuf>,
    pub model: String,
    pub base_url: String,
    pub out: PathBuf,
    pub workers: usize,
    pub seed: Option<u64>,
    pub limit: Option<usize>,
    pub pack: Option<PathBuf>,
    pub char_budget: Option<usize>,
    pub max_steps: Option<usize>,
    pub memory_budget: Option<usize>,
    pub requests_per_minute: Option<u32>,
    pub record: Option<PathBuf>,
}

struct Layers<'a> {
    file: HashMap<String, String>,
    env_var: &'a dyn Fn(&str) -> Option<String>,
}

impl Layers<'_> {
    fn pick<T: FromStr>(&self, key: &str, flag: Option<T>, env_name: Option<&str>) -> Result<Option<T>, Usage>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        let raw = self.file.get(key).cloned().or_else(|| {
            env_name
                .and_then(|n| (self.env_var)(n))
                .filter(|v| !v.trim().is_empty())
        });
        raw.map(|v| v.parse::<T>().map_err(|e| Usage(format!("{key}: {e}"))))
            .transpose()
    }
}

fn resolve(args: RunArgs, env_var: &dyn Fn(&str) -> Option<String>) -> Result<Resolved, Usage> {
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Usage(format!("{}: {e}", path.display())))?;
            parse_config_file(&text).map_err(|e| Usage(format!("{}: {e}", path.display())))?
        }
        None => HashMap::new(),
    };
    let l = Layers { file, env_var };
    let env: EnvId = l
        .pick("env", args.env.map(|s| s.parse()).transpose()?, None)?
        .unwrap_or(EnvId::MiniHouse);
    let mode: Mode = l
        .pick("mode", args.mode.map(|s| s.parse()).transpose()?, None)?
        .unwrap_or_default();
    let backend: BackendKind = l
        .pick("backend", args.backend.map(|s| s.parse()).transpose()?, None)?
        .unwrap_or(BackendKind::Http);
    let resolved = Resolved {
        env,
        mode,
        episodes: l
            .pick("episodes", args.episodes, None)?
            .unwrap_or(crate::harness::DEFAULT_EPISODES),
        backend,
        fixture: l.pick("fixture", args.fixture, None)?,
        model: l
            .pick("model", args.model, None)?
            .unwrap_or_else(|| DEFAULT_MODEL.to_string()),
        base_url: l
            .pick("base_url", args.base_url, Some(BASE_URL_ENV))?
            .unwrap_or_else(|| DEFAULT_BASE_URL.to_string()),
        out: l
            .pick("out", args.out, None)?
            .unwrap_or_else(|| PathBuf::from(format!("runs/{env}-{mode}"))),
        workers: l.pick("workers", args.workers, None)?.unwrap_or(1),
        seed: l.pick("seed", args.seed, None)?,
        limit: l.pick("limit", args.limit, None)?,
        pack: l.pick("pack", args.pack, None)?,
        char_budget: l.pick("char_budget", args.char_budget, None)?,
        max_steps: l.pick("max_steps", args.max_steps, None)?,
        memory_budget: l.pick("memory_budget", args.memory_budget, None)?,
        requests_per_minute: l.pick("requests_per_minute", args.requests_per_minute, None)?,
        record: l.pick("record", args.record, None)?,
    };
    match resolved.backend {
        BackendKind::Scripted if resolved.fixture.is_none() => {
            return Err(Usage("the scripted backend requires --fixture".into()))
        }
        BackendKind::Scripted if resolved.record.is_some() => {
            return Err(Usage("--record only applies to the http backend".into()))
        }
        BackendKind::Http if resolved.fixture.is_some() => {
            return Err(Usage("--fixture only applies to the scripted backend".into()))
        }
        _ => {}
    }
    if resolved.workers == 0 || resolved.episodes == 0 {
        return Err(Usage("--workers and --episodes must be at least 1".into()));
    }
    Ok(resolved)
}

fn load_scenarios(env: EnvId, pack: Option<&Path>) -> Result<Vec<Scenario>, Usage> {
    match pack {
        Some(path) => {
            let pack = load_pack(path)?;
            if pack.env != env {
                return Err(Usage(format!("{} is a {} pack", path.display(), pack.env)));
            }
            Ok(pack.scenarios)
        }
        None => Ok(bundled_pack(env).scenarios.clone()),
    }
}

fn harness_config(r: &Resolved) -> HarnessConfig {
    let mut config = HarnessConfig::new(r.env, r.mode);
    config.episodes = r.episodes;
    config.workers = r.workers;
    if let Some(b) = r.char_budget {
        config.run.char_budget = b;
    }
    if let Some(s) = r.max_steps {
        config.run.max_env_steps = s;
    }
    if let Some(m) = r.memory_budget {
        config.memory_budget = m;
    }
    config
}

fn cmd_run(args: RunArgs) -> Result<i32, Usage> {
    let dry_run = args.dry_run;
    let r = resolve(args, &|name| std::env::var(name).ok())?;
    let mut scenarios = load_scenarios(r.env, r.pack.as_deref())?;
    if let Some(seed) = r.seed {
        scenarios.retain(|s| s.seed == seed);
        if scenarios.is_empty() {
            return Err(Usage(format!("no {} scenario with seed {seed}", r.env)));
        }
    }
    if let Some(n) = r.limit {
        scenarios.truncate(n);
    }
    let config = harness_config(&r);
    config.validate()?;

    if dry_run {
        let Some(first) = scenarios.first() else {
            return Err(Usage("no scenarios selected".into()));
        };
        let examples = few_shot_examples(first.env, &first.task_type);
        let prompt = first_prompt(
            first,
            &LongTermMemory::new(config.memory_budget),
            &examples,
            &config.run,
        )
        .map_err(|e| Usage(e.to_string()))?;
        println!("{prompt}");
        return Ok(EXIT_OK);
    }

    let backend: Box<dyn CompletionBackend> = match r.backend {
        BackendKind::Scripted => {
            let path = r.fixture.as_ref().expect("checked in resolve");
            Box::new(ScriptedBackend::load(path)?)
        }
        BackendKind::Http => {
            let key = std::env::var(API_KEY_ENV).unwrap_or_default();
            if key.trim().is_empty() {
                return Err(Usage(format!("{API_KEY_ENV} must be set for the http backend")));
            }
            let mut http = HttpConfig::new(&r.base_url, &r.model, key);
            http.requests_per_minute = r.requests_per_minute;
            Box::new(HttpBackend::new(http)?)
        }
    };
    let recording = r.record.as_ref().map(|_| RecordingBackend::new(&backend));
    let result = match &recording {
        Some(rec) => run_experiment_in(&r.out, &scenarios, &config, rec),
        None => run_experiment_in(&r.out, &scenarios, &config, &backend),
    };
    if let (Some(rec), Some(path)) = (&recording, &r.record) {
        if let Err(e) = rec.write_fixture(path) {
            eprintln!("error: writing {}: {e}", path.display());
        }
    }
    let report = match result {
        Ok(report) => report,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_SCENARIO);
        }
    };
    print!("{}", report.render_table());
    println!("run directory: {}", r.out.display());
    let aborted = report.count(|s| matches!(s, ScenarioStatus::Aborted { .. }));
    Ok(if aborted > 0 { EXIT_SCENARIO } else { EXIT_OK })
}

fn cmd_report(args: ReportArgs) -> Result<i32, Usage> {
    let report = match load_report(&args.dir) {
        Ok(Some(report)) => report,
        Ok(None) => {
            let (manifest, _) = load_run(&args.dir)?;
            let env: EnvId = manifest
                .config
                .get("env")
                .and_then(|v| v.as_str())
                .ok_or_else(|| Usage("manifest has no env".into()))?
                .parse()?;
            report_from_dir(&args.dir, &bundled_pack(env).scenarios)?
        }
        Err(e) => return Err(Usage(e.to_string())),
    };
    match args.format {
        Format::Text => print!("{}", report.render_table()),
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(EXIT_OK)
}

fn cmd_replay(args: ReplayArgs) -> Result<i32, Usage> {
    let (manifest, state) = load_run(&args.dir)?;
    let task = manifest
        .config
        .get("env")
        .and_then(|v| v.as_str())
        .and_then(|e| e.parse::<EnvId>().ok())
        .and_then(|env| bundled_pack(env).by_id(&args.scenario))
        .map(|s| s.task_text.clone());
    let episodes: Vec<_> = state
        .episodes
        .iter()
        .filter(|e| e.scenario_id == args.scenario && args.episode.is_none_or(|k| e.episode_index == k))
        .collect();
    if episodes.is_empty() {
        eprintln!("no matching episode for {} in {}", args.scenario, args.dir.display());
        return Ok(EXIT_SCENARIO);
    }
    let style = if args.tag_free {
        PromptStyle::TagFree
    } else {
        PromptStyle::Tagged
    };
    for e in episodes {
        println!(
            "# {} episode {}: {:?} ({:?})",
            e.scenario_id, e.episode_index, e.outcome, e.termination
        );
        if let Some(task) = &task {
            println!("{task}");
        }
        println!("{}", render_trajectory(&e.trajectory.steps, style));
        let reflections: Vec<_> = state
            .reflections
            .iter()
            .filter(|r| r.source_scenario == e.scenario_id && r.source_episode == e.episode_index)
            .collect();
        for r in reflections {
            match &r.goal_text {
                Some(goal) => println!("Reflection ({:?}, {goal}): {}", r.level, r.body),
                None => println!("Reflection ({:?}): {}", r.level, r.body),
            }
        }
        println!();
    }
    Ok(EXIT_OK)
}

/// Problems found when checking a scenario's solvability; empty means fine.
pub fn check_scenario(scenario: &Scenario) -> Vec<String> {
    let mut problems = Vec::new();
    match run_oracle(scenario) {
        Ok(run) if !run.success => problems.push("oracle script does not reach success".into()),
        Ok(run) if run.steps > scenario.env.default_max_steps() => problems.push(format!(
            "oracle needs {} steps, cap is {}",
            run.steps,
            scenario.env.default_max_steps()
        )),
        Ok(_) => {}
        Err(e) => problems.push(e.to_string()),
    }
    if let World::Shop { catalog, gold } = &scenario.world {
        if !catalog.iter().any(|item| can_satisfy(item, gold)) {
            problems.push("no catalog item satisfies the gold constraints".into());
        }
    }
    problems
}

fn cmd_oracle(args: OracleArgs) -> Result<i32, Usage> {
    let envs = match &args.env {
        Some(e) => vec![e.parse::<EnvId>()?],
        None => EnvId::ALL.to_vec(),
    };
    if args.pack.is_some() && envs.len() != 1 {
        return Err(Usage("--pack needs --env".into()));
    }
    let mut failures = 0;
    let mut total = 0;
    for env in envs {
        let scenarios = load_scenarios(env, args.pack.as_deref())?;
        for s in &scenarios {
            total += 1;
            let problems = check_scenario(s);
            if problems.is_empty() {
                println!("ok   {}", s.id);
            } else {
                failures += 1;
                println!("FAIL {}: {}", s.id, problems.join("; "));
            }
        }
    }
    println!("{} of {total} scenarios solvable", total - failures);
    Ok(if failures == 0 { EXIT_OK } else { EXIT_SCENARIO })
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

/// Parse `argv` (including the program name) and run the subcommand.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose);
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Report(args) => cmd_report(args),
        Command::Replay(args) => cmd_replay(args),
        Command::Oracle(args) => cmd_oracle(args),
    };
    match result {
        Ok(code) => code,
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `hicrl help` for usage");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_env(_: &str) -> Option<String> {
        None
    }

    #[test]
    fn config_file_parsing() {
        let m = parse_config_file("# c\nenv = minishop\nbase-url = \"http://x\"\n\n").unwrap();
        assert_eq!(m["env"], "minishop");
        assert_eq!(m["base_url"], "http://x");
        assert!(parse_config_file("colour = red").is_err());
        assert!(parse_config_file("env minishop").is_err());
    }

    #[test]
    fn flag_beats_file_beats_env_beats_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.conf");
        std::fs::write(&path, "base_url = http://file\nmode = retry\n").unwrap();
        let env = |name: &str| (name == BASE_URL_ENV).then(|| "http://env".to_string());

        let r = resolve(RunArgs::default(), &env).unwrap();
        assert_eq!(r.base_url, "http://env");
        assert_eq!(r.mode, Mode::Hmr);

        let args = RunArgs {
            config: Some(path.clone()),
            ..Default::default()
        };
        let r = resolve(args, &env).unwrap();
        assert_eq!(r.base_url, "http://file");
        assert_eq!(r.mode, Mode::Retry);

        let args = RunArgs {
            config: Some(path),
            base_url: Some("http://flag".into()),
            ..Default::default()
        };
        assert_eq!(resolve(args, &env).unwrap().base_url, "http://flag");
        assert_eq!(resolve(RunArgs::default(), &no_env).unwrap().base_url, DEFAULT_BASE_URL);
    }

    #[test]
    fn conflicts_are_usage_errors() {
        let scripted = RunArgs {
            backend: Some("scripted".into()),
            ..Default::default()
        };
        assert!(resolve(scripted, &no_env).is_err());
        let http_fixture = RunArgs {
            fixture: Some("f.jsonl".into()),
            ..Default::default()
        };
        assert!(resolve(http_fixture, &no_env).is_err());
        let bad_mode = RunArgs {
            mode: Some("sideways".into()),
            ..Default::default()
        };
        assert!(resolve(bad_mode, &no_env).is_err());
    }

    #[test]
    fn every_bundled_scenario_checks_out() {
        for env in EnvId::ALL {
            for s in &bundled_pack(env).scenarios {
                assert!(check_scenario(s).is_empty(), "{}", s.id);
            }
        }
    }
}
