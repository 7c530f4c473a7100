//! Run directory: `manifest.json`, `episodes.jsonl`, `reflections.jsonl`,
//! `report.json`.
//!
//! An episode's reflections are appended before its step lines; the episode
//! trailer line commits both. On reopen, anything after the last trailer and
//! any reflection without a committed episode is discarded.

use super::metrics::RunReport;
use super::HarnessError;
use crate::types::{Episode, EpisodeLine, Reflection};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const REFLECTIONS_FILE: &str = "reflections.jsonl";
pub const REPORT_FILE: &str = "report.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub config_digest: String,
    pub scenarios: Vec<String>,
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn new(config_digest: String, scenarios: Vec<String>, config: serde_json::Value) -> Self {
        Manifest {
            format: FORMAT_VERSION,
            config_digest,
            scenarios,
            config,
        }
    }
}

/// Committed contents of a run directory.
#[derive(Debug, Clone, Default)]
pub struct RunState {
    pub episodes: Vec<Episode>,
    pub reflections: Vec<Reflection>,
}

#[derive(Debug)]
pub struct RunStore {
    dir: PathBuf,
    episodes: File,
    reflections: File,
}

fn corrupt(msg: impl Into<String>) -> HarnessError {
    HarnessError::CorruptManifest(msg.into())
}

fn read_manifest(dir: &Path) -> Result<Manifest, HarnessError> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| corrupt(format!("{MANIFEST_FILE}: {e}")))?;
    if manifest.format != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported format {}", manifest.format)));
    }
    Ok(manifest)
}

fn read_or_empty(path: &Path) -> io::Result<String> {
    match fs::read_to_string(path) {
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(String::new()),
        other => other,
    }
}

/// Committed episodes and the byte length of the committed prefix.
fn scan_episodes(text: &str) -> Result<(Vec<Episode>, usize), HarnessError> {
    let mut episodes = Vec::new();
    let mut pending = Vec::new();
    let mut committed = 0;
    let mut offset = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        offset += line.len();
        if !line.ends_with('\n') {
            break;
        }
        let parsed: EpisodeLine = match serde_json::from_str(line) {
            Ok(p) => p,
            // A torn write can only affect the uncommitted tail.
            Err(_) if text[offset..].trim().is_empty() => break,
            Err(e) => return Err(corrupt(format!("{EPISODES_FILE} line {}: {e}", i + 1))),
        };
        match parsed {
            EpisodeLine::Step(step) => pending.push(step),
            EpisodeLine::Trailer(trailer) => {
                let episode = Episode::from_parts(std::mem::take(&mut pending), trailer)
                    .map_err(|e| corrupt(format!("{EPISODES_FILE} line {}: {e}", i + 1)))?;
                episodes.push(episode);
                committed = offset;
            }
        }
    }
    Ok((episodes, committed))
}

fn scan_reflections(text: &str, committed: &HashSet<(String, u32)>) -> Result<(Vec<Reflection>, bool), HarnessError> {
    let mut kept = Vec::new();
    let mut dropped = false;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        if !line.ends_with('\n') {
            dropped = true;
            break;
        }
        let r: Reflection =
            serde_json::from_str(line).map_err(|e| corrupt(format!("{REFLECTIONS_FILE} line {}: {e}", i + 1)))?;
        if committed.contains(&(r.source_scenario.clone(), r.source_episode)) {
            kept.push(r);
        } else {
            dropped = true;
        }
    }
    Ok((kept, dropped))
}

fn reflection_line(r: &Reflection) -> String {
    serde_json::to_string(r).expect("reflection serializes") + "\n"
}

impl RunStore {
    /// Open `dir` for a run described by `manifest`, creating it if needed and
    /// recovering committed state otherwise.
    pub fn open(dir: &Path, manifest: &Manifest) -> Result<(RunStore, RunState), HarnessError> {
        fs::create_dir_all(dir)?;
        let manifest_path = dir.join(MANIFEST_FILE);
        if manifest_path.exists() {
            let found = read_manifest(dir)?;
            if found.config_digest != manifest.config_digest {
                return Err(corrupt(format!(
                    "config digest {} does not match this run ({})",
                    found.config_digest, manifest.config_digest
                )));
            }
        } else {
            for name in [EPISODES_FILE, REFLECTIONS_FILE] {
                if dir.join(name).exists() {
                    return Err(corrupt(format!("{name} present without {MANIFEST_FILE}")));
                }
            }
            let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
            fs::write(
                &tmp,
                serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n",
            )?;
            fs::rename(&tmp, &manifest_path)?;
        }

        let episodes_path = dir.join(EPISODES_FILE);
        let text = read_or_empty(&episodes_path)?;
        let (episodes, committed_len) = scan_episodes(&text)?;
        let episodes_file = OpenOptions::new().create(true).append(true).open(&episodes_path)?;
        if committed_len < text.len() {
            tracing::warn!(
                bytes = text.len() - committed_len,
                "discarding uncommitted episode lines"
            );
            episodes_file.set_len(committed_len as u64)?;
        }

        let committed: HashSet<(String, u32)> = episodes
            .iter()
            .map(|e| (e.scenario_id.clone(), e.episode_index))
            .collect();
        let reflections_path = dir.join(REFLECTIONS_FILE);
        let (reflections, dropped) = scan_reflections(&read_or_empty(&reflections_path)?, &committed)?;
        if dropped {
            tracing::warn!("discarding uncommitted reflections");
            let tmp = dir.join(format!("{REFLECTIONS_FILE}.tmp"));
            fs::write(&tmp, reflections.iter().map(reflection_line).collect::<String>())?;
            fs::rename(&tmp, &reflections_path)?;
        }
        let reflections_file = OpenOptions::new().create(true).append(true).open(&reflections_path)?;
        Ok((
            RunStore {
                dir: dir.to_path_buf(),
                episodes: episodes_file,
                reflections: reflections_file,
            },
            RunState { episodes, reflections },
        ))
    }

    /// Append one episode and the reflections it produced.
    pub fn commit(&mut self, episode: &Episode, reflections: &[Reflection]) -> io::Result<()> {
        if !reflections.is_empty() {
            let lines: String = reflections.iter().map(reflection_line).collect();
            self.reflections.write_all(lines.as_bytes())?;
            self.reflections.sync_data()?;
        }
        self.episodes.write_all(episode.to_jsonl().as_bytes())?;
        self.episodes.sync_data()
    }

    pub fn write_report(&self, report: &RunReport) -> io::Result<()> {
        let tmp = self.dir.join(format!("{REPORT_FILE}.tmp"));
        fs::write(
            &tmp,
            serde_json::to_string_pretty(report).expect("report serializes") + "\n",
        )?;
        fs::rename(&tmp, self.dir.join(REPORT_FILE))
    }
}

/// Read a run directory without modifying it.
pub fn load_run(dir: &Path) -> Result<(Manifest, RunState), HarnessError> {
    let manifest = read_manifest(dir)?;
    let (episodes, _) = scan_episodes(&read_or_empty(&dir.join(EPISODES_FILE))?)?;
    let committed: HashSet<(String, u32)> = episodes
        .iter()
        .map(|e| (e.scenario_id.clone(), e.episode_index))
        .collect();
    let (reflections, _) = scan_reflections(&read_or_empty(&dir.join(REFLECTIONS_FILE))?, &committed)?;
    Ok((manifest, RunState { episodes, reflections }))
}

pub fn load_report(dir: &Path) -> Result<Option<RunReport>, HarnessError> {
    match fs::read_to_string(dir.join(REPORT_FILE)) {
        Ok(text) => serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| corrupt(format!("{REPORT_FILE}: {e}"))),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}
