//! Executing one configured run and persisting its products.
//!
//! A run directory holds:
//!
//! - `config.cfg`: the configuration text;
//! - `curve.csv`: the learning curve, downsampled to the configured interval;
//! - `archive.bin`, `archive.csv`, `archive_log.csv` (MAP-Elites) or
//!   `checkpoint.bin` (PPO);
//! - `record.json`: written last, it marks the run complete;
//! - `failure.txt` instead of `record.json` when the run failed.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::artifacts::{write_archive, write_checkpoint};
use super::{HarnessError, HyperParams, RunConfig};
use crate::qd::{evolve, EvolveOutput};
use crate::rl::{train, TrainOutput};

pub const CONFIG_FILE: &str = "config.cfg";
pub const CURVE_FILE: &str = "curve.csv";
pub const RECORD_FILE: &str = "record.json";
pub const FAILURE_FILE: &str = "failure.txt";
pub const ARCHIVE_FILE: &str = "archive.bin";
pub const ARCHIVE_CSV: &str = "archive.csv";
pub const ARCHIVE_LOG: &str = "archive_log.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

pub const ME_CURVE_HEADER: &str = "generation,frames,best_fitness_meters,occupancy,inserted";
pub const PPO_CURVE_HEADER: &str = "iteration,frames,mean_episode_reward_meters,eval_reward_meters,\
policy_loss,value_loss,entropy,approx_kl,clip_fraction";

#[derive(Debug, Clone)]
pub enum RunOutcome {
    MapElites(EvolveOutput),
    Ppo(TrainOutput),
}

impl RunOutcome {
    pub fn frames(&self) -> u64 {
        match self {
            RunOutcome::MapElites(o) => o.frames,
            RunOutcome::Ppo(o) => o.frames,
        }
    }

    /// Best archive fitness, or the final mean-policy return.
    pub fn final_performance(&self) -> f64 {
        match self {
            RunOutcome::MapElites(o) => o.archive.best_fitness().unwrap_or(f64::NEG_INFINITY),
            RunOutcome::Ppo(o) => o.final_reward(),
        }
    }

    /// `(frames, performance)` at every generation or iteration.
    pub fn performance_curve(&self) -> Vec<(u64, f64)> {
        match self {
            RunOutcome::MapElites(o) => o.curve.iter().map(|p| (p.frames, p.best_fitness)).collect(),
            RunOutcome::Ppo(o) => o.curve.iter().map(|p| (p.frames, p.eval_reward)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: String,
    pub algorithm: String,
    pub mode: String,
    pub env: String,
    pub run_seed: u64,
    pub budget_frames: u64,
    pub frames: u64,
    /// Generations (MAP-Elites) or iterations (PPO) completed.
    pub updates: u64,
    /// Best archive fitness or final mean-policy return, meters.
    pub final_performance: f64,
    pub curve_rows: usize,
    pub artifacts: Vec<String>,
    pub wall_clock_seconds: f64,
}

/// Runs the configured algorithm in memory.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome, HarnessError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    Ok(match &cfg.hyper {
        HyperParams::MapElites(hp) => RunOutcome::MapElites(evolve(&cfg.env, cfg.mode, hp, &mut rng, cfg.budget_frames)?),
        HyperParams::Ppo(hp) => RunOutcome::Ppo(train(&cfg.env, cfg.mode, hp, &mut rng, cfg.budget_frames)?),
    })
}

/// Runs into `<output_dir>/<run name>`.
pub fn run(cfg: &RunConfig) -> Result<RunRecord, HarnessError> {
    run_in(cfg, &cfg.output_dir.join(cfg.run_name()))
}

/// Runs into `dir`. A completed run there is never touched; leftovers of an
/// incomplete one are replaced.
pub fn run_in(cfg: &RunConfig, dir: &Path) -> Result<RunRecord, HarnessError> {
    cfg.validate()?;
    if dir.join(RECORD_FILE).exists() {
        return Err(HarnessError::AlreadyComplete(dir.to_path_buf()));
    }
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(HarnessError::io(dir))?;
    }
    fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    let text = cfg.to_string();
    write_file(&dir.join(CONFIG_FILE), text.as_bytes())?;

    let start = Instant::now();
    let result = execute(cfg).and_then(|outcome| {
        let performance = outcome.final_performance();
        if !performance.is_finite() {
            return Err(HarnessError::Format(format!("run ended with non-finite performance {performance}")));
        }
        Ok(outcome)
    });
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            write_file(&dir.join(FAILURE_FILE), format!("{e}\n").as_bytes())?;
            return Err(e);
        }
    };

    let (rows, artifacts, updates) = match &outcome {
        RunOutcome::MapElites(o) => {
            let HyperParams::MapElites(hp) = &cfg.hyper else { unreachable!() };
            let rows = write_me_products(dir, cfg, &text, hp, o)?;
            (rows, vec![ARCHIVE_FILE, ARCHIVE_CSV, ARCHIVE_LOG], o.curve.len() as u64)
        }
        RunOutcome::Ppo(o) => {
            let rows = write_ppo_products(dir, cfg, &text, o)?;
            (rows, vec![CHECKPOINT_FILE], o.curve.len() as u64)
        }
    };
    let record = RunRecord {
        config: text,
        algorithm: cfg.algorithm().as_str().into(),
        mode: cfg.mode.as_str().into(),
        env: cfg.env.name().into(),
        run_seed: cfg.master_seed,
        budget_frames: cfg.budget_frames,
        frames: outcome.frames(),
        updates,
        final_performance: outcome.final_performance(),
        curve_rows: rows,
        artifacts: artifacts.into_iter().map(String::from).collect(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&record).map_err(|e| HarnessError::Format(e.to_string()))?;
    write_file(&dir.join(RECORD_FILE), format!("{json}\n").as_bytes())?;
    Ok(record)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, bytes).map_err(HarnessError::io(path))
}

/// Indices of the rows kept: the first, the last, and every row at least
/// `interval` frames after the previously kept one.
pub fn downsample(frames: &[u64], interval: u64) -> Vec<usize> {
    let mut kept = Vec::new();
    let mut last: Option<u64> = None;
    for (i, &f) in frames.iter().enumerate() {
        let due = match last {
            None => true,
            Some(l) => interval == 0 || f >= l + interval || i + 1 == frames.len(),
        };
        if due {
            kept.push(i);
            last = Some(f);
        }
    }
    kept
}

fn write_me_products(
    dir: &Path,
    cfg: &RunConfig,
    text: &str,
    hp: &crate::qd::MeHyperParams,
    out: &EvolveOutput,
) -> Result<usize, HarnessError> {
    let frames: Vec<u64> = out.curve.iter().map(|p| p.frames).collect();
    let kept = downsample(&frames, cfg.curve_interval_frames);
    let mut csv = format!("{ME_CURVE_HEADER}\n");
    for &i in &kept {
        let p = &out.curve[i];
        writeln!(csv, "{},{},{},{},{}", p.generation, p.frames, p.best_fitness, p.occupancy, p.inserted).unwrap();
    }
    write_file(&dir.join(CURVE_FILE), csv.as_bytes())?;

    let path = dir.join(ARCHIVE_FILE);
    let file = fs::File::create(&path).map_err(HarnessError::io(&path))?;
    let mut w = BufWriter::new(file);
    write_archive(&mut w, text, &out.archive, &hp.arch(cfg.mode, cfg.env.action_limit()))?;
    w.flush().map_err(HarnessError::io(&path))?;

    let mut csv = String::from("cell,b0,b1,b2,b3,b4,b5,fitness_meters,generation_added\n");
    for (cell, e) in out.archive.iter() {
        let b = e.descriptor.buckets;
        writeln!(csv, "{cell},{},{},{},{},{},{},{},{}", b[0], b[1], b[2], b[3], b[4], b[5], e.fitness, e.generation_added)
            .unwrap();
    }
    write_file(&dir.join(ARCHIVE_CSV), csv.as_bytes())?;

    let mut csv = String::from("generation,frames,cell,fitness_meters\n");
    for ins in &out.insertions {
        writeln!(csv, "{},{},{},{}", ins.generation, ins.frames, ins.cell, ins.fitness).unwrap();
    }
    write_file(&dir.join(ARCHIVE_LOG), csv.as_bytes())?;
    Ok(kept.len())
}

fn write_ppo_products(dir: &Path, cfg: &RunConfig, text: &str, out: &TrainOutput) -> Result<usize, HarnessError> {
    let frames: Vec<u64> = out.curve.iter().map(|p| p.frames).collect();
    let kept = downsample(&frames, cfg.curve_interval_frames);
    let mut csv = format!("{PPO_CURVE_HEADER}\n");
    for &i in &kept {
        let p = &out.curve[i];
        let u = &p.update;
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            p.iteration,
            p.frames,
            p.mean_episode_reward,
            p.eval_reward,
            u.policy_loss,
            u.value_loss,
            u.entropy,
            u.approx_kl,
            u.clip_fraction
        )
        .unwrap();
    }
    write_file(&dir.join(CURVE_FILE), csv.as_bytes())?;

    let mut buf = Vec::new();
    write_checkpoint(&mut buf, text, &out.model, out.final_reward())?;
    write_file(&dir.join(CHECKPOINT_FILE), &buf)?;
    Ok(kept.len())
}

pub fn load_record(dir: &Path) -> Result<RunRecord, HarnessError> {
    let path = dir.join(RECORD_FILE);
    let text = fs::read_to_string(&path).map_err(HarnessError::io(&path))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Format(format!("{}: {e}", path.display())))
}

/// `(frames, performance)` rows of a run's curve file: best fitness for
/// MAP-Elites, mean-policy return for PPO.
pub fn load_curve(dir: &Path) -> Result<Vec<(u64, f64)>, HarnessError> {
    let path = dir.join(CURVE_FILE);
    let text = fs::read_to_string(&path).map_err(HarnessError::io(&path))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let column = match header {
        ME_CURVE_HEADER => 2,
        PPO_CURVE_HEADER => 3,
        _ => return Err(HarnessError::Format(format!("{}: unrecognized header", path.display()))),
    };
    let bad = |n: usize| HarnessError::Format(format!("{}: malformed row {}", path.display(), n + 2));
    lines
        .enumerate()
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            let frames = cols.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad(n))?;
            let value = cols.get(column).and_then(|s| s.parse().ok()).ok_or_else(|| bad(n))?;
            Ok((frames, value))
        })
        .collect()
}

/// Run directories named on the command line may also be parents holding
/// several runs; expands them to completed run directories in name order.
pub fn expand_run_dirs(paths: &[PathBuf]) -> Result<Vec<PathBuf>, HarnessError> {
    let mut out = Vec::new();
    for p in paths {
        if p.join(RECORD_FILE).exists() {
            out.push(p.clone());
            continue;
        }
        let mut children: Vec<PathBuf> = fs::read_dir(p)
            .map_err(HarnessError::io(p))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|c| c.join(RECORD_FILE).exists())
            .collect();
        if children.is_empty() {
            return Err(HarnessError::Format(format!("{} holds no completed run", p.display())));
        }
        children.sort();
        out.extend(children);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downsample_keeps_ends_and_spacing() {
        let f = [10, 20, 30, 40, 50, 55];
        assert_eq!(downsample(&f, 0), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(downsample(&f, 25), vec![0, 3, 5]);
        assert_eq!(downsample(&f, 1000), vec![0, 5]);
        assert_eq!(downsample(&[7], 5), vec![0]);
        assert!(downsample(&[], 5).is_empty());
    }
}
