//! Random hyper-parameter sampling and the two-phase screening search.
//!
//! Phase 1 runs every sampled configuration for a short horizon; phase 2
//! re-runs the best `top_k` with fresh seeds on a long horizon. Every run
//! seed is derived from `(master_seed, phase, config, replication)`, so any
//! run can be re-executed alone and the search resumes by skipping run
//! directories that already hold a completed record.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::env::ControllerMode;
use crate::harness::config::Fields;
use crate::harness::run::{load_record, RECORD_FILE};
use crate::harness::{run_in, ConfigError, HarnessError, HyperParams, RunConfig};
use crate::nn::architecture_menu;
use crate::qd::MeHyperParams;
use crate::rl::PpoHyperParams;
use crate::seed::{derive, tag};
use crate::stats::quartiles;

pub const KI: usize = 1024;
pub const LEARNING_RATE_RANGE: (f64, f64) = (5e-5, 1e-2);
pub const CLIP_RANGE: (f64, f64) = (5e-2, 4e-1);
pub const ENTROPY_RANGE: (f64, f64) = (1e-4, 1e-2);
/// Probability that the entropy coefficient is sampled rather than zero.
pub const ENTROPY_ON_PROBABILITY: f64 = 0.25;
pub const OPEN_LOOP_BATCH_KI: (usize, usize) = (2, 32);
pub const CLOSED_LOOP_BATCH_KI: [usize; 3] = [16, 32, 64];
pub const MUTATION_RATE_MAX: f64 = 0.5;

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo.ln()..=hi.ln()).exp()
}

/// Draws the searched PPO knobs; everything else is copied from `base`.
pub fn sample_ppo_config<R: Rng + ?Sized>(rng: &mut R, mode: ControllerMode, base: &PpoHyperParams) -> PpoHyperParams {
    let learning_rate = log_uniform(rng, LEARNING_RATE_RANGE);
    let clip_eps = log_uniform(rng, CLIP_RANGE);
    let c2 = if rng.random_bool(ENTROPY_ON_PROBABILITY) { log_uniform(rng, ENTROPY_RANGE) } else { 0.0 };
    let batch_ki = match mode {
        ControllerMode::OpenLoop => rng.random_range(OPEN_LOOP_BATCH_KI.0..=OPEN_LOOP_BATCH_KI.1),
        ControllerMode::ClosedLoop => CLOSED_LOOP_BATCH_KI[rng.random_range(0..CLOSED_LOOP_BATCH_KI.len())],
    };
    let menu = architecture_menu(mode);
    let hidden = menu[rng.random_range(0..menu.len())];
    PpoHyperParams { learning_rate, clip_eps, c2, batch_frames: batch_ki * KI, hidden, ..base.clone() }
}

/// Draws the searched MAP-Elites knobs; everything else is copied from `base`.
pub fn sample_me_config<R: Rng + ?Sized>(rng: &mut R, mode: ControllerMode, base: &MeHyperParams) -> MeHyperParams {
    let mutation_rate = rng.random_range(0.0..=MUTATION_RATE_MAX);
    let menu = architecture_menu(mode);
    let hidden = menu[rng.random_range(0..menu.len())];
    let descriptor_base = if rng.random_bool(0.5) { 4 } else { 5 };
    MeHyperParams { mutation_rate, hidden, descriptor_base, ..base.clone() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Phase {
    /// Configurations run in this phase (`top_k` for phase 2).
    pub configs: usize,
    pub replications: usize,
    pub horizon_frames: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchPlan {
    /// Algorithm, mode, environment, fixed hyper-parameters, master seed and
    /// the search root (`output_dir`). Its budget is ignored.
    pub base: RunConfig,
    pub phase1: Phase,
    pub phase2: Phase,
}

impl SearchPlan {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |f: &str, m: &str| Err(ConfigError::new(None, f, m));
        if self.phase1.configs == 0 {
            return err("phase1.num_configs", "must be at least 1");
        }
        if self.phase2.configs > self.phase1.configs {
            return err("phase2.top_k", "cannot exceed phase1.num_configs");
        }
        if self.phase1.replications == 0 || self.phase2.replications == 0 {
            return err("replications", "must be at least 1");
        }
        if self.phase1.horizon_frames == 0 || self.phase2.horizon_frames == 0 {
            return err("horizon_frames", "must be positive");
        }
        let mut probe = self.base.clone();
        probe.budget_frames = self.phase1.horizon_frames;
        probe.validate()
    }

    /// Run-config keys plus `phase1.num_configs`, `phase1.replications`,
    /// `phase1.horizon_frames`, `phase2.top_k`, `phase2.replications` and
    /// `phase2.horizon_frames`; `budget_frames` must not be given.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut f = Fields::parse(text)?;
        if let Some(line) = f.line_of("budget_frames") {
            return Err(ConfigError::new(Some(line), "budget_frames", "set by the phase horizons in a plan"));
        }
        let phase1 = Phase {
            configs: f.required("phase1.num_configs")?,
            replications: f.optional("phase1.replications", 1)?,
            horizon_frames: f.required("phase1.horizon_frames")?,
        };
        let phase2 = Phase {
            configs: f.optional("phase2.top_k", 0)?,
            replications: f.optional("phase2.replications", 1)?,
            horizon_frames: f.optional("phase2.horizon_frames", phase1.horizon_frames)?,
        };
        f.set("budget_frames", phase1.horizon_frames.to_string());
        let base = RunConfig::from_fields(&mut f)?;
        f.finish()?;
        let plan = SearchPlan { base, phase1, phase2 };
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for line in self.base.to_string().lines() {
            if !line.starts_with("budget_frames") {
                writeln!(s, "{line}").unwrap();
            }
        }
        writeln!(s, "phase1.num_configs = {}", self.phase1.configs).unwrap();
        writeln!(s, "phase1.replications = {}", self.phase1.replications).unwrap();
        writeln!(s, "phase1.horizon_frames = {}", self.phase1.horizon_frames).unwrap();
        writeln!(s, "phase2.top_k = {}", self.phase2.configs).unwrap();
        writeln!(s, "phase2.replications = {}", self.phase2.replications).unwrap();
        writeln!(s, "phase2.horizon_frames = {}", self.phase2.horizon_frames).unwrap();
        s
    }

    /// Hyper-parameters of sampled configuration `index`.
    pub fn config(&self, index: usize) -> HyperParams {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(self.base.master_seed, &[tag::CONFIG, index as u64]));
        match &self.base.hyper {
            HyperParams::MapElites(b) => HyperParams::MapElites(sample_me_config(&mut rng, self.base.mode, b)),
            HyperParams::Ppo(b) => HyperParams::Ppo(sample_ppo_config(&mut rng, self.base.mode, b)),
        }
    }

    /// Full run config of one search run.
    pub fn run_config(&self, phase: usize, config: usize, replication: usize) -> RunConfig {
        let (t, horizon) = match phase {
            1 => (tag::PHASE1, self.phase1.horizon_frames),
            _ => (tag::PHASE2, self.phase2.horizon_frames),
        };
        let mut cfg = self.base.clone();
        cfg.hyper = self.config(config);
        cfg.budget_frames = horizon;
        cfg.master_seed = derive(self.base.master_seed, &[t, config as u64, replication as u64]);
        cfg
    }

    pub fn run_dir(&self, phase: usize, config: usize, replication: usize) -> PathBuf {
        phase_dir(&self.base.output_dir, phase).join(format!("config-{config:03}")).join(format!("rep-{replication:02}"))
    }
}

fn phase_dir(root: &Path, phase: usize) -> PathBuf {
    root.join(format!("phase{phase}"))
}

/// One search run's outcome; `final_performance` is `-inf` for a failed run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchRun {
    pub phase: usize,
    pub config: usize,
    pub replication: usize,
    pub dir: PathBuf,
    pub frames: u64,
    pub final_performance: f64,
    pub error: Option<String>,
    pub reused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedConfig {
    pub config: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub failed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchReport {
    pub phase1_ranking: Vec<RankedConfig>,
    pub phase2_ranking: Vec<RankedConfig>,
    /// Best phase-2 configuration, or the best phase-1 one without phase 2.
    pub winner: usize,
    pub winner_config: String,
    pub runs: Vec<SearchRun>,
    pub phase1_frames: u64,
    pub phase2_frames: u64,
    pub executed: usize,
    pub reused: usize,
}

impl SearchReport {
    pub fn runs_of(&self, phase: usize, config: usize) -> impl Iterator<Item = &SearchRun> {
        self.runs.iter().filter(move |r| r.phase == phase && r.config == config)
    }
}

/// Orders configurations by descending median final performance; equal
/// medians go to the lower index.
pub fn rank(runs: &[SearchRun], phase: usize, configs: &[usize]) -> Vec<RankedConfig> {
    let mut ranked: Vec<RankedConfig> = configs
        .iter()
        .map(|&config| {
            let finals: Vec<f64> = runs
                .iter()
                .filter(|r| r.phase == phase && r.config == config)
                .map(|r| r.final_performance)
                .collect();
            let failed = runs.iter().filter(|r| r.phase == phase && r.config == config && r.error.is_some()).count();
            let (q1, median, q3) = quartiles(&finals).unwrap_or((f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY));
            RankedConfig { config, median, q1, q3, failed }
        })
        .collect();
    ranked.sort_by(|a, b| b.median.total_cmp(&a.median).then(a.config.cmp(&b.config)));
    ranked
}

fn execute_phase(plan: &SearchPlan, phase: usize, configs: &[usize], replications: usize) -> Result<Vec<SearchRun>, HarnessError> {
    let jobs: Vec<(usize, usize)> =
        configs.iter().flat_map(|&c| (0..replications).map(move |r| (c, r))).collect();
    jobs.par_iter()
        .map(|&(config, replication)| {
            let dir = plan.run_dir(phase, config, replication);
            let base = SearchRun {
                phase,
                config,
                replication,
                dir: dir.clone(),
                frames: 0,
                final_performance: f64::NEG_INFINITY,
                error: None,
                reused: false,
            };
            if dir.join(RECORD_FILE).exists() {
                let rec = load_record(&dir)?;
                return Ok(SearchRun { frames: rec.frames, final_performance: rec.final_performance, reused: true, ..base });
            }
            let cfg = plan.run_config(phase, config, replication);
            match run_in(&cfg, &dir) {
                Ok(rec) => Ok(SearchRun { frames: rec.frames, final_performance: rec.final_performance, ..base }),
                // Configuration and storage problems abort the search; a run
                // that fails numerically only loses the ranking.
                Err(e @ (HarnessError::Config(_) | HarnessError::Io { .. } | HarnessError::RawIo(_))) => Err(e),
                Err(e) => Ok(SearchRun { error: Some(e.to_string()), ..base }),
            }
        })
        .collect()
}

fn ranking_csv(ranking: &[RankedConfig], plan: &SearchPlan) -> String {
    let mut s = String::from("rank,config,median_final_meters,q1_final_meters,q3_final_meters,failed_runs,hyper_parameters\n");
    for (i, r) in ranking.iter().enumerate() {
        let hp = match plan.config(r.config) {
            HyperParams::MapElites(h) => format!(
                "mutation_rate={:?} hidden={}x{} base={}",
                h.mutation_rate, h.hidden[0], h.hidden[1], h.descriptor_base
            ),
            HyperParams::Ppo(h) => format!(
                "learning_rate={:?} clip_eps={:?} c2={:?} batch_frames={} hidden={}x{}",
                h.learning_rate, h.clip_eps, h.c2, h.batch_frames, h.hidden[0], h.hidden[1]
            ),
        };
        writeln!(s, "{},{},{},{},{},{},{}", i + 1, r.config, r.median, r.q1, r.q3, r.failed, hp).unwrap();
    }
    s
}

/// Runs (or resumes) the search under `plan.base.output_dir` with at most
/// `workers` concurrent runs.
pub fn run_search(plan: &SearchPlan, workers: Option<usize>) -> Result<SearchReport, HarnessError> {
    plan.validate()?;
    let root = &plan.base.output_dir;
    fs::create_dir_all(root).map_err(HarnessError::io(root))?;
    let plan_path = root.join("plan.cfg");
    let text = plan.to_text();
    match fs::read_to_string(&plan_path) {
        Ok(existing) if existing != text => {
            return Err(ConfigError::new(None, "output_dir", format!("{} holds a different plan", root.display())).into())
        }
        Ok(_) => {}
        Err(_) => fs::write(&plan_path, &text).map_err(HarnessError::io(&plan_path))?,
    }

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| HarnessError::Format(e.to_string()))?;

    let all: Vec<usize> = (0..plan.phase1.configs).collect();
    let mut runs = pool.install(|| execute_phase(plan, 1, &all, plan.phase1.replications))?;
    let phase1_ranking = rank(&runs, 1, &all);
    write_text(&phase_dir(root, 1).join("ranking.csv"), &ranking_csv(&phase1_ranking, plan))?;

    let top: Vec<usize> = phase1_ranking.iter().take(plan.phase2.configs).map(|r| r.config).collect();
    let phase2_ranking = if top.is_empty() {
        Vec::new()
    } else {
        runs.extend(pool.install(|| execute_phase(plan, 2, &top, plan.phase2.replications))?);
        let ranking = rank(&runs, 2, &top);
        write_text(&phase_dir(root, 2).join("ranking.csv"), &ranking_csv(&ranking, plan))?;
        ranking
    };

    let winner = phase2_ranking.first().or(phase1_ranking.first()).map(|r| r.config).expect("at least one config");
    let mut winner_cfg = plan.base.clone();
    winner_cfg.hyper = plan.config(winner);
    winner_cfg.budget_frames = if phase2_ranking.is_empty() { plan.phase1.horizon_frames } else { plan.phase2.horizon_frames };
    let frames = |p: usize| runs.iter().filter(|r| r.phase == p).map(|r| r.frames).sum();
    let report = SearchReport {
        phase1_ranking,
        phase2_ranking,
        winner,
        winner_config: winner_cfg.to_string(),
        phase1_frames: frames(1),
        phase2_frames: frames(2),
        executed: runs.iter().filter(|r| !r.reused).count(),
        reused: runs.iter().filter(|r| r.reused).count(),
        runs,
    };
    write_text(&root.join("winner.cfg"), &report.winner_config)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| HarnessError::Format(e.to_string()))?;
    write_text(&root.join("report.json"), &format!("{json}\n"))?;
    Ok(report)
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(HarnessError::io(parent))?;
    }
    fs::write(path, text).map_err(HarnessError::io(path))
}
