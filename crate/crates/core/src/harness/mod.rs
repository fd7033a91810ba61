//! Configuration, run orchestration, persistence, comparison and replay.

pub mod artifacts;
pub mod compare;
pub mod config;
pub mod replay;
pub mod run;

use std::path::PathBuf;

use thiserror::Error;

pub use compare::{compare, ComparisonReport, OutperformPoint};
pub use config::{Algorithm, ConfigError, HyperParams, RunConfig};
pub use replay::{replay, ReplayReport};
pub use run::{execute, load_curve, load_record, run, run_in, RunOutcome, RunRecord};

/// Overrides the output root of every run.
pub const OUTPUT_ROOT_VAR: &str = "HEXBENCH_OUTPUT_ROOT";
/// Caps the worker threads used for runs and evaluations.
pub const WORKERS_VAR: &str = "HEXBENCH_WORKERS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    RawIo(#[from] std::io::Error),
    #[error("malformed artifact: {0}")]
    Format(String),
    #[error(transparent)]
    Qd(#[from] crate::qd::QdError),
    #[error(transparent)]
    Rl(#[from] crate::rl::RlError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error("statistics: {0}")]
    Stats(#[from] crate::stats::StatsError),
    #[error("{0} already holds a completed run")]
    AlreadyComplete(PathBuf),
    #[error("paired test needs equal replication counts, got {a} and {b}")]
    MismatchedReplications { a: usize, b: usize },
    #[error("replay mismatch: {0}")]
    ReplayMismatch(String),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }

    /// Process exit status for this error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Stats(_) | HarnessError::MismatchedReplications { .. } => 4,
            _ => 3,
        }
    }
}

/// Applies [`OUTPUT_ROOT_VAR`] to a config, if set.
pub fn apply_env_overrides(cfg: &mut RunConfig) {
    if let Ok(root) = std::env::var(OUTPUT_ROOT_VAR) {
        if !root.is_empty() {
            cfg.output_dir = root.into();
        }
    }
}

/// Sizes the global worker pool; must run before any parallel work.
pub fn set_global_workers(threads: usize) -> Result<(), String> {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())
}

/// Worker count from [`WORKERS_VAR`], if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_VAR).ok()?.parse().ok().filter(|&n| n > 0)
}
