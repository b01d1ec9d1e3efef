//! Experiment orchestration: episodes, training, evaluation, baseline
//! comparison, ablations and checkpoint persistence.

mod checkpoint;
mod config;
mod episode;
mod experiments;
mod report;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{AblationArm, Profile, RunConfig};
pub use episode::{
    ensure_positive_definite, run_episode, run_monolithic, BaselineOutcome, Controller, EpisodeLog,
    EpisodeOutcome, StepLog,
};
pub use experiments::{
    ablate, compare_baselines, eval_seeds, evaluate, initial_checkpoint, train, AblationArmSpec, AblationReport,
    Arm, ComparisonTable, EvalReport, EvalRow, TrainOutput,
};
pub use report::{min_max_scores, mean_std, write_jsonl, OutDir};

use crate::cmaes::CmaError;
use crate::decomposition::DecompositionError;
use crate::features::FeatureError;
use crate::policy::PolicyError;
use crate::ppo::PpoError;
use crate::problems::ProblemError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint does not match config: {0}")]
    ConfigMismatch(String),
    #[error("checkpoint version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Cma(#[from] CmaError),
    #[error(transparent)]
    Decomposition(#[from] DecompositionError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Ppo(#[from] PpoError),
}
