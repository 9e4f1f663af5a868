//! Episode runner, dataset splits, evaluation and persistence.

mod config;
mod episode;
mod eval;
mod perturb;
mod splits;

pub use config::{BackendKind, EpisodeConfig, EvalConfig, HarnessConfig, LmConfig, PlanConfig, SplitConfig};
pub use episode::{
    read_trajectory, replay, run_episode, scene_for_header, write_trajectory, Actor, Components, EndRecord,
    EpisodeSetup, StepRecord, Trajectory, TrajectoryHeader,
};
pub use eval::{
    eliminate_report, plan_report, run_ablation, run_split, split_result, track_report, train_row, training_bank,
    training_examples,
    AblationRow, AblationTable, EliminateReport, EvalReport, Row, RowResult, SplitResult,
};
pub use perturb::perturb_goal;
pub use splits::{build_splits, Splits};

use crate::agent::AgentError;
use crate::expert::ExpertError;
use crate::lmbridge::LmError;
use crate::metrics::MetricError;
use crate::planner::PlanError;
use crate::tracker::TrackError;
use crate::worldsim::WorldError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Expert(#[from] ExpertError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("{split} split: found {have} tasks with unseen class combinations, need {need}")]
    InsufficientCombos { split: &'static str, have: usize, need: usize },
    #[error("split {0} is empty")]
    EmptySplit(&'static str),
    #[error("no trained parameters for row {row} seed {seed}")]
    MissingCheckpoint { row: String, seed: u64 },
    #[error("trajectory: {0}")]
    Trajectory(String),
    #[error("replay diverged at step {step}: expected {expected:?}, found {found:?}")]
    ReplayMismatch { step: usize, expected: String, found: String },
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}
