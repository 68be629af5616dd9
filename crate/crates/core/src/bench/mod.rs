//! Experiment orchestration and statistics: scale stratification, paired
//! method comparisons with gap metrics and one-sided Wilcoxon signed-rank
//! tests, transfer protocols, result persistence and plots.

mod plan;
mod plot;
mod run;
mod stats;

pub use plan::{scale_of, stratify, ExperimentPlan, Method, PlannedInstance, ScaleLabel, TransferSpec};
pub use plot::{gap_bars_svg, trace_svg};
pub use run::{recompute_stats, run_experiment, ComparisonRow, ExperimentResult, Outcome};
pub use stats::{
    gap, time_ratio, wilcoxon_one_sided, wilcoxon_one_sided_with, PValueMethod, WilcoxonResult,
};

use crate::agent::{AgentConfig, RewardConfig, TrainConfig};
use crate::alns::SearchConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Every tunable constant in one place; the CLI `--config` flag deserializes
/// this from JSON, with defaults for anything omitted.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub search: SearchConfig,
    pub agent: AgentConfig,
    pub reward: RewardConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("reference objective must be positive, got {0}")]
    NonpositiveReference(f64),
    #[error("all {ties} differences are zero; the test is undefined")]
    AllZeroDifferences { ties: usize },
    #[error("experiment plan invalid: {0}")]
    BadPlan(String),
    #[error("io: {0}")]
    Io(String),
    #[error("plot: {0}")]
    Plot(String),
    #[error(transparent)]
    Agent(#[from] crate::agent::AgentError),
    #[error(transparent)]
    Engine(#[from] crate::alns::EngineError),
    #[error(transparent)]
    Instance(#[from] crate::instance::InstanceError),
}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}
