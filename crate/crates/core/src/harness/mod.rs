//! Experiment harness: configuration, training runs, persistence, scoring,
//! aggregation, robustness evaluation and sweeps.

mod aggregate;
mod config;
mod persist;
mod policy;
mod robustness;
mod stats;
mod sweep;
mod train;

use std::path::PathBuf;

use crate::agents::AgentError;
use crate::envs::EnvError;
use crate::numerics::NumericsError;
use crate::sparse::SparseError;
use crate::topology::TopologyError;

pub use aggregate::{aggregate_logs, aggregate_run_dirs, write_report_csv, write_report_svg, AggregateReport, AggregateRow};
pub use config::{AgentKind, ConfigError, ExperimentConfig, Regime, RunSection, SparsitySection, TopologySection, TrainingSection};
pub use persist::{is_complete, load_policy, load_run, write_failure, write_run_dir, RunSummary};
pub use policy::{evaluate_episodes, Policy, PolicyKind};
pub use robustness::{noise_robustness_eval, random_policy_returns, RobustnessPoint};
pub use stats::{final_score, iqm, iqm_with_ci, normalize_anchored, normalize_scores, IntervalEstimate, StatsError, BOOTSTRAP_RESAMPLES};
pub use sweep::{expand_grid, run_dir_name, run_sweep, GridSpec, SweepReport};
pub use train::{mean_std, train_run, train_run_full, EvalRecord, RunLog, RunOutput, SnrLogRecord, SparsityRecord};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("numeric failure at step {step} (last loss {last_loss:?}, sparsities {sparsities:?}): {detail}")]
    Numeric { step: u64, last_loss: Option<f64>, sparsities: Vec<f64>, detail: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed {what}: {message}")]
    Format { what: String, message: String },
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }
}
