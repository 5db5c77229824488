//! Training, evaluation and the statistics behind the results table.

mod loop_;
mod metrics;
mod split;
mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelError;

pub use loop_::{mean_loss, train, Hyper, TrainOutcome};
pub use metrics::{evaluate, predict, recording_votes, Confusion, Metrics, RecordingVote};
pub use split::{make_splits, SplitPlan};
pub use stats::{aggregate, format_cell, paired_significance, EvalReport, MetricName, Significance, Summary};

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("class {label} has {found} subject(s); at least 2 are required")]
    TooFewSubjects { label: String, found: usize },
    #[error("subject {0} appears with both labels")]
    InconsistentSubject(String),
    #[error("no training chunks")]
    EmptyTrainingSet,
    #[error("no test chunks")]
    EmptyTestSet,
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    DivergenceDetected { epoch: usize, loss: f64 },
    #[error("test subject {0} leaked into training")]
    Leakage(String),
    #[error("paired samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("nothing to aggregate")]
    EmptyReports,
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Which unit a metric was computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Chunk,
    Recording,
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Level::Chunk => "chunk",
            Level::Recording => "recording",
        })
    }
}
