//! Cross-user experiments: run split plans end-to-end and score them.

mod metrics;
mod run;

pub use metrics::{
    aggregate, mean_confusion_csv, results_csv, summary_csv, ConfusionMatrix, Summary,
};
pub use run::{config_digest, majority_baseline, run_split, RunOptions};

use thiserror::Error;

use crate::classifier::ClassifierError;
use crate::model::ModelError;
use crate::numkit::NumError;
use crate::ppo::PpoError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("confusion matrix has no entries")]
    EmptyConfusion,

    #[error("cannot aggregate results with {a} and {b} classes")]
    MixedClassCounts { a: usize, b: usize },

    #[error("nothing to aggregate")]
    NoResults,

    #[error("plan {plan}: {side} split matches no windows")]
    EmptySplit { plan: String, side: &'static str },

    #[error("plan {plan}: source needs >= 2 users and >= 2 classes, found {users} and {classes}")]
    DegenerateSource { plan: String, users: usize, classes: usize },

    #[error("plan {plan}: target window {window_id} was seen in training")]
    Leakage { plan: String, window_id: u64 },

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Ppo(#[from] PpoError),

    #[error(transparent)]
    Classifier(#[from] ClassifierError),

    #[error(transparent)]
    Num(#[from] NumError),
}

/// Outcome of one split plan.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub plan: String,
    /// Target accuracy, trace/total of `confusion`.
    pub accuracy: f64,
    pub per_class_f1: Vec<f64>,
    pub confusion: ConfusionMatrix,
    /// Identifies the model + trainer configuration that produced this.
    pub config_digest: String,
    /// Master seed the per-plan streams were derived from.
    pub seed: u64,
}
