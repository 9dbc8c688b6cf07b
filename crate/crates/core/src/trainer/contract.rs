use serde::{Deserialize, Serialize};

use crate::baselines::BaselineConfig;
use crate::policy::Policy;

/// Validation metrics after an epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `correct / total`, exactly.
    pub val_accuracy: f64,
    pub train_loss: f64,
    pub epoch_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<u64>,
}

impl Metrics {
    pub fn from_counts(correct: u64, total: u64, train_loss: f64, epoch_index: u32) -> Self {
        Metrics {
            val_accuracy: correct as f64 / total as f64,
            train_loss,
            epoch_index,
            correct: Some(correct),
            total: Some(total),
        }
    }
}

/// How training samples are augmented during one epoch.
#[derive(Debug, Clone, Copy)]
pub enum Augmentation<'a> {
    None,
    Policy(&'a Policy),
    Baseline(&'a BaselineConfig),
}

/// Everything a trainer needs to run one epoch. Augmentation streams are
/// keyed by `(aug_seed, epoch, sample index)`.
#[derive(Debug, Clone, Copy)]
pub struct EpochPlan<'a> {
    pub epoch: u32,
    pub augmentation: Augmentation<'a>,
    pub aug_seed: u64,
}

/// Opaque copy of model parameters, used to restore the best checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSnapshot(pub Vec<f64>);

#[derive(Debug, thiserror::Error)]
pub enum TrainerError {
    #[error("trainer used before init")]
    NotInitialized,
    #[error("NUMERIC_DIVERGENCE: non-finite loss in epoch {epoch}")]
    NumericDivergence { epoch: u32 },
    #[error("augmentation failed: {0}")]
    Augmentation(#[from] crate::transforms::TransformError),
    #[error("trainer bridge: {0}")]
    Bridge(String),
    #[error("trainer bridge timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("{0}")]
    Unsupported(String),
}

/// The surface both optimization loops drive.
///
/// `evaluate` must not change model state; `init` with the same description
/// and seed must produce the same model.
pub trait Trainer: Send {
    fn init(&mut self, model_description: &str, seed: u64) -> Result<(), TrainerError>;

    /// Trains one epoch and returns the mean batch loss.
    fn train_epoch(&mut self, plan: &EpochPlan<'_>) -> Result<f64, TrainerError>;

    fn evaluate(&mut self) -> Result<Metrics, TrainerError>;

    fn snapshot(&self) -> Option<ModelSnapshot> {
        None
    }

    fn restore(&mut self, _snapshot: &ModelSnapshot) -> Result<(), TrainerError> {
        Err(TrainerError::Unsupported("trainer does not support checkpoints".into()))
    }
}

impl<T: Trainer + ?Sized> Trainer for Box<T> {
    fn init(&mut self, model_description: &str, seed: u64) -> Result<(), TrainerError> {
        (**self).init(model_description, seed)
    }
    fn train_epoch(&mut self, plan: &EpochPlan<'_>) -> Result<f64, TrainerError> {
        (**self).train_epoch(plan)
    }
    fn evaluate(&mut self) -> Result<Metrics, TrainerError> {
        (**self).evaluate()
    }
    fn snapshot(&self) -> Option<ModelSnapshot> {
        (**self).snapshot()
    }
    fn restore(&mut self, snapshot: &ModelSnapshot) -> Result<(), TrainerError> {
        (**self).restore(snapshot)
    }
}
