//! Trainer contract, reference MLP trainer and datasets.

mod contract;
mod dataset;
mod gradcheck;
mod mlp;
mod reference;
mod synthetic;

pub use contract::{Augmentation, EpochPlan, Metrics, ModelSnapshot, Trainer, TrainerError};
pub use dataset::{load_dataset, write_dataset, DatasetError, LabeledDataset};
pub use gradcheck::{gradient_check, gradient_check_with, relative_error, CoordCheck, GradCheckReport, FD_STEP, SAMPLE_COORDS};
pub use mlp::{Example, Mlp};
pub use reference::{canonical_input, ReferenceTrainer, ReferenceTrainerConfig};
pub use synthetic::{generate_synthetic_dataset, SyntheticSpec, SYNTHETIC_CLASSES};
