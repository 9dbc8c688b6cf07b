use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::contract::{Augmentation, EpochPlan, Metrics, ModelSnapshot, Trainer, TrainerError};
use super::dataset::LabeledDataset;
use super::mlp::{Example, Mlp};
use crate::baselines;
use crate::transforms::{apply_policy, derive_seed, ImageBuffer, SampleKey, SampleRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceTrainerConfig {
    /// Images are converted to grayscale and resized to `input_size x input_size`.
    pub input_size: usize,
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: u32,
    pub patience: u32,
}

impl Default for ReferenceTrainerConfig {
    fn default() -> Self {
        ReferenceTrainerConfig {
            input_size: 32,
            hidden_units: 128,
            learning_rate: 0.01,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
        }
    }
}

impl ReferenceTrainerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.input_size == 0 || self.hidden_units == 0 || self.batch_size == 0 {
            return Err("trainer sizes must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err("trainer.learning_rate must be finite and non-negative".into());
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return Err("trainer.max_epochs and trainer.patience must be positive".into());
        }
        if self.patience > self.max_epochs {
            return Err("trainer.patience must not exceed trainer.max_epochs".into());
        }
        Ok(())
    }
}

/// In-process MLP trainer with plain mini-batch SGD.
pub struct ReferenceTrainer {
    config: ReferenceTrainerConfig,
    dataset: Arc<LabeledDataset>,
    train_inputs: Vec<Vec<f64>>,
    valid_inputs: Vec<Vec<f64>>,
    net: Option<Mlp>,
    seed: u64,
    epochs_trained: u32,
    last_loss: f64,
    init_calls: u64,
}

impl ReferenceTrainer {
    pub fn new(dataset: Arc<LabeledDataset>, config: ReferenceTrainerConfig) -> Self {
        let canon = |rows: &[(ImageBuffer, usize)]| rows.iter().map(|(img, _)| canonical_input(img, config.input_size)).collect();
        ReferenceTrainer {
            train_inputs: canon(&dataset.train),
            valid_inputs: canon(&dataset.valid),
            config,
            dataset,
            net: None,
            seed: 0,
            epochs_trained: 0,
            last_loss: 0.0,
            init_calls: 0,
        }
    }

    pub fn config(&self) -> &ReferenceTrainerConfig {
        &self.config
    }

    pub fn model(&self) -> Option<&Mlp> {
        self.net.as_ref()
    }

    pub fn model_mut(&mut self) -> Option<&mut Mlp> {
        self.net.as_mut()
    }

    /// How many times `init` has run on this instance.
    pub fn init_calls(&self) -> u64 {
        self.init_calls
    }

    /// Unaugmented training-set inputs in canonical form.
    pub fn train_batch(&self, range: std::ops::Range<usize>) -> Vec<Example<'_>> {
        range
            .map(|i| (self.train_inputs[i].as_slice(), self.dataset.train[i].1))
            .collect()
    }

    fn accuracy(&self, inputs: &[Vec<f64>], rows: &[(ImageBuffer, usize)]) -> Result<(u64, u64), TrainerError> {
        let net = self.net.as_ref().ok_or(TrainerError::NotInitialized)?;
        let correct = inputs
            .iter()
            .zip(rows)
            .filter(|(x, (_, y))| net.predict(x) == *y)
            .count();
        Ok((correct as u64, rows.len() as u64))
    }

    /// Accuracy on the unaugmented training split.
    pub fn train_accuracy(&self) -> Result<f64, TrainerError> {
        let (c, t) = self.accuracy(&self.train_inputs, &self.dataset.train)?;
        Ok(c as f64 / t as f64)
    }

    fn augmented_inputs(&self, plan: &EpochPlan<'_>) -> Result<Option<Vec<Vec<f64>>>, TrainerError> {
        let epoch = plan.epoch as u64;
        let key = |i: usize| SampleKey::new(plan.aug_seed, epoch, i as u64);
        let augment = |f: &dyn Fn(&ImageBuffer, SampleKey) -> Result<ImageBuffer, TrainerError>| {
            self.dataset
                .train
                .iter()
                .enumerate()
                .map(|(i, (img, _))| Ok(canonical_input(&f(img, key(i))?, self.config.input_size)))
                .collect::<Result<Vec<_>, TrainerError>>()
                .map(Some)
        };
        match plan.augmentation {
            Augmentation::None => Ok(None),
            Augmentation::Policy(p) if p.ops.is_empty() => Ok(None),
            Augmentation::Policy(p) => augment(&|img, k| Ok(apply_policy(img, p, k)?)),
            Augmentation::Baseline(cfg) if cfg.strategy == baselines::Strategy::None => Ok(None),
            Augmentation::Baseline(cfg) => augment(&|img, k| Ok(baselines::augment(img, cfg, k)?)),
        }
    }
}

/// Grayscale, resized, flattened to f64.
pub fn canonical_input(img: &ImageBuffer, size: usize) -> Vec<f64> {
    img.to_grayscale()
        .resize(size, size)
        .data()
        .iter()
        .map(|&v| v as f64)
        .collect()
}

impl Trainer for ReferenceTrainer {
    fn init(&mut self, _model_description: &str, seed: u64) -> Result<(), TrainerError> {
        let inputs = self.config.input_size * self.config.input_size;
        self.net = Some(Mlp::init(
            inputs,
            self.config.hidden_units,
            self.dataset.num_classes(),
            derive_seed(seed, "mlp-init"),
        ));
        self.seed = seed;
        self.epochs_trained = 0;
        self.last_loss = 0.0;
        self.init_calls += 1;
        Ok(())
    }

    fn train_epoch(&mut self, plan: &EpochPlan<'_>) -> Result<f64, TrainerError> {
        if self.net.is_none() {
            return Err(TrainerError::NotInitialized);
        }
        let augmented = self.augmented_inputs(plan)?;
        let inputs = augmented.as_ref().unwrap_or(&self.train_inputs);
        let n = inputs.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = SampleRng::derive(derive_seed(self.seed, "shuffle"), plan.epoch as u64, 0, 0);
        for i in (1..n).rev() {
            let j = rng.below(i as u32 + 1) as usize;
            order.swap(i, j);
        }
        let net = self.net.as_mut().unwrap();
        let mut losses = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<Example> = chunk
                .iter()
                .map(|&i| (inputs[i].as_slice(), self.dataset.train[i].1))
                .collect();
            let (loss, grad) = net.loss_and_grad(&batch);
            if !loss.is_finite() {
                return Err(TrainerError::NumericDivergence { epoch: plan.epoch });
            }
            net.sgd_step(&grad, self.config.learning_rate);
            losses += loss;
            batches += 1;
        }
        self.epochs_trained += 1;
        self.last_loss = losses / batches as f64;
        Ok(self.last_loss)
    }

    fn evaluate(&mut self) -> Result<Metrics, TrainerError> {
        let (correct, total) = self.accuracy(&self.valid_inputs, &self.dataset.valid)?;
        Ok(Metrics::from_counts(correct, total, self.last_loss, self.epochs_trained))
    }

    fn snapshot(&self) -> Option<ModelSnapshot> {
        let net = self.net.as_ref()?;
        let mut v = net.params.clone();
        v.push(self.epochs_trained as f64);
        v.push(self.last_loss);
        Some(ModelSnapshot(v))
    }

    fn restore(&mut self, snapshot: &ModelSnapshot) -> Result<(), TrainerError> {
        let net = self.net.as_mut().ok_or(TrainerError::NotInitialized)?;
        let n = net.params.len();
        if snapshot.0.len() != n + 2 {
            return Err(TrainerError::Unsupported("snapshot does not match model shape".into()));
        }
        net.params.copy_from_slice(&snapshot.0[..n]);
        self.epochs_trained = snapshot.0[n] as u32;
        self.last_loss = snapshot.0[n + 1];
        Ok(())
    }
}
