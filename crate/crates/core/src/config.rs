//! JSON run configuration and the code that turns one into a finished run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineConfig;
use crate::bridge::{BridgeCommand, BridgeTrainer};
use crate::gateway::{
    ExperimentContext, HttpProvider, MockOracleProvider, OracleRules, Provider, ProviderConfig, ProviderError,
    ScriptedProvider,
};
use crate::orchestrator::{
    run_baseline, run_id, run_method1, run_method2, Gateway, LedgerSink, LoopConfig, Method, RunError, RunOutcome,
    RunSeeds,
};
use crate::trainer::{
    generate_synthetic_dataset, load_dataset, write_dataset, DatasetError, LabeledDataset, ReferenceTrainer,
    ReferenceTrainerConfig, SyntheticSpec, Trainer, TrainerError,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Directory(PathBuf),
}

fn default_bridge_max_epochs() -> u32 {
    100
}

fn default_bridge_patience() -> u32 {
    10
}

fn default_bridge_timeout() -> f64 {
    crate::bridge::DEFAULT_EPOCH_TIMEOUT.as_secs_f64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeSelection {
    /// Program followed by its leading arguments.
    pub command: Vec<String>,
    #[serde(default = "default_bridge_timeout")]
    pub epoch_timeout_s: f64,
    #[serde(default = "default_bridge_max_epochs")]
    pub max_epochs: u32,
    #[serde(default = "default_bridge_patience")]
    pub patience: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TrainerSelection {
    Reference(ReferenceTrainerConfig),
    Bridge(BridgeSelection),
}

impl Default for TrainerSelection {
    fn default() -> Self {
        TrainerSelection::Reference(ReferenceTrainerConfig::default())
    }
}

/// `"mock-oracle"`, `"mock-scripted:<path>"`, `{"mock_oracle": rules}` or `{"http": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProviderSelection {
    Named(String),
    Oracle { mock_oracle: OracleRules },
    Http { http: ProviderConfig },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextConfig {
    pub dataset_description: Option<String>,
    pub model_description: Option<String>,
    pub performance_goal: Option<String>,
    pub constraints: Vec<String>,
}

fn default_n() -> usize {
    3
}
fn default_t_iterations() -> u32 {
    3
}
fn default_epochs() -> u32 {
    100
}
fn default_t_interval() -> u32 {
    5
}
fn default_true() -> bool {
    true
}
fn default_max_repairs() -> u32 {
    3
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub trainer: TrainerSelection,
    #[serde(default)]
    pub provider: Option<ProviderSelection>,
    #[serde(default = "default_n")]
    pub n_augmentations: usize,
    #[serde(default = "default_t_iterations")]
    pub t_iterations: u32,
    #[serde(default = "default_epochs")]
    pub epochs: u32,
    #[serde(default = "default_t_interval")]
    pub t_interval: u32,
    #[serde(default)]
    pub baseline: Option<BaselineConfig>,
    #[serde(default)]
    pub context: ContextConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_true")]
    pub reinitialize_per_iteration: bool,
    #[serde(default = "default_max_repairs")]
    pub max_repairs: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Parses a config file, resolves relative paths against its directory
    /// and validates it.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = RunConfig::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        if let DatasetSource::Directory(d) = &mut self.dataset {
            *d = fix(d);
        }
        self.output_dir = fix(&self.output_dir);
        if let Some(ProviderSelection::Named(name)) = &mut self.provider {
            if let Some(p) = name.strip_prefix("mock-scripted:") {
                *name = format!("mock-scripted:{}", fix(Path::new(p)).display());
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if let DatasetSource::Directory(d) = &self.dataset {
            if !d.is_dir() {
                return bad(format!("dataset directory {} does not exist", d.display()));
            }
        }
        if let DatasetSource::Synthetic(s) = &self.dataset {
            s.validate().map_err(ConfigError::Invalid)?;
        }
        match &self.trainer {
            TrainerSelection::Reference(r) => r.validate().map_err(ConfigError::Invalid)?,
            TrainerSelection::Bridge(b) if b.command.is_empty() => {
                return bad("trainer.bridge.command must not be empty".into())
            }
            TrainerSelection::Bridge(_) => {}
        }
        match self.method {
            Method::Baseline => {
                let Some(b) = &self.baseline else {
                    return bad("method \"baseline\" requires a \"baseline\" section".into());
                };
                b.validate().map_err(ConfigError::Invalid)?;
            }
            _ => {
                let Some(p) = &self.provider else {
                    return bad(format!("method \"{}\" requires a \"provider\"", self.method.label()));
                };
                match p {
                    ProviderSelection::Named(n) if n == "mock-oracle" => {}
                    ProviderSelection::Named(n) => match n.strip_prefix("mock-scripted:") {
                        Some(path) if Path::new(path).is_file() => {}
                        Some(path) => return bad(format!("scripted provider file {path} does not exist")),
                        None => return bad(format!("unknown provider {n:?}")),
                    },
                    ProviderSelection::Oracle { mock_oracle } => mock_oracle.validate().map_err(ConfigError::Invalid)?,
                    ProviderSelection::Http { http } => http.validate().map_err(ConfigError::Invalid)?,
                }
                if self.n_augmentations == 0 {
                    return bad("n_augmentations must be at least 1".into());
                }
            }
        }
        self.loop_config().validate().map_err(ConfigError::Invalid)
    }

    pub fn loop_config(&self) -> LoopConfig {
        let (max_epochs, patience) = match &self.trainer {
            TrainerSelection::Reference(r) => (r.max_epochs, r.patience),
            TrainerSelection::Bridge(b) => (b.max_epochs, b.patience),
        };
        let max_repairs = match &self.provider {
            Some(ProviderSelection::Http { http }) => http.max_repairs,
            _ => self.max_repairs,
        };
        LoopConfig {
            method: self.method,
            model_description: self.model_description(),
            t_iterations: self.t_iterations,
            epochs: self.epochs,
            t_interval: self.t_interval,
            max_epochs,
            patience,
            reinitialize_per_iteration: self.reinitialize_per_iteration,
            max_repairs,
            seed: self.seed,
        }
    }

    pub fn model_description(&self) -> String {
        if let Some(m) = &self.context.model_description {
            return m.clone();
        }
        match &self.trainer {
            TrainerSelection::Reference(r) => format!(
                "multilayer perceptron (flatten, dense {} ReLU, dense softmax) on {}x{} grayscale input, plain SGD",
                r.hidden_units, r.input_size, r.input_size
            ),
            TrainerSelection::Bridge(_) => "external trainer".to_string(),
        }
    }

    pub fn experiment_context(&self, dataset: &LabeledDataset) -> ExperimentContext {
        let dataset_description = self.context.dataset_description.clone().unwrap_or_else(|| {
            let first = dataset.train.first().map(|(img, _)| img);
            let (h, w, c) = first.map(|i| (i.height(), i.width(), i.channels())).unwrap_or((0, 0, 0));
            format!(
                "{} image classification, {} classes ({}), {} training and {} validation images, {}x{}",
                if c == 1 { "grayscale" } else { "color" },
                dataset.num_classes(),
                dataset.class_names.join(", "),
                dataset.train.len(),
                dataset.valid.len(),
                w,
                h
            )
        });
        ExperimentContext {
            dataset_description,
            model_description: self.model_description(),
            performance_goal: self
                .context
                .performance_goal
                .clone()
                .unwrap_or_else(|| "maximize validation accuracy".into()),
            n_augmentations: self.n_augmentations,
            constraints: self.context.constraints.clone(),
        }
    }

    pub fn strategy_label(&self) -> &'static str {
        match (self.method, &self.baseline) {
            (Method::Baseline, Some(b)) => b.strategy.label(),
            (m, _) => m.label(),
        }
    }

    pub fn run_id(&self) -> String {
        run_id(self.method, self.strategy_label(), self.seed)
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.output_dir.join(format!("{}.jsonl", self.run_id()))
    }
}

pub fn build_dataset(cfg: &RunConfig) -> Result<LabeledDataset, DatasetError> {
    match &cfg.dataset {
        DatasetSource::Synthetic(spec) => Ok(generate_synthetic_dataset(spec, RunSeeds::derive(cfg.seed).dataset)),
        DatasetSource::Directory(d) => load_dataset(d),
    }
}

pub fn build_provider(selection: &ProviderSelection) -> Result<Box<dyn Provider>, ProviderError> {
    match selection {
        ProviderSelection::Named(n) if n == "mock-oracle" => Ok(Box::new(MockOracleProvider::default())),
        ProviderSelection::Named(n) => match n.strip_prefix("mock-scripted:") {
            Some(path) => Ok(Box::new(ScriptedProvider::from_file(Path::new(path))?)),
            None => Err(ProviderError::Config(format!("unknown provider {n:?}"))),
        },
        ProviderSelection::Oracle { mock_oracle } => Ok(Box::new(MockOracleProvider::new(mock_oracle.clone()))),
        ProviderSelection::Http { http } => Ok(Box::new(HttpProvider::from_config(http.clone())?)),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("dataset: {0}")]
    Dataset(#[from] DatasetError),
    #[error("provider: {0}")]
    Provider(#[from] ProviderError),
    #[error("trainer: {0}")]
    Trainer(TrainerError),
    #[error("run aborted: {0}")]
    Run(#[from] RunError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl ExecError {
    /// True for problems detected before any training happened.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            ExecError::Config(_) | ExecError::Dataset(_) | ExecError::Provider(_) | ExecError::Run(RunError::Config(_))
        )
    }
}

/// Sets up dataset, trainer and provider, then runs the configured loop into
/// `sink`. `provider_override` replaces the configured provider (replay).
pub fn execute_with(
    cfg: &RunConfig,
    sink: &mut LedgerSink,
    provider_override: Option<Box<dyn Provider>>,
) -> Result<RunOutcome, ExecError> {
    cfg.validate()?;
    let mut provider = match (provider_override, &cfg.provider, cfg.method) {
        (_, _, Method::Baseline) => None,
        (Some(p), _, _) => Some(p),
        (None, Some(sel), _) => Some(build_provider(sel)?),
        (None, None, _) => unreachable!("validated"),
    };
    let dataset = Arc::new(build_dataset(cfg)?);
    dataset.check()?;
    let mut trainer: Box<dyn Trainer> = match &cfg.trainer {
        TrainerSelection::Reference(r) => Box::new(ReferenceTrainer::new(dataset.clone(), r.clone())),
        TrainerSelection::Bridge(b) => {
            let arg = match &cfg.dataset {
                DatasetSource::Directory(d) => d.clone(),
                DatasetSource::Synthetic(_) => {
                    let dir = cfg.output_dir.join(format!("{}.dataset", cfg.run_id()));
                    write_dataset(&dataset, &dir)?;
                    dir
                }
            };
            let t = BridgeTrainer::launch(
                &BridgeCommand {
                    command: b.command.clone(),
                    epoch_timeout_s: b.epoch_timeout_s,
                },
                &arg.to_string_lossy(), &cfg.model_description())
                .map_err(ExecError::Trainer)?;
            Box::new(t)
        }
    };
    let snapshot = serde_json::to_value(cfg).expect("config serializes");
    let lc = cfg.loop_config();
    let outcome = match cfg.method {
        Method::Baseline => run_baseline(
            trainer.as_mut(),
            cfg.baseline.as_ref().expect("validated"),
            &lc,
            snapshot,
            sink,
        )?,
        m => {
            let mut gw = Gateway {
                provider: provider.as_deref_mut().expect("validated"),
                context: cfg.experiment_context(&dataset),
                max_repairs: lc.max_repairs,
            };
            if m == Method::Method1 {
                run_method1(trainer.as_mut(), &mut gw, &lc, snapshot, sink)?
            } else {
                run_method2(trainer.as_mut(), &mut gw, &lc, snapshot, sink)?
            }
        }
    };
    Ok(outcome)
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub outcome: RunOutcome,
    pub ledger_path: PathBuf,
    pub report_csv: PathBuf,
    pub report_txt: PathBuf,
}

/// Runs the config, writing the ledger, transcripts and a one-row report
/// under `cfg.output_dir`.
pub fn execute(cfg: &RunConfig) -> Result<RunArtifacts, ExecError> {
    cfg.validate()?;
    // fail fast on a missing API key before creating any files
    if let Some(ProviderSelection::Http { http }) = &cfg.provider {
        HttpProvider::from_config(http.clone())?;
    }
    let ledger_path = cfg.ledger_path();
    let mut sink = LedgerSink::create(&ledger_path)?;
    let outcome = execute_with(cfg, &mut sink, None)?;
    let rows = crate::report::build_report(&[ledger_path.clone()]);
    let report_csv = cfg.output_dir.join(format!("{}.report.csv", cfg.run_id()));
    let report_txt = cfg.output_dir.join(format!("{}.report.txt", cfg.run_id()));
    std::fs::write(&report_csv, crate::report::render_csv(&rows))?;
    std::fs::write(&report_txt, crate::report::render_table(&rows))?;
    Ok(RunArtifacts {
        outcome,
        ledger_path,
        report_csv,
        report_txt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_method_is_named() {
        let err = RunConfig::from_json(r#"{"dataset": {"synthetic": {}}}"#).unwrap_err();
        assert!(err.to_string().contains("method"), "{err}");
    }

    #[test]
    fn defaults_and_validation() {
        let cfg = RunConfig::from_json(r#"{"method": "method2", "dataset": {"synthetic": {}}, "provider": "mock-oracle"}"#)
            .unwrap();
        assert_eq!(cfg.t_interval, 5);
        assert!(cfg.validate().is_ok());
        let cfg = RunConfig::from_json(r#"{"method": "method1", "dataset": {"synthetic": {}}}"#).unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("provider"));
        let cfg = RunConfig::from_json(r#"{"method": "baseline", "dataset": {"directory": "/nonexistent/x"}, "baseline": {"strategy": "none"}}"#)
            .unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("does not exist"));
    }

    #[test]
    fn provider_forms() {
        let p: ProviderSelection = serde_json::from_str(r#""mock-oracle""#).unwrap();
        assert_eq!(p, ProviderSelection::Named("mock-oracle".into()));
        let p: ProviderSelection =
            serde_json::from_str(r#"{"mock_oracle": {"harden_factor": 1.2}}"#).unwrap();
        assert!(matches!(p, ProviderSelection::Oracle { .. }));
        let p: ProviderSelection = serde_json::from_str(
            r#"{"http": {"endpoint_url": "http://x", "model": "m", "temperature": 0, "api_key_env": "K"}}"#,
        )
        .unwrap();
        assert!(matches!(p, ProviderSelection::Http { .. }));
    }
}
