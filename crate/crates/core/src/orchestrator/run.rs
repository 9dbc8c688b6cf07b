use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ledger::{
    AbortRecord, CostAccounting, Header, IterationRecord, LedgerRecord, LedgerSink, Method, QueryRecord, RunSeeds,
    Summary, FORMAT_VERSION,
};
use crate::baselines::BaselineConfig;
use crate::gateway::{
    build_feedback_prompt, build_initial_prompt, query_policy, ExperimentContext, FeedbackEntry, Provider,
    QueryFailure,
};
use crate::policy::{canonical_text, Catalog, Policy, CATALOG_VERSION};
use crate::trainer::{Augmentation, EpochPlan, Metrics, ModelSnapshot, Trainer, TrainerError};
use crate::transforms::derive_seed_index;

/// Knobs shared by every run kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub method: Method,
    pub model_description: String,
    /// Method 1: number of feedback iterations.
    pub t_iterations: u32,
    /// Method 2: epoch budget.
    pub epochs: u32,
    /// Method 2: epochs between policy updates.
    pub t_interval: u32,
    /// Per-training epoch cap (method 1 and baselines).
    pub max_epochs: u32,
    /// Evaluations without improvement before stopping.
    pub patience: u32,
    pub reinitialize_per_iteration: bool,
    pub max_repairs: u32,
    pub seed: u64,
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), String> {
        match self.method {
            Method::Method1 if self.t_iterations == 0 => return Err("t_iterations must be at least 1".into()),
            Method::Method2 if self.epochs == 0 => return Err("epochs must be at least 1".into()),
            Method::Method2 if self.t_interval == 0 || self.t_interval > self.epochs => {
                return Err("t_interval must satisfy 1 <= t_interval <= epochs".into())
            }
            _ => {}
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return Err("max_epochs and patience must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("initial policy query failed: {}", .0.error)]
    InitialQuery(Box<QueryFailure>),
    #[error("{0}")]
    Trainer(#[from] TrainerError),
    #[error("ledger write failed: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn code(&self) -> String {
        match self {
            RunError::Config(_) => "CONFIG".into(),
            RunError::InitialQuery(f) => f.error.code(),
            RunError::Trainer(TrainerError::NumericDivergence { .. }) => "NUMERIC_DIVERGENCE".into(),
            RunError::Trainer(TrainerError::Timeout(_)) => "TRAINER_TIMEOUT".into(),
            RunError::Trainer(_) => "TRAINER".into(),
            RunError::Io(_) => "IO".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub run_id: String,
    pub final_metrics: Metrics,
    pub best_index: u64,
    pub final_policy: Option<Policy>,
    pub cost: CostAccounting,
    pub stopped_early: bool,
}

/// Provider plus what is needed to talk to it.
pub struct Gateway<'a> {
    pub provider: &'a mut dyn Provider,
    pub context: ExperimentContext,
    pub max_repairs: u32,
}

pub fn run_id(method: Method, strategy: &str, seed: u64) -> String {
    match method {
        Method::Baseline => format!("baseline-{strategy}-{seed:016x}"),
        m => format!("{}-{seed:016x}", m.label()),
    }
}

struct Ctx<'s> {
    sink: &'s mut LedgerSink,
    cost: CostAccounting,
    started: Instant,
    catalog: &'static Catalog,
}

impl Ctx<'_> {
    fn elapsed(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    fn abort(&mut self, err: RunError) -> RunError {
        let rec = LedgerRecord::Abort(AbortRecord {
            code: err.code(),
            message: err.to_string(),
            cost: self.cost.clone(),
            wall_time_s: self.elapsed(),
        });
        // the original error matters more than a failed abort line
        let _ = self.sink.append(rec);
        err
    }

    fn query(
        &mut self,
        gw: &mut Gateway<'_>,
        history: &[FeedbackEntry],
        after: Option<u64>,
    ) -> Result<(Policy, String), (QueryFailure, String)> {
        let prompt = if history.is_empty() {
            build_initial_prompt(&gw.context, self.catalog)
        } else {
            build_feedback_prompt(history, &gw.context, self.catalog).expect("history is non-empty")
        };
        let n = gw.context.n_augmentations;
        let result = query_policy(gw.provider, &prompt, self.catalog, n, gw.max_repairs);
        let transcript = match &result {
            Ok((_, t)) => t,
            Err(f) => &f.transcript,
        };
        self.cost.llm_queries += 1;
        self.cost.provider_cost_estimate += transcript.cost_estimate;
        let index = self.cost.llm_queries - 1;
        let reference = self.sink.store_transcript(transcript).unwrap_or_else(|_| format!("q{index:04}"));
        let (outcome, canonical) = match &result {
            Ok((p, _)) => ("ok".to_string(), Some(canonical_text(p))),
            Err(f) => (f.error.code(), None),
        };
        let rec = LedgerRecord::Query(QueryRecord {
            index,
            after_iteration: after,
            transcript_ref: reference.clone(),
            outcome,
            policy_canonical: canonical,
            repair_count: transcript.repair_count,
        });
        if let Err(e) = self.sink.append(rec) {
            log::error!("ledger write failed: {e}");
        }
        match result {
            Ok((p, _)) => Ok((p, reference)),
            Err(f) => Err((f, reference)),
        }
    }

    fn initial_query(&mut self, gw: &mut Gateway<'_>) -> Result<Policy, RunError> {
        match self.query(gw, &[], None) {
            Ok((p, _)) => Ok(p),
            Err((f, _)) => Err(self.abort(RunError::InitialQuery(Box::new(f)))),
        }
    }

    fn init(&mut self, trainer: &mut dyn Trainer, cfg: &LoopConfig, seeds: &RunSeeds) -> Result<(), RunError> {
        self.cost.model_initializations += 1;
        trainer
            .init(&cfg.model_description, seeds.trainer)
            .map_err(|e| self.abort(e.into()))
    }
}

fn header(cfg: &LoopConfig, strategy: &str, snapshot: Value, seeds: RunSeeds) -> Header {
    let mut deviations = Vec::new();
    if cfg.method == Method::Method1 {
        deviations.push("best_checkpoint_return".to_string());
        if cfg.reinitialize_per_iteration {
            deviations.push("reinitialize_per_iteration".to_string());
        }
    }
    Header {
        format_version: FORMAT_VERSION,
        artifact_version: crate::ARTIFACT_VERSION.to_string(),
        catalog_version: CATALOG_VERSION.to_string(),
        run_id: run_id(cfg.method, strategy, cfg.seed),
        method: cfg.method,
        strategy: strategy.to_string(),
        config: snapshot,
        seeds,
        deviations,
    }
}

fn entry(rec: &IterationRecord) -> FeedbackEntry {
    FeedbackEntry {
        index: rec.index,
        policy_canonical: rec.policy_canonical.clone().unwrap_or_default(),
        val_accuracy: rec.metrics.val_accuracy,
    }
}

/// Best-so-far tracking; ties keep the earlier checkpoint.
#[derive(Default)]
struct Best {
    metrics: Option<Metrics>,
    index: u64,
    snapshot: Option<ModelSnapshot>,
}

impl Best {
    fn offer(&mut self, index: u64, m: &Metrics, trainer: &dyn Trainer) -> bool {
        let better = self.metrics.as_ref().is_none_or(|b| m.val_accuracy > b.val_accuracy);
        if better {
            self.metrics = Some(m.clone());
            self.index = index;
            self.snapshot = trainer.snapshot();
        }
        better
    }
}

pub struct TrainingOutcome {
    pub best: Metrics,
    pub epochs: u32,
    pub stopped_early: bool,
    pub snapshot: Option<ModelSnapshot>,
}

/// Trains until `patience` consecutive evaluations bring no improvement or
/// `max_epochs` is reached, then restores the best checkpoint if the trainer
/// supports snapshots.
pub fn train_to_convergence(
    trainer: &mut dyn Trainer,
    augmentation: Augmentation<'_>,
    aug_seed: u64,
    max_epochs: u32,
    patience: u32,
) -> Result<TrainingOutcome, TrainerError> {
    let mut best = Best::default();
    let mut since = 0;
    let mut epochs = 0;
    let mut stopped_early = false;
    for epoch in 1..=max_epochs {
        trainer.train_epoch(&EpochPlan {
            epoch,
            augmentation,
            aug_seed,
        })?;
        epochs = epoch;
        let m = trainer.evaluate()?;
        if best.offer(epoch as u64, &m, trainer) {
            since = 0;
        } else {
            since += 1;
            if since >= patience {
                stopped_early = epoch < max_epochs;
                break;
            }
        }
    }
    if let Some(s) = &best.snapshot {
        trainer.restore(s)?;
    }
    Ok(TrainingOutcome {
        best: best.metrics.expect("at least one epoch"),
        epochs,
        stopped_early,
        snapshot: best.snapshot,
    })
}

fn finish(
    ctx: &mut Ctx<'_>,
    final_metrics: Metrics,
    best_index: u64,
    stopped_early: bool,
    run_id: String,
    final_policy: Option<Policy>,
) -> Result<RunOutcome, RunError> {
    ctx.sink.append(LedgerRecord::Summary(Summary {
        final_metrics: final_metrics.clone(),
        best_index,
        stopped_early,
        cost: ctx.cost.clone(),
        wall_time_s: ctx.elapsed(),
    }))?;
    Ok(RunOutcome {
        run_id,
        final_metrics,
        best_index,
        final_policy,
        cost: ctx.cost.clone(),
        stopped_early,
    })
}

/// Retrain-per-iteration loop: each iteration trains to convergence under the
/// current policy, then asks for a new one. Returns with the best
/// iteration's model loaded.
pub fn run_method1(
    trainer: &mut dyn Trainer,
    gw: &mut Gateway<'_>,
    cfg: &LoopConfig,
    snapshot: Value,
    sink: &mut LedgerSink,
) -> Result<RunOutcome, RunError> {
    cfg.validate().map_err(RunError::Config)?;
    gw.context.validate().map_err(RunError::Config)?;
    let seeds = RunSeeds::derive(cfg.seed);
    let head = header(cfg, "method1", snapshot, seeds);
    let run_id = head.run_id.clone();
    sink.append(LedgerRecord::Header(head))?;
    let mut ctx = Ctx {
        sink,
        cost: CostAccounting::default(),
        started: Instant::now(),
        catalog: Catalog::standard(),
    };
    let mut policy = ctx.initial_query(gw)?;
    let mut history: Vec<FeedbackEntry> = Vec::new();
    let mut best = Best::default();
    let mut best_policy = policy.clone();
    for t in 1..=cfg.t_iterations as u64 {
        if t == 1 || cfg.reinitialize_per_iteration {
            ctx.init(trainer, cfg, &seeds)?;
        }
        let aug_seed = derive_seed_index(seeds.augment, t);
        let outcome = train_to_convergence(trainer, Augmentation::Policy(&policy), aug_seed, cfg.max_epochs, cfg.patience)
            .map_err(|e| ctx.abort(e.into()))?;
        ctx.cost.total_epochs_trained += outcome.epochs as u64;
        ctx.cost.full_trainings += 1;
        if best.metrics.as_ref().is_none_or(|b| outcome.best.val_accuracy > b.val_accuracy) {
            best.metrics = Some(outcome.best.clone());
            best.index = t;
            best.snapshot = outcome.snapshot.clone();
            best_policy = policy.clone();
        }
        let mut rec = IterationRecord {
            index: t,
            policy_canonical: Some(canonical_text(&policy)),
            metrics: outcome.best,
            transcript_ref: None,
            wall_time_s: 0.0,
            epochs_trained_so_far: ctx.cost.total_epochs_trained,
            seed: aug_seed,
            degraded: false,
        };
        history.push(entry(&rec));
        match ctx.query(gw, &history, Some(t)) {
            Ok((next, r)) => {
                rec.transcript_ref = Some(r);
                policy = next;
            }
            Err((f, r)) => {
                log::warn!("policy update after iteration {t} failed, keeping current policy: {}", f.error);
                rec.transcript_ref = Some(r);
                rec.degraded = true;
            }
        }
        rec.wall_time_s = ctx.elapsed();
        ctx.sink.append(LedgerRecord::Iteration(rec))?;
    }
    if let Some(s) = &best.snapshot {
        trainer.restore(s).map_err(|e| ctx.abort(e.into()))?;
    }
    finish(&mut ctx, best.metrics.expect("t_iterations >= 1"), best.index, false, run_id, Some(best_policy))
}

/// Single-training loop: the policy is refreshed every `t_interval` epochs
/// and applied from the next epoch on.
pub fn run_method2(
    trainer: &mut dyn Trainer,
    gw: &mut Gateway<'_>,
    cfg: &LoopConfig,
    snapshot: Value,
    sink: &mut LedgerSink,
) -> Result<RunOutcome, RunError> {
    cfg.validate().map_err(RunError::Config)?;
    gw.context.validate().map_err(RunError::Config)?;
    let seeds = RunSeeds::derive(cfg.seed);
    let head = header(cfg, "method2", snapshot, seeds);
    let run_id = head.run_id.clone();
    sink.append(LedgerRecord::Header(head))?;
    let mut ctx = Ctx {
        sink,
        cost: CostAccounting::default(),
        started: Instant::now(),
        catalog: Catalog::standard(),
    };
    let mut policy = ctx.initial_query(gw)?;
    ctx.init(trainer, cfg, &seeds)?;
    ctx.cost.full_trainings = 1;
    let mut history: Vec<FeedbackEntry> = Vec::new();
    let mut best = Best::default();
    let mut since = 0;
    let mut stopped_early = false;
    let mut last_epoch = 0;
    for e in 1..=cfg.epochs {
        trainer
            .train_epoch(&EpochPlan {
                epoch: e,
                augmentation: Augmentation::Policy(&policy),
                aug_seed: seeds.augment,
            })
            .map_err(|err| ctx.abort(err.into()))?;
        ctx.cost.total_epochs_trained += 1;
        last_epoch = e;
        if e % cfg.t_interval != 0 {
            continue;
        }
        let m = trainer.evaluate().map_err(|err| ctx.abort(err.into()))?;
        if best.offer(e as u64, &m, trainer) {
            since = 0;
        } else {
            since += 1;
        }
        let mut rec = IterationRecord {
            index: e as u64,
            policy_canonical: Some(canonical_text(&policy)),
            metrics: m,
            transcript_ref: None,
            wall_time_s: 0.0,
            epochs_trained_so_far: ctx.cost.total_epochs_trained,
            seed: seeds.augment,
            degraded: false,
        };
        history.push(entry(&rec));
        if since >= cfg.patience && e < cfg.epochs {
            stopped_early = true;
            rec.wall_time_s = ctx.elapsed();
            ctx.sink.append(LedgerRecord::Iteration(rec))?;
            break;
        }
        match ctx.query(gw, &history, Some(e as u64)) {
            Ok((next, r)) => {
                rec.transcript_ref = Some(r);
                policy = next;
            }
            Err((f, r)) => {
                log::warn!("policy update at epoch {e} failed, keeping current policy: {}", f.error);
                rec.transcript_ref = Some(r);
                rec.degraded = true;
            }
        }
        rec.wall_time_s = ctx.elapsed();
        ctx.sink.append(LedgerRecord::Iteration(rec))?;
    }
    if !stopped_early && last_epoch % cfg.t_interval != 0 {
        let m = trainer.evaluate().map_err(|err| ctx.abort(err.into()))?;
        best.offer(last_epoch as u64, &m, trainer);
        ctx.sink.append(LedgerRecord::Iteration(IterationRecord {
            index: last_epoch as u64,
            policy_canonical: Some(canonical_text(&policy)),
            metrics: m,
            transcript_ref: None,
            wall_time_s: ctx.elapsed(),
            epochs_trained_so_far: ctx.cost.total_epochs_trained,
            seed: seeds.augment,
            degraded: false,
        }))?;
    }
    if let Some(s) = &best.snapshot {
        trainer.restore(s).map_err(|e| ctx.abort(e.into()))?;
    }
    let final_metrics = best.metrics.clone().expect("at least one evaluation");
    finish(&mut ctx, final_metrics, best.index, stopped_early, run_id, Some(policy))
}

/// One full training with a fixed per-sample strategy and no model queries.
pub fn run_baseline(
    trainer: &mut dyn Trainer,
    baseline: &BaselineConfig,
    cfg: &LoopConfig,
    snapshot: Value,
    sink: &mut LedgerSink,
) -> Result<RunOutcome, RunError> {
    cfg.validate().map_err(RunError::Config)?;
    baseline.validate().map_err(RunError::Config)?;
    let seeds = RunSeeds::derive(cfg.seed);
    let strategy = baseline.strategy.label();
    let head = header(cfg, strategy, snapshot, seeds);
    let run_id = head.run_id.clone();
    sink.append(LedgerRecord::Header(head))?;
    let mut ctx = Ctx {
        sink,
        cost: CostAccounting::default(),
        started: Instant::now(),
        catalog: Catalog::standard(),
    };
    ctx.init(trainer, cfg, &seeds)?;
    let outcome = train_to_convergence(
        trainer,
        Augmentation::Baseline(baseline),
        seeds.augment,
        cfg.max_epochs,
        cfg.patience,
    )
    .map_err(|e| ctx.abort(e.into()))?;
    ctx.cost.total_epochs_trained = outcome.epochs as u64;
    ctx.cost.full_trainings = 1;
    ctx.sink.append(LedgerRecord::Iteration(IterationRecord {
        index: 1,
        policy_canonical: None,
        metrics: outcome.best.clone(),
        transcript_ref: None,
        wall_time_s: ctx.elapsed(),
        epochs_trained_so_far: outcome.epochs as u64,
        seed: seeds.augment,
        degraded: false,
    }))?;
    finish(&mut ctx, outcome.best, 1, outcome.stopped_early, run_id, None)
}
