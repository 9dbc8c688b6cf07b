use std::fmt;
use std::path::Path;

use serde::Serialize;

use super::ledger::{read_ledger, IterationRecord, LedgerError, LedgerRecord, LedgerSink};
use crate::config::{execute_with, ExecError, RunConfig};
use crate::gateway::ReplayProvider;

/// One record whose recomputed values differ from the recorded ones.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    /// Iteration index, or `None` for run-level records.
    pub index: Option<u64>,
    pub fields: Vec<String>,
    pub recorded: String,
    pub replayed: String,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "iteration {i}")?,
            None => write!(f, "run")?,
        }
        write!(f, " [{}]: recorded {} / replayed {}", self.fields.join(", "), self.recorded, self.replayed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub run_id: String,
    pub iterations_checked: usize,
    pub divergences: Vec<Divergence>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.divergences.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("ledger header holds no usable run config: {0}")]
    Config(String),
    #[error("re-execution failed before producing records: {0}")]
    Exec(#[from] ExecError),
}

impl ReplayError {
    pub fn is_version(&self) -> bool {
        matches!(self, ReplayError::Ledger(LedgerError::Version { .. }))
    }
}

fn iterations(records: &[LedgerRecord]) -> Vec<&IterationRecord> {
    records
        .iter()
        .filter_map(|r| match r {
            LedgerRecord::Iteration(i) => Some(i),
            _ => None,
        })
        .collect()
}

fn compare(recorded: &IterationRecord, replayed: &IterationRecord) -> Option<Divergence> {
    let mut fields = Vec::new();
    if recorded.index != replayed.index {
        fields.push("index".to_string());
    }
    if recorded.policy_canonical != replayed.policy_canonical {
        fields.push("policy_canonical".to_string());
    }
    let a = serde_json::to_value(&recorded.metrics).expect("serializable");
    let b = serde_json::to_value(&replayed.metrics).expect("serializable");
    for (key, va) in a.as_object().into_iter().flatten() {
        if b.get(key) != Some(va) {
            fields.push(format!("metrics.{key}"));
        }
    }
    if recorded.epochs_trained_so_far != replayed.epochs_trained_so_far {
        fields.push("epochs_trained_so_far".to_string());
    }
    if recorded.degraded != replayed.degraded {
        fields.push("degraded".to_string());
    }
    if recorded.seed != replayed.seed {
        fields.push("seed".to_string());
    }
    (!fields.is_empty()).then(|| Divergence {
        index: Some(recorded.index),
        fields,
        recorded: a.to_string(),
        replayed: b.to_string(),
    })
}

/// Re-runs a ledger's config with the recorded raw responses standing in for
/// the provider, and compares every iteration record.
pub fn replay(path: &Path) -> Result<ReplayReport, ReplayError> {
    let ledger = read_ledger(path)?;
    ledger.check_version()?;
    if !ledger.complete {
        return Err(LedgerError::Truncated(format!("{} has no final summary or abort line", path.display())).into());
    }
    let cfg: RunConfig =
        serde_json::from_value(ledger.header.config.clone()).map_err(|e| ReplayError::Config(e.to_string()))?;
    let mut responses = Vec::new();
    for q in ledger.queries() {
        responses.extend(ledger.load_transcript(&q.transcript_ref)?.raw_responses);
    }
    let mut sink = LedgerSink::memory();
    let result = execute_with(&cfg, &mut sink, Some(Box::new(ReplayProvider::new(responses))));
    if let Err(e) = &result {
        if e.is_validation() {
            return Err(ReplayError::Config(e.to_string()));
        }
    }
    let (records, _) = sink.into_parts();
    let want = iterations(&ledger.records);
    let got = iterations(&records);
    let mut divergences: Vec<Divergence> = want.iter().zip(&got).filter_map(|(a, b)| compare(a, b)).collect();
    for extra in want.iter().skip(got.len()) {
        divergences.push(Divergence {
            index: Some(extra.index),
            fields: vec!["missing_in_replay".into()],
            recorded: serde_json::to_string(&extra.metrics).unwrap_or_default(),
            replayed: "-".into(),
        });
    }
    for extra in got.iter().skip(want.len()) {
        divergences.push(Divergence {
            index: Some(extra.index),
            fields: vec!["extra_in_replay".into()],
            recorded: "-".into(),
            replayed: serde_json::to_string(&extra.metrics).unwrap_or_default(),
        });
    }
    let recorded_end = ledger.records.last();
    let replayed_end = records.last();
    let end_matches = match (recorded_end, replayed_end) {
        (Some(LedgerRecord::Summary(a)), Some(LedgerRecord::Summary(b))) => {
            a.final_metrics == b.final_metrics && a.cost.llm_queries == b.cost.llm_queries
        }
        (Some(LedgerRecord::Abort(a)), Some(LedgerRecord::Abort(b))) => a.code == b.code,
        _ => false,
    };
    if !end_matches {
        let show = |r: Option<&LedgerRecord>| r.map(|r| serde_json::to_string(r).unwrap_or_default()).unwrap_or_default();
        divergences.push(Divergence {
            index: None,
            fields: vec!["outcome".into()],
            recorded: show(recorded_end),
            replayed: show(replayed_end),
        });
    }
    Ok(ReplayReport {
        run_id: ledger.header.run_id.clone(),
        iterations_checked: want.len(),
        divergences,
    })
}
