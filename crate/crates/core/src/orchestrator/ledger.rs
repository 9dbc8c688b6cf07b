//! JSONL run ledger with a sibling transcript directory.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::gateway::LLMTranscript;
use crate::policy::{parse_policy, Catalog, Policy, PolicyErrors};
use crate::trainer::Metrics;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Method1,
    Method2,
    Baseline,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Method1 => "method1",
            Method::Method2 => "method2",
            Method::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub run: u64,
    pub trainer: u64,
    pub dataset: u64,
    pub augment: u64,
}

impl RunSeeds {
    pub fn derive(run: u64) -> Self {
        use crate::transforms::derive_seed;
        RunSeeds {
            run,
            trainer: derive_seed(run, "trainer"),
            dataset: derive_seed(run, "dataset"),
            augment: derive_seed(run, "augment"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostAccounting {
    pub llm_queries: u64,
    pub total_epochs_trained: u64,
    pub full_trainings: u64,
    pub model_initializations: u64,
    pub provider_cost_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub artifact_version: String,
    pub catalog_version: String,
    pub run_id: String,
    pub method: Method,
    /// Human-readable strategy label used in reports.
    pub strategy: String,
    pub config: Value,
    pub seeds: RunSeeds,
    /// Known departures from the textbook loop, e.g. `best_checkpoint_return`.
    #[serde(default)]
    pub deviations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    /// Position of the query in the run, starting at 0 for the initial prompt.
    pub index: u64,
    /// Iteration whose evaluation triggered the query; `None` for the initial one.
    pub after_iteration: Option<u64>,
    pub transcript_ref: String,
    /// `"ok"` or an error code.
    pub outcome: String,
    pub policy_canonical: Option<String>,
    pub repair_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u64,
    /// Policy the model was trained with; `None` for baselines.
    pub policy_canonical: Option<String>,
    pub metrics: Metrics,
    /// Feedback query issued after this evaluation, if any.
    pub transcript_ref: Option<String>,
    pub wall_time_s: f64,
    pub epochs_trained_so_far: u64,
    /// Augmentation root seed used for this iteration's epochs.
    pub seed: u64,
    #[serde(default)]
    pub degraded: bool,
}

impl IterationRecord {
    pub fn policy(&self) -> Option<Result<Policy, PolicyErrors>> {
        let text = self.policy_canonical.as_deref()?;
        let n = serde_json::from_str::<Value>(text)
            .ok()
            .and_then(|v| v.get("n").and_then(Value::as_u64))
            .unwrap_or(0) as usize;
        Some(parse_policy(text, Catalog::standard(), n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub final_metrics: Metrics,
    pub best_index: u64,
    pub stopped_early: bool,
    pub cost: CostAccounting,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortRecord {
    pub code: String,
    pub message: String,
    pub cost: CostAccounting,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LedgerRecord {
    Header(Header),
    Query(QueryRecord),
    Iteration(IterationRecord),
    Summary(Summary),
    Abort(AbortRecord),
}

/// Where transcripts for a ledger at `path` live.
pub fn transcripts_dir(path: &Path) -> PathBuf {
    path.with_extension("transcripts")
}

/// Append-only ledger writer. Every record is flushed as soon as it is
/// written; everything is also kept in memory.
#[derive(Debug, Default)]
pub struct LedgerSink {
    file: Option<(File, PathBuf)>,
    records: Vec<LedgerRecord>,
    transcripts: Vec<LLMTranscript>,
}

impl LedgerSink {
    pub fn memory() -> Self {
        LedgerSink::default()
    }

    pub fn create(path: &Path) -> io::Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let file = File::create(path)?;
        let dir = transcripts_dir(path);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        Ok(LedgerSink {
            file: Some((file, dir)),
            ..Default::default()
        })
    }

    pub fn append(&mut self, record: LedgerRecord) -> io::Result<()> {
        if let Some((file, _)) = &mut self.file {
            let mut line = serde_json::to_string(&record).map_err(io::Error::other)?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        self.records.push(record);
        Ok(())
    }

    /// Stores a transcript and returns its reference.
    pub fn store_transcript(&mut self, transcript: &LLMTranscript) -> io::Result<String> {
        let reference = format!("q{:04}", self.transcripts.len());
        if let Some((_, dir)) = &self.file {
            fs::create_dir_all(dir)?;
            let text = serde_json::to_string_pretty(transcript).map_err(io::Error::other)?;
            fs::write(dir.join(format!("{reference}.json")), text)?;
        }
        self.transcripts.push(transcript.clone());
        Ok(reference)
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn transcripts(&self) -> &[LLMTranscript] {
        &self.transcripts
    }

    pub fn into_parts(self) -> (Vec<LedgerRecord>, Vec<LLMTranscript>) {
        (self.records, self.transcripts)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("ledger line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("ledger is truncated: {0}")]
    Truncated(String),
    #[error("ledger was written by format {found_format} / artifact {found_artifact}; this build reads format {FORMAT_VERSION} / artifact {}", crate::ARTIFACT_VERSION)]
    Version {
        found_format: u32,
        found_artifact: String,
    },
    #[error("missing transcript {0}")]
    MissingTranscript(String),
}

/// A parsed ledger file.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedLedger {
    pub path: PathBuf,
    pub header: Header,
    pub records: Vec<LedgerRecord>,
    /// False when the file ends without a summary or abort line, or with a partial line.
    pub complete: bool,
}

impl LoadedLedger {
    pub fn iterations(&self) -> impl Iterator<Item = &IterationRecord> {
        self.records.iter().filter_map(|r| match r {
            LedgerRecord::Iteration(i) => Some(i),
            _ => None,
        })
    }

    pub fn queries(&self) -> impl Iterator<Item = &QueryRecord> {
        self.records.iter().filter_map(|r| match r {
            LedgerRecord::Query(q) => Some(q),
            _ => None,
        })
    }

    pub fn summary(&self) -> Option<&Summary> {
        self.records.iter().find_map(|r| match r {
            LedgerRecord::Summary(s) => Some(s),
            _ => None,
        })
    }

    pub fn abort(&self) -> Option<&AbortRecord> {
        self.records.iter().find_map(|r| match r {
            LedgerRecord::Abort(a) => Some(a),
            _ => None,
        })
    }

    pub fn load_transcript(&self, reference: &str) -> Result<LLMTranscript, LedgerError> {
        let path = transcripts_dir(&self.path).join(format!("{reference}.json"));
        let text = fs::read_to_string(&path).map_err(|_| LedgerError::MissingTranscript(reference.to_string()))?;
        serde_json::from_str(&text).map_err(|e| LedgerError::Corrupt {
            line: 0,
            message: format!("transcript {reference}: {e}"),
        })
    }

    /// Checks the version gate.
    pub fn check_version(&self) -> Result<(), LedgerError> {
        if self.header.format_version != FORMAT_VERSION || self.header.artifact_version != crate::ARTIFACT_VERSION {
            return Err(LedgerError::Version {
                found_format: self.header.format_version,
                found_artifact: self.header.artifact_version.clone(),
            });
        }
        Ok(())
    }
}

/// Reads a ledger. A trailing partial line (abnormal termination) is dropped
/// and marks the ledger incomplete; any other bad line is an error.
pub fn read_ledger(path: &Path) -> Result<LoadedLedger, LedgerError> {
    let text = fs::read_to_string(path).map_err(|source| LedgerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines: Vec<&str> = text.split('\n').collect();
    let mut partial_tail = false;
    if let Some(last) = lines.pop() {
        partial_tail = !last.is_empty();
    }
    let mut records = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let rec: LedgerRecord = serde_json::from_str(line).map_err(|e| LedgerError::Corrupt {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    let header = match records.first() {
        Some(LedgerRecord::Header(h)) => h.clone(),
        _ => {
            return Err(LedgerError::Corrupt {
                line: 1,
                message: "first line is not a header".into(),
            })
        }
    };
    let complete = !partial_tail
        && matches!(records.last(), Some(LedgerRecord::Summary(_) | LedgerRecord::Abort(_)));
    Ok(LoadedLedger {
        path: path.to_path_buf(),
        header,
        records,
        complete,
    })
}

/// Ledger text (JSONL, or one JSON document such as a transcript) with every
/// `wall_time_s` and `latency_s` field removed, for byte comparison of two runs.
pub fn strip_wall_times(ledger_text: &str) -> String {
    fn strip(v: &mut Value) {
        match v {
            Value::Object(map) => {
                map.remove("wall_time_s");
                map.remove("latency_s");
                map.values_mut().for_each(strip);
            }
            Value::Array(items) => items.iter_mut().for_each(strip),
            _ => {}
        }
    }
    if let Ok(mut v) = serde_json::from_str::<Value>(ledger_text) {
        strip(&mut v);
        return v.to_string();
    }
    ledger_text
        .lines()
        .map(|line| match serde_json::from_str::<Value>(line) {
            Ok(mut v) => {
                strip(&mut v);
                v.to_string()
            }
            Err(_) => line.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}
