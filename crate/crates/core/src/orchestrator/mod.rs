//! Both optimization loops, baseline runs, the run ledger and replay.

mod ledger;
mod replay;
mod run;

pub use ledger::{
    read_ledger, strip_wall_times, transcripts_dir, AbortRecord, CostAccounting, Header, IterationRecord,
    LedgerError, LedgerRecord, LedgerSink, LoadedLedger, Method, QueryRecord, RunSeeds, Summary, FORMAT_VERSION,
};
pub use replay::{replay, Divergence, ReplayError, ReplayReport};
pub use run::{
    run_baseline, run_id, run_method1, run_method2, train_to_convergence, Gateway, LoopConfig, RunError, RunOutcome,
    TrainingOutcome,
};
