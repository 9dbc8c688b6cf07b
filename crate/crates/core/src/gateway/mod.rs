//! Prompt construction, providers and the parse/repair query loop.

mod oracle;
mod prompt;
mod provider;
mod query;

pub use oracle::{
    harden, next_unused_kind, oracle_response, parse_prompt, seed_policy, soften, MockOracleProvider, OracleRules,
    ParsedHistory, SWAP_MAGNITUDE,
};
pub use prompt::{
    build_feedback_prompt, build_initial_prompt, catalog_block, fmt_accuracy, ExperimentContext, FeedbackEntry,
    PromptBundle, PromptError, CLAUSE_FREE_EDIT, CLAUSE_GLOBAL, CLAUSE_TAILOR, HISTORY_WINDOW,
};
pub use provider::{
    ChatMessage, FailingProvider, HttpProvider, Provider, ProviderConfig, ProviderError, ReplayProvider,
    ScriptedProvider,
};
pub use query::{
    extract_policy_text, query_policy, repair_message, LLMTranscript, ParseOutcome, QueryError, QueryFailure,
};
