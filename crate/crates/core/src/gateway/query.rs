use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::prompt::PromptBundle;
use super::provider::{ChatMessage, Provider, ProviderError};
use crate::policy::{canonical_text, parse_policy, Catalog, Policy, PolicyErrors};

/// Result of parsing the final response of a query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseOutcome {
    Policy(String),
    Errors(Vec<String>),
    ProviderError(String),
}

/// Everything exchanged while obtaining one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LLMTranscript {
    pub prompt: PromptBundle,
    /// Raw provider responses in call order.
    pub raw_responses: Vec<String>,
    /// Repair messages sent after each failed parse.
    pub repair_prompts: Vec<String>,
    pub parse_outcome: ParseOutcome,
    /// Prose of the accepted (or last) response, outside the policy block.
    pub rationale_text: String,
    pub repair_count: u32,
    pub latency_s: f64,
    pub cost_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("{0}")]
    Provider(#[from] ProviderError),
    #[error("REPAIRS_EXHAUSTED:\n{0}")]
    RepairsExhausted(PolicyErrors),
}

impl QueryError {
    pub fn code(&self) -> String {
        match self {
            QueryError::Provider(e) => e.code(),
            QueryError::RepairsExhausted(_) => "REPAIRS_EXHAUSTED".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QueryFailure {
    pub error: QueryError,
    pub transcript: LLMTranscript,
}

/// Splits a response into `(policy candidate, rationale)`.
///
/// The candidate is the body of the first fenced code block, or the whole
/// response when there is none. An unterminated fence runs to the end.
pub fn extract_policy_text(response: &str) -> (String, String) {
    let Some(open) = response.find("```") else {
        return (response.trim().to_string(), String::new());
    };
    let after = &response[open + 3..];
    // skip an info string such as "json"
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
    let body = &after[body_start..];
    let (block, rest) = match body.find("```") {
        Some(close) => (&body[..close], &body[close + 3..]),
        None => (body, ""),
    };
    let mut rationale = response[..open].trim().to_string();
    let tail = rest.trim();
    if !tail.is_empty() {
        if !rationale.is_empty() {
            rationale.push('\n');
        }
        rationale.push_str(tail);
    }
    (block.trim().to_string(), rationale)
}

pub fn repair_message(errors: &PolicyErrors, schema: &str, n_required: usize) -> String {
    let mut out = String::from("Your previous answer could not be used. Problems found:\n");
    out.push_str(&errors.render());
    let _ = write!(
        out,
        "\nReply with a corrected policy of exactly {n_required} operations as JSON matching this schema:\n{schema}\n"
    );
    out
}

/// Asks the provider for a policy, re-prompting with the parse errors up to
/// `max_repairs` times. Provider calls per query are at most `1 + max_repairs`.
pub fn query_policy(
    provider: &mut dyn Provider,
    prompt: &PromptBundle,
    catalog: &Catalog,
    n_required: usize,
    max_repairs: u32,
) -> Result<(Policy, LLMTranscript), QueryFailure> {
    let started = Instant::now();
    let mut messages = vec![
        ChatMessage::system(&prompt.system_text),
        ChatMessage::user(&prompt.user_text),
    ];
    let mut transcript = LLMTranscript {
        prompt: prompt.clone(),
        raw_responses: Vec::new(),
        repair_prompts: Vec::new(),
        parse_outcome: ParseOutcome::Errors(Vec::new()),
        rationale_text: String::new(),
        repair_count: 0,
        latency_s: 0.0,
        cost_estimate: 0.0,
    };
    loop {
        let response = provider.complete(&messages);
        transcript.latency_s = started.elapsed().as_secs_f64();
        let response = match response {
            Ok(r) => r,
            Err(e) => {
                transcript.parse_outcome = ParseOutcome::ProviderError(e.code());
                return Err(QueryFailure { error: e.into(), transcript });
            }
        };
        transcript.cost_estimate += provider.cost_per_call();
        transcript.raw_responses.push(response.clone());
        let (candidate, rationale) = extract_policy_text(&response);
        transcript.rationale_text = rationale;
        match parse_policy(&candidate, catalog, n_required) {
            Ok(policy) => {
                transcript.parse_outcome = ParseOutcome::Policy(canonical_text(&policy));
                return Ok((policy, transcript));
            }
            Err(errors) => {
                transcript.parse_outcome = ParseOutcome::Errors(errors.0.iter().map(|e| e.to_string()).collect());
                if transcript.repair_count >= max_repairs {
                    return Err(QueryFailure {
                        error: QueryError::RepairsExhausted(errors),
                        transcript,
                    });
                }
                let repair = repair_message(&errors, &prompt.schema_text, n_required);
                messages.push(ChatMessage::assistant(response));
                messages.push(ChatMessage::user(&repair));
                transcript.repair_prompts.push(repair);
                transcript.repair_count += 1;
            }
        }
    }
}
