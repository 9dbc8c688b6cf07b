use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::policy::{fmt6, Catalog, POLICY_SCHEMA};

pub const CLAUSE_FREE_EDIT: &str =
    "You are free to remove or add new augmentation techniques, as long as the total number remains the same.";
pub const CLAUSE_TAILOR: &str =
    "Always tailor your augmentation suggestions to the specific properties of the dataset and model described earlier.";
pub const CLAUSE_GLOBAL: &str =
    "Your objective is to find the best augmentation policy overall, not just to improve the last one.";

/// Number of most recent iterations included in a feedback prompt.
pub const HISTORY_WINDOW: usize = 10;

pub(crate) const HISTORY_HEADER: &str = "History of evaluated policies (oldest first):";

const SYSTEM_TEXT: &str = "You are an expert in data augmentation for image classification. \
Answer with one JSON augmentation policy inside a fenced code block. \
Any explanation goes outside the code block.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentContext {
    pub dataset_description: String,
    pub model_description: String,
    pub performance_goal: String,
    pub n_augmentations: usize,
    #[serde(default)]
    pub constraints: Vec<String>,
}

impl ExperimentContext {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_augmentations == 0 {
            return Err("context.n_augmentations must be at least 1".into());
        }
        if self.dataset_description.trim().is_empty() {
            return Err("context.dataset_description must not be empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub schema_text: String,
}

/// One evaluated policy shown back to the model.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackEntry {
    pub index: u64,
    pub policy_canonical: String,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("feedback prompt needs at least one history entry")]
    EmptyHistory,
}

fn context_block(out: &mut String, ctx: &ExperimentContext) {
    let _ = writeln!(out, "Dataset: {}", ctx.dataset_description);
    let _ = writeln!(out, "Model: {}", ctx.model_description);
    let _ = writeln!(out, "Performance goal: {}", ctx.performance_goal);
    let _ = writeln!(
        out,
        "Propose a policy of exactly {} augmentation operations, applied in order to every training image.",
        ctx.n_augmentations
    );
    if !ctx.constraints.is_empty() {
        out.push_str("Constraints:\n");
        for c in &ctx.constraints {
            let _ = writeln!(out, "- {c}");
        }
    }
}

/// Kinds with their parameter ranges, one per line.
pub fn catalog_block(catalog: &Catalog) -> String {
    let mut out = String::from(
        "Available operations (each op also takes \"p\", its apply probability in [0, 1]):\n",
    );
    for kind in catalog.kinds() {
        let specs = catalog.specs(kind);
        if specs.is_empty() {
            let _ = writeln!(out, "- {}: no parameters", kind.name());
            continue;
        }
        let params: Vec<String> = specs
            .iter()
            .map(|s| {
                let ty = if s.discrete { "integer" } else { "number" };
                format!("{} ({ty} in [{}, {}])", s.name, fmt_short(s.lower), fmt_short(s.upper))
            })
            .collect();
        let _ = writeln!(out, "- {}: {}", kind.name(), params.join(", "));
    }
    out
}

fn fmt_short(v: f64) -> String {
    let s = fmt6(v);
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

fn schema_block(out: &mut String) {
    out.push_str("Respond with JSON matching this schema:\n");
    out.push_str(POLICY_SCHEMA);
    out.push('\n');
}

pub fn build_initial_prompt(ctx: &ExperimentContext, catalog: &Catalog) -> PromptBundle {
    let mut user = String::new();
    context_block(&mut user, ctx);
    user.push('\n');
    user.push_str(&catalog_block(catalog));
    user.push('\n');
    schema_block(&mut user);
    user.push('\n');
    user.push_str(CLAUSE_GLOBAL);
    user.push('\n');
    PromptBundle {
        system_text: SYSTEM_TEXT.to_string(),
        user_text: user,
        schema_text: POLICY_SCHEMA.to_string(),
    }
}

/// Accuracy as shown to the model.
pub fn fmt_accuracy(v: f64) -> String {
    format!("{v:.4}")
}

pub fn build_feedback_prompt(
    history: &[FeedbackEntry],
    ctx: &ExperimentContext,
    catalog: &Catalog,
) -> Result<PromptBundle, PromptError> {
    if history.is_empty() {
        return Err(PromptError::EmptyHistory);
    }
    let recent = &history[history.len().saturating_sub(HISTORY_WINDOW)..];
    let mut user = String::new();
    context_block(&mut user, ctx);
    user.push('\n');
    user.push_str(HISTORY_HEADER);
    user.push('\n');
    for e in recent {
        let _ = writeln!(
            user,
            "Iteration {}: validation accuracy {}",
            e.index,
            fmt_accuracy(e.val_accuracy)
        );
        let _ = writeln!(user, "Policy: {}", e.policy_canonical);
    }
    user.push('\n');
    for clause in [CLAUSE_FREE_EDIT, CLAUSE_TAILOR, CLAUSE_GLOBAL] {
        user.push_str(clause);
        user.push('\n');
    }
    user.push('\n');
    user.push_str(&catalog_block(catalog));
    user.push('\n');
    schema_block(&mut user);
    Ok(PromptBundle {
        system_text: SYSTEM_TEXT.to_string(),
        user_text: user,
        schema_text: POLICY_SCHEMA.to_string(),
    })
}
