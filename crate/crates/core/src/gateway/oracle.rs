//! Rule-based stand-in for a live model: strengthens the last policy when
//! accuracy held or rose, weakens it and swaps its first op when it fell.

use serde::{Deserialize, Serialize};

use super::prompt::HISTORY_HEADER;
use super::provider::{ChatMessage, Provider, ProviderError};
use crate::policy::{
    canonical_text, magnitude_to_params, parse_policy, AugKind, AugOpInstance, Catalog, Policy,
};

/// Magnitude given to kinds the oracle introduces.
pub const SWAP_MAGNITUDE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleRules {
    /// Params move `harden_factor - 1` of the way to their strong end.
    pub harden_factor: f64,
    /// Params move `1 - soften_factor` of the way back to identity.
    pub soften_factor: f64,
    pub swap_on_decline: bool,
}

impl Default for OracleRules {
    fn default() -> Self {
        OracleRules {
            harden_factor: 1.10,
            soften_factor: 0.80,
            swap_on_decline: true,
        }
    }
}

impl OracleRules {
    pub fn validate(&self) -> Result<(), String> {
        if !(1.0..=2.0).contains(&self.harden_factor) || !(0.0..=1.0).contains(&self.soften_factor) {
            return Err("oracle factors must satisfy 1 <= harden <= 2 and 0 <= soften <= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedHistory {
    pub n_required: usize,
    /// `(accuracy, policy)` oldest first; empty for an initial prompt.
    pub entries: Vec<(f64, Policy)>,
}

pub fn seed_policy(catalog: &Catalog, n: usize) -> Policy {
    let mut ops = vec![
        AugOpInstance::new(AugKind::Rotate).with_param("degrees", 15.0),
        AugOpInstance::new(AugKind::GaussianBlur).with_param("sigma", 1.0),
        AugOpInstance::new(AugKind::Brightness).with_param("factor", 0.2),
    ];
    ops.truncate(n);
    while ops.len() < n {
        let used: Vec<AugKind> = ops.iter().map(|o| o.kind).collect();
        let kind = catalog.kinds().find(|k| !used.contains(k)).expect("catalog larger than n");
        ops.push(magnitude_to_params(catalog, kind, SWAP_MAGNITUDE).unwrap());
    }
    Policy::new(ops)
}

/// Moves every param with a strong end a fraction `t` toward it.
pub fn harden(policy: &Policy, catalog: &Catalog, t: f64) -> Policy {
    reshape(policy, catalog, |spec, v| spec.strong_value().map(|s| v + t * (s - v)))
}

/// Moves every param a fraction `t` toward its identity (or weak end).
pub fn soften(policy: &Policy, catalog: &Catalog, t: f64) -> Policy {
    reshape(policy, catalog, |spec, v| {
        spec.identity.or(spec.weak_value()).map(|target| v + t * (target - v))
    })
}

fn reshape(
    policy: &Policy,
    catalog: &Catalog,
    f: impl Fn(&crate::policy::ParamSpec, f64) -> Option<f64>,
) -> Policy {
    let mut out = policy.clone();
    for op in &mut out.ops {
        for spec in catalog.specs(op.kind) {
            if let Some(v) = op.params.get_mut(spec.name) {
                if let Some(next) = f(spec, *v) {
                    *v = spec.clamp(next);
                }
            }
        }
    }
    out
}

/// First kind after `kind` in catalog order (wrapping) that the policy does not use.
pub fn next_unused_kind(policy: &Policy, catalog: &Catalog, kind: AugKind) -> Option<AugKind> {
    let kinds: Vec<AugKind> = catalog.kinds().collect();
    let start = kinds.iter().position(|k| *k == kind)?;
    (1..kinds.len())
        .map(|i| kinds[(start + i) % kinds.len()])
        .find(|k| !policy.ops.iter().any(|o| o.kind == *k))
}

/// Recovers `n` and the policy history from a prompt built by this crate.
pub fn parse_prompt(user_text: &str, catalog: &Catalog) -> Result<ParsedHistory, String> {
    let n_required = user_text
        .split("exactly ")
        .skip(1)
        .find_map(|rest| rest.strip_suffix_at(" augmentation operations"))
        .ok_or("prompt does not state the number of operations")?;
    let Some(at) = user_text.find(HISTORY_HEADER) else {
        return Ok(ParsedHistory { n_required, entries: Vec::new() });
    };
    let mut entries = Vec::new();
    let mut pending: Option<f64> = None;
    for line in user_text[at + HISTORY_HEADER.len()..].lines() {
        if let Some(rest) = line.strip_prefix("Iteration ") {
            let acc = rest
                .split("validation accuracy ")
                .nth(1)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| format!("unparseable history line: {line}"))?;
            pending = Some(acc);
        } else if let Some(json) = line.strip_prefix("Policy: ") {
            let acc = pending.take().ok_or("policy line without an accuracy line")?;
            let n = serde_json::from_str::<serde_json::Value>(json)
                .ok()
                .and_then(|v| v.get("n").and_then(|n| n.as_u64()))
                .ok_or_else(|| format!("unparseable history policy: {json}"))? as usize;
            let policy = parse_policy(json, catalog, n).map_err(|e| format!("history policy invalid: {e}"))?;
            entries.push((acc, policy));
        } else if line.trim().is_empty() && !entries.is_empty() {
            break;
        }
    }
    if entries.is_empty() {
        return Err("history section has no entries".into());
    }
    Ok(ParsedHistory { n_required, entries })
}

trait StripNumber {
    fn strip_suffix_at(&self, suffix: &str) -> Option<usize>;
}

impl StripNumber for str {
    /// Parses a leading integer immediately followed by `suffix`.
    fn strip_suffix_at(&self, suffix: &str) -> Option<usize> {
        let digits = self.len() - self.trim_start_matches(|c: char| c.is_ascii_digit()).len();
        if digits == 0 || !self[digits..].starts_with(suffix) {
            return None;
        }
        self[..digits].parse().ok()
    }
}

/// Fits a policy to `n` ops: truncates, or pads with unused kinds.
fn fit(mut policy: Policy, catalog: &Catalog, n: usize) -> Policy {
    policy.ops.truncate(n);
    while policy.ops.len() < n {
        let kind = catalog
            .kinds()
            .find(|k| !policy.ops.iter().any(|o| o.kind == *k))
            .expect("catalog larger than n");
        policy.ops.push(magnitude_to_params(catalog, kind, SWAP_MAGNITUDE).unwrap());
    }
    policy.n_declared = n;
    policy
}

pub fn oracle_response(history: &ParsedHistory, rules: &OracleRules, catalog: &Catalog) -> (Policy, &'static str) {
    let n = history.n_required;
    let Some((last_acc, last)) = history.entries.last() else {
        return (seed_policy(catalog, n), "Starting from a mild geometric and photometric policy.");
    };
    let delta = match history.entries.len() {
        1 => 0.0,
        k => last_acc - history.entries[k - 2].0,
    };
    let last = fit(last.clone(), catalog, n);
    if delta >= 0.0 {
        return (
            harden(&last, catalog, rules.harden_factor - 1.0),
            "Accuracy did not drop, so every operation is strengthened.",
        );
    }
    let mut next = soften(&last, catalog, 1.0 - rules.soften_factor);
    if rules.swap_on_decline {
        if let Some(kind) = next_unused_kind(&next, catalog, next.ops[0].kind) {
            next.ops[0] = magnitude_to_params(catalog, kind, SWAP_MAGNITUDE).unwrap();
        }
    }
    (next, "Accuracy dropped, so operations are softened and the first one is replaced.")
}

/// Deterministic provider driven by [`oracle_response`].
#[derive(Debug, Clone)]
pub struct MockOracleProvider {
    rules: OracleRules,
    catalog: &'static Catalog,
}

impl MockOracleProvider {
    pub fn new(rules: OracleRules) -> Self {
        MockOracleProvider {
            rules,
            catalog: Catalog::standard(),
        }
    }
}

impl Default for MockOracleProvider {
    fn default() -> Self {
        MockOracleProvider::new(OracleRules::default())
    }
}

impl Provider for MockOracleProvider {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, ProviderError> {
        let prompt = messages
            .iter()
            .find(|m| m.role == "user")
            .ok_or_else(|| ProviderError::BadResponse("no user message".into()))?;
        let history = parse_prompt(&prompt.content, self.catalog).map_err(ProviderError::BadResponse)?;
        let (policy, why) = oracle_response(&history, &self.rules, self.catalog);
        Ok(format!("{why}\n```json\n{}\n```\n", canonical_text(&policy)))
    }

    fn name(&self) -> String {
        "mock-oracle".into()
    }
}
