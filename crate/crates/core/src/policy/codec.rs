//! Canonical policy text and parsing of model-emitted policies.
//!
//! Canonical form: `{"n":<int>,"ops":[{"kind":..,"p":..,"params":{..}}]}`
//! with keys sorted, no whitespace, and every real rendered with six
//! fractional digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::{Map, Value};

use super::catalog::{AugKind, Catalog};
use super::error::{ErrorCode, PolicyError, PolicyErrors};
use super::model::{fmt6, validate_policy, AugOpInstance, Policy};

/// The policy schema as embedded in prompts and documentation.
pub const POLICY_SCHEMA: &str =
    r#"{"n": int, "ops": [{"kind": str, "params": {str: number}, "p": number}]}"#;

/// Serializes a valid policy to its canonical text. Invalid policies are
/// refused with their violation list.
pub fn canonical_serialize(policy: &Policy, catalog: &Catalog) -> Result<String, PolicyErrors> {
    validate_policy(policy, catalog, policy.n_declared).into_result()?;
    Ok(canonical_text(policy))
}

/// Canonical rendering without validation. Used where the policy is already
/// known to be valid.
pub(crate) fn canonical_text(policy: &Policy) -> String {
    let mut s = String::with_capacity(64 * policy.ops.len() + 16);
    write!(s, "{{\"n\":{},\"ops\":[", policy.n_declared).unwrap();
    for (i, op) in policy.ops.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(
            s,
            "{{\"kind\":\"{}\",\"p\":{},\"params\":{{",
            op.kind.name(),
            fmt6(op.apply_probability)
        )
        .unwrap();
        for (j, (name, v)) in op.params.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            // Param names come from the catalog: plain identifiers.
            write!(s, "\"{}\":{}", name, fmt6(*v)).unwrap();
        }
        s.push_str("}}");
    }
    s.push_str("]}");
    s
}

fn schema_err(msg: impl Into<String>) -> PolicyError {
    PolicyError::new(ErrorCode::Schema, msg)
}

/// Parses policy text, validating it against the catalog and the required op
/// count. All problems found are returned together.
pub fn parse_policy(text: &str, catalog: &Catalog, n_required: usize) -> Result<Policy, PolicyErrors> {
    let value: Value = match serde_json::from_str(text.trim()) {
        Ok(v) => v,
        Err(e) => {
            let mut err = PolicyError::new(ErrorCode::MalformedSyntax, e.to_string());
            err.position = Some((e.line(), e.column()));
            return Err(PolicyErrors(vec![err]));
        }
    };
    let Value::Object(root) = value else {
        return Err(PolicyErrors(vec![schema_err("policy must be a JSON object")]));
    };

    let mut errors = Vec::new();
    let n_declared = match root.get("n") {
        Some(Value::Number(n)) => match n.as_u64() {
            Some(n) if n >= 1 => Some(n as usize),
            _ => {
                errors.push(schema_err("\"n\" must be a positive integer").field("n"));
                None
            }
        },
        Some(_) => {
            errors.push(schema_err("\"n\" must be a positive integer").field("n"));
            None
        }
        None => {
            errors.push(schema_err("missing key \"n\"").field("n"));
            None
        }
    };
    let raw_ops = match root.get("ops") {
        Some(Value::Array(ops)) => ops.as_slice(),
        Some(_) => {
            errors.push(schema_err("\"ops\" must be an array").field("ops"));
            &[]
        }
        None => {
            errors.push(schema_err("missing key \"ops\"").field("ops"));
            &[]
        }
    };
    for key in root.keys() {
        if key != "n" && key != "ops" {
            errors.push(schema_err(format!("unexpected top-level key {key:?}")).field(key.clone()));
        }
    }

    let mut ops = Vec::with_capacity(raw_ops.len());
    let mut complete = true;
    for (i, raw) in raw_ops.iter().enumerate() {
        match parse_op(raw, i) {
            Ok(op) => ops.push(op),
            Err(mut errs) => {
                complete = false;
                errors.append(&mut errs);
            }
        }
    }

    if let Some(n) = n_declared {
        if complete {
            let policy = Policy { ops, n_declared: n };
            errors.extend(validate_policy(&policy, catalog, n_required).violations);
            if errors.is_empty() {
                return Ok(policy);
            }
        } else if raw_ops.len() != n_required {
            errors.push(PolicyError::new(
                ErrorCode::CountMismatch,
                format!("count mismatch: {} ≠ {}", raw_ops.len(), n_required),
            ));
        }
    }
    Err(PolicyErrors(errors))
}

fn parse_op(raw: &Value, index: usize) -> Result<AugOpInstance, Vec<PolicyError>> {
    let Value::Object(obj) = raw else {
        return Err(vec![schema_err("each op must be a JSON object").at_op(index)]);
    };
    let mut errors = Vec::new();
    let kind = match obj.get("kind") {
        Some(Value::String(name)) => match AugKind::from_name(name) {
            Some(k) => Some(k),
            None => {
                errors.push(
                    PolicyError::new(
                        ErrorCode::UnknownKind,
                        format!("{name:?} is not in the operation catalog"),
                    )
                    .at_op(index)
                    .field(name.clone()),
                );
                None
            }
        },
        Some(_) => {
            errors.push(schema_err("\"kind\" must be a string").at_op(index).field("kind"));
            None
        }
        None => {
            errors.push(schema_err("missing key \"kind\"").at_op(index).field("kind"));
            None
        }
    };
    let params = match obj.get("params") {
        Some(Value::Object(map)) => parse_params(map, index, &mut errors),
        None => BTreeMap::new(),
        Some(_) => {
            errors.push(schema_err("\"params\" must be an object").at_op(index).field("params"));
            BTreeMap::new()
        }
    };
    let apply_probability = match obj.get("p") {
        Some(Value::Number(n)) => n.as_f64().unwrap_or(f64::NAN),
        None => 1.0,
        Some(_) => {
            errors.push(schema_err("\"p\" must be a number").at_op(index).field("p"));
            1.0
        }
    };
    for key in obj.keys() {
        if !matches!(key.as_str(), "kind" | "params" | "p") {
            errors.push(schema_err(format!("unexpected key {key:?} in op")).at_op(index).field(key.clone()));
        }
    }
    match kind {
        Some(kind) if errors.is_empty() => Ok(AugOpInstance {
            kind,
            params,
            apply_probability,
        }),
        _ => Err(errors),
    }
}

fn parse_params(
    map: &Map<String, Value>,
    index: usize,
    errors: &mut Vec<PolicyError>,
) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for (name, v) in map {
        match v.as_f64() {
            Some(x) => {
                out.insert(name.clone(), x);
            }
            None => errors.push(
                schema_err(format!("parameter {name:?} must be a number"))
                    .at_op(index)
                    .field(name.clone()),
            ),
        }
    }
    out
}
