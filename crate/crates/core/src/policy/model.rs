use std::collections::BTreeMap;

use super::catalog::{AugKind, Catalog};
use super::error::{ErrorCode, PolicyError, PolicyErrors};

/// Renders a real with exactly six fractional digits. Negative zero renders
/// as `0.000000`.
pub fn fmt6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

/// One parameterized transform of a policy.
///
/// Equality is taken on the canonical six-digit grid: two ops are equal iff
/// they serialize to the same text.
#[derive(Debug, Clone)]
pub struct AugOpInstance {
    pub kind: AugKind,
    pub params: BTreeMap<String, f64>,
    pub apply_probability: f64,
}

impl AugOpInstance {
    pub fn new(kind: AugKind) -> Self {
        AugOpInstance {
            kind,
            params: BTreeMap::new(),
            apply_probability: 1.0,
        }
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn with_probability(mut self, p: f64) -> Self {
        self.apply_probability = p;
        self
    }

    /// The op with every parameter at its identity value (or default when the
    /// parameter has none).
    pub fn identity(kind: AugKind, catalog: &Catalog) -> Self {
        let mut op = AugOpInstance::new(kind);
        for spec in catalog.specs(kind) {
            op.params
                .insert(spec.name.to_string(), spec.identity.unwrap_or(spec.default));
        }
        op
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }

    fn canonical_key(&self) -> (AugKind, String, Vec<(&str, String)>) {
        (
            self.kind,
            fmt6(self.apply_probability),
            self.params
                .iter()
                .map(|(k, v)| (k.as_str(), fmt6(*v)))
                .collect(),
        )
    }
}

impl PartialEq for AugOpInstance {
    fn eq(&self, other: &Self) -> bool {
        self.canonical_key() == other.canonical_key()
    }
}

/// An ordered list of transforms, applied left to right.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub ops: Vec<AugOpInstance>,
    pub n_declared: usize,
}

impl Policy {
    pub fn new(ops: Vec<AugOpInstance>) -> Self {
        let n_declared = ops.len();
        Policy { ops, n_declared }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn kinds(&self) -> impl Iterator<Item = AugKind> + '_ {
        self.ops.iter().map(|o| o.kind)
    }
}

/// Outcome of [`validate_policy`]. Violations are data for the repair loop,
/// not failures.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<PolicyError>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<(), PolicyErrors> {
        if self.violations.is_empty() {
            Ok(())
        } else {
            Err(PolicyErrors(self.violations))
        }
    }
}

fn range_text(lower: f64, upper: f64) -> String {
    format!("[{lower},{upper}]")
}

/// Checks one op against the catalog. Violations carry `index` as op index.
pub fn validate_op(op: &AugOpInstance, index: usize, catalog: &Catalog) -> Vec<PolicyError> {
    let mut out = Vec::new();
    let kind = op.kind;
    let specs = catalog.specs(kind);
    for spec in specs {
        let field = format!("{kind}.{}", spec.name);
        match op.params.get(spec.name) {
            None => out.push(
                PolicyError::new(
                    ErrorCode::MissingParam,
                    format!("{field} is required"),
                )
                .at_op(index)
                .field(spec.name),
            ),
            Some(&v) if !spec.contains(v) => out.push(
                PolicyError::new(
                    ErrorCode::OutOfRange,
                    format!("{field} out of range {}", range_text(spec.lower, spec.upper)),
                )
                .at_op(index)
                .field(field),
            ),
            Some(&v) if spec.discrete && v.fract() != 0.0 => out.push(
                PolicyError::new(ErrorCode::NotIntegral, format!("{field} must be an integer"))
                    .at_op(index)
                    .field(field),
            ),
            Some(_) => {}
        }
    }
    for name in op.params.keys() {
        if !specs.iter().any(|s| s.name == name) {
            out.push(
                PolicyError::new(
                    ErrorCode::ExtraParam,
                    format!("{kind} has no parameter {name:?}"),
                )
                .at_op(index)
                .field(name.clone()),
            );
        }
    }
    let p = op.apply_probability;
    if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
        out.push(
            PolicyError::new(ErrorCode::OutOfRange, format!("{kind}.p out of range [0,1]"))
                .at_op(index)
                .field(format!("{kind}.p")),
        );
    }
    out
}

/// Validates a policy against the catalog and the required op count.
pub fn validate_policy(policy: &Policy, catalog: &Catalog, n_required: usize) -> ValidationReport {
    let mut violations = Vec::new();
    if policy.ops.len() != n_required {
        violations.push(PolicyError::new(
            ErrorCode::CountMismatch,
            format!("count mismatch: {} ≠ {}", policy.ops.len(), n_required),
        ));
    }
    if policy.n_declared != policy.ops.len() {
        violations.push(PolicyError::new(
            ErrorCode::CountMismatch,
            format!(
                "declared n = {} but {} ops listed",
                policy.n_declared,
                policy.ops.len()
            ),
        ));
    }
    for (i, op) in policy.ops.iter().enumerate() {
        violations.extend(validate_op(op, i, catalog));
    }
    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotate(d: f64) -> AugOpInstance {
        AugOpInstance::new(AugKind::Rotate).with_param("degrees", d)
    }

    #[test]
    fn two_valid_ops_pass() {
        let p = Policy::new(vec![
            rotate(15.0),
            AugOpInstance::new(AugKind::HorizontalFlip).with_probability(0.5),
        ]);
        assert!(validate_policy(&p, Catalog::standard(), 2).is_ok());
    }

    #[test]
    fn count_mismatch_is_reported() {
        let p = Policy::new(vec![rotate(1.0), rotate(2.0), rotate(3.0)]);
        let r = validate_policy(&p, Catalog::standard(), 2);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].code, ErrorCode::CountMismatch);
        assert_eq!(r.violations[0].message, "count mismatch: 3 ≠ 2");
    }

    #[test]
    fn out_of_range_names_field_and_range() {
        let p = Policy::new(vec![rotate(400.0)]);
        let r = validate_policy(&p, Catalog::standard(), 1);
        assert_eq!(r.violations.len(), 1);
        let v = &r.violations[0];
        assert_eq!(v.code, ErrorCode::OutOfRange);
        assert_eq!(v.op_index, Some(0));
        assert_eq!(v.message, "rotate.degrees out of range [0,180]");
    }

    #[test]
    fn missing_extra_and_probability() {
        let op = AugOpInstance::new(AugKind::Translate)
            .with_param("tx", 0.1)
            .with_param("tz", 0.1)
            .with_probability(1.5);
        let p = Policy::new(vec![op]);
        let codes: Vec<_> = validate_policy(&p, Catalog::standard(), 1)
            .violations
            .iter()
            .map(|v| v.code)
            .collect();
        assert_eq!(
            codes,
            vec![ErrorCode::MissingParam, ErrorCode::ExtraParam, ErrorCode::OutOfRange]
        );
    }

    #[test]
    fn discrete_params_must_be_integral() {
        let op = AugOpInstance::new(AugKind::Posterize).with_param("bits", 4.5);
        let r = validate_policy(&Policy::new(vec![op]), Catalog::standard(), 1);
        assert_eq!(r.violations[0].code, ErrorCode::NotIntegral);
    }

    #[test]
    fn nan_is_out_of_range() {
        let r = validate_policy(&Policy::new(vec![rotate(f64::NAN)]), Catalog::standard(), 1);
        assert_eq!(r.violations[0].code, ErrorCode::OutOfRange);
    }

    #[test]
    fn equality_is_on_the_six_digit_grid() {
        let a = AugOpInstance::new(AugKind::Brightness).with_param("factor", 0.1 + 0.2);
        let b = AugOpInstance::new(AugKind::Brightness).with_param("factor", 0.3);
        assert_eq!(a, b);
        let c = AugOpInstance::new(AugKind::Brightness).with_param("factor", 0.300001);
        assert_ne!(a, c);
        assert_eq!(fmt6(-0.0), "0.000000");
        assert_eq!(fmt6(-1e-9), "0.000000");
    }
}
