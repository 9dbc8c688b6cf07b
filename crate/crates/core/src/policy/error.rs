use std::fmt;

/// Machine-readable category of a policy problem. The `Display` form is the
/// code shown to the model in repair prompts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    MalformedSyntax,
    Schema,
    UnknownKind,
    MissingParam,
    ExtraParam,
    OutOfRange,
    NotIntegral,
    CountMismatch,
}

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::MalformedSyntax => "MALFORMED_SYNTAX",
            ErrorCode::Schema => "SCHEMA",
            ErrorCode::UnknownKind => "UNKNOWN_KIND",
            ErrorCode::MissingParam => "MISSING_PARAM",
            ErrorCode::ExtraParam => "EXTRA_PARAM",
            ErrorCode::OutOfRange => "OUT_OF_RANGE",
            ErrorCode::NotIntegral => "NOT_INTEGRAL",
            ErrorCode::CountMismatch => "COUNT_MISMATCH",
        }
    }

    pub fn from_str_code(s: &str) -> Option<ErrorCode> {
        use ErrorCode::*;
        [
            MalformedSyntax,
            Schema,
            UnknownKind,
            MissingParam,
            ExtraParam,
            OutOfRange,
            NotIntegral,
            CountMismatch,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One problem found while parsing or validating a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyError {
    pub code: ErrorCode,
    pub op_index: Option<usize>,
    /// Offending token or field, e.g. `"AutoContrast"` or `"rotate.degrees"`.
    pub field: Option<String>,
    /// 1-based line and column for syntax errors.
    pub position: Option<(usize, usize)>,
    pub message: String,
}

impl PolicyError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        PolicyError {
            code,
            op_index: None,
            field: None,
            position: None,
            message: message.into(),
        }
    }

    pub fn at_op(mut self, index: usize) -> Self {
        self.op_index = Some(index);
        self
    }

    pub fn field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }
}

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.field, self.code) {
            (Some(name), ErrorCode::UnknownKind) => write!(f, "{}({:?})", self.code, name)?,
            (Some(name), ErrorCode::MissingParam | ErrorCode::ExtraParam) => match self.op_index {
                Some(i) => write!(f, "{}(op {}, {:?})", self.code, i, name)?,
                None => write!(f, "{}({:?})", self.code, name)?,
            },
            _ => write!(f, "{}", self.code)?,
        }
        if let Some(i) = self.op_index {
            write!(f, " at op {i}")?;
        }
        if let Some((line, col)) = self.position {
            write!(f, " at line {line} column {col}")?;
        }
        write!(f, ": {}", self.message)
    }
}

/// A non-empty list of policy problems.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}", render_list(.0))]
pub struct PolicyErrors(pub Vec<PolicyError>);

impl PolicyErrors {
    pub fn codes(&self) -> Vec<ErrorCode> {
        self.0.iter().map(|e| e.code).collect()
    }

    pub fn has(&self, code: ErrorCode) -> bool {
        self.0.iter().any(|e| e.code == code)
    }

    /// One problem per line, suitable for verbatim inclusion in a prompt.
    pub fn render(&self) -> String {
        render_list(&self.0)
    }
}

fn render_list(errors: &[PolicyError]) -> String {
    errors
        .iter()
        .map(|e| format!("- {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}
