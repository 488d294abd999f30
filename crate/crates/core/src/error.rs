//! One error type for the whole crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// A single dataset violation, tied to the line it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineViolation {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for LineViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// Two tensors whose shapes cannot be combined by the attempted op.
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A single tensor with the wrong rank/extent for an op.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An API precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Bad user-supplied input (text, spans, lengths).
    #[error("input error: {0}")]
    Input(String),

    /// Sequence longer than the encoder's maximum length.
    #[error("length error: {0}")]
    Length(String),

    /// A single schema problem hit while using a loaded schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// Everything wrong with a schema file, reported together.
    #[error("invalid schema ({} violations):\n{}", .0.len(), format_lines(.0))]
    SchemaViolations(Vec<String>),

    /// Everything wrong with a dataset file, reported together.
    #[error("invalid dataset ({} violations):\n{}", .0.len(), format_violations(.0))]
    DataViolations(Vec<LineViolation>),

    #[error("non-finite loss in epoch {epoch}, batch {batch} (pairs {first_pair}..{last_pair})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        first_pair: usize,
        last_pair: usize,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_lines(lines: &[String]) -> String {
    lines
        .iter()
        .map(|l| format!("  - {l}"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn format_violations(violations: &[LineViolation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    /// True for errors caused by missing/unreadable files rather than by
    /// invalid content. The CLI maps these to a distinct exit code.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}
