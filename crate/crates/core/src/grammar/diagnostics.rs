use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DiagnosticKind {
    Parse,
    UndeclaredSymbol,
    NormalizationViolation,
    NonTailRecursion,
    EmptyRhs,
    BadDistribution,
    Duplicate,
    StateSpaceTooLarge,
}

/// One validation or parse problem, located at a 1-based line/column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
    pub line: usize,
    pub column: usize,
}

impl Diagnostic {
    pub fn new(
        kind: DiagnosticKind,
        (line, column): (usize, usize),
        message: impl Into<String>,
    ) -> Self {
        Diagnostic {
            kind,
            message: message.into(),
            line,
            column,
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: {:?}: {}",
            self.line, self.column, self.kind, self.message
        )
    }
}

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("invalid grammar ({} problem(s)); first: {}", .0.len(), .0.first().map(|d| d.to_string()).unwrap_or_default())]
    Invalid(Vec<Diagnostic>),

    #[error("state set has {size} members, above the bound {bound}")]
    SetTooLarge { size: u128, bound: usize },
}

impl GrammarError {
    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            GrammarError::Invalid(d) => d,
            GrammarError::SetTooLarge { .. } => &[],
        }
    }
}
