//! Line-numbered diagnostics shared by the model-file parser and the data
//! loaders. Errors abort compilation, warnings do not.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

/// What went wrong, as a machine-checkable class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    /// Probability outside \[0,1\], non-positive period, or similar domain violation.
    OutOfRange,
    /// Unknown section, compartment, or key name.
    UnknownKey,
    /// The same field was set twice in one file.
    DuplicateKey,
    /// Statement does not match the grammar.
    MalformedStatement,
    /// Duplicate individual id in a population file (warning).
    DuplicateId,
    /// Duplicate contact row (warning).
    DuplicateContact,
    /// Contact timestep beyond the last one that can cause an infection (warning).
    LateTimestep,
}

/// One parser or loader finding, anchored to a 1-based input line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub kind: DiagnosticKind,
    pub line: usize,
    pub message: String,
    /// The token the message is about, when one can be singled out.
    pub token: Option<String>,
}

impl Diagnostic {
    pub fn error(kind: DiagnosticKind, line: usize, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            kind,
            line,
            message: message.into(),
            token: None,
        }
    }

    pub fn warning(kind: DiagnosticKind, line: usize, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            kind,
            line,
            message: message.into(),
            token: None,
        }
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}: line {}: {}", tag, self.line, self.message)?;
        if let Some(token) = &self.token {
            write!(f, " ('{token}')")?;
        }
        Ok(())
    }
}

/// True if any diagnostic in the slice is an error.
pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}
