use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("mask generation failed: {0}")]
    Generation(String),

    #[error("rectangle does not fit: {0}")]
    Placement(String),

    #[error("non-finite value{}: {what}", fmt_iteration(.iteration))]
    Numeric {
        iteration: Option<usize>,
        what: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("matrix is not positive semi-definite (eigenvalue {0:e})")]
    NotPsd(f64),
}

fn fmt_iteration(iteration: &Option<usize>) -> String {
    match iteration {
        Some(i) => alloc::format!(" at iteration {i}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn shape(expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::Shape {
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    pub(crate) fn numeric(what: impl Into<String>) -> Self {
        Error::Numeric {
            iteration: None,
            what: what.into(),
        }
    }

    /// Attaches an iteration index to numeric errors; other variants pass through.
    pub fn at_iteration(self, iteration: usize) -> Self {
        match self {
            Error::Numeric { what, .. } => Error::Numeric {
                iteration: Some(iteration),
                what,
            },
            other => other,
        }
    }
}
