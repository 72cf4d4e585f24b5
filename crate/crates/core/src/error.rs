use thiserror::Error;

/// Errors raised by model evaluation and the numerical procedures built on it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    /// A parameter violates its type invariant. `field` names the offending
    /// field so front-ends can map it back to a configuration key.
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    /// An operation was called outside its documented domain.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A numerical quantity left its mathematical domain (e.g. a negative
    /// radicand in a region where it must be positive).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: String, iterations: usize },

    /// The bias loop admits only the zero-current equilibrium.
    #[error("bias loop has no nonzero operating point")]
    DegenerateRoot,

    /// An error raised while evaluating one point of a larger procedure.
    #[error("{context}: {source}")]
    At {
        context: String,
        source: Box<ModelError>,
    },
}

impl ModelError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ModelError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Prefix the field path of an [`ModelError::Invalid`] error, leaving
    /// other variants untouched.
    pub fn within(self, prefix: &str) -> Self {
        match self {
            ModelError::Invalid { field, reason } => ModelError::Invalid {
                field: format!("{prefix}.{field}"),
                reason,
            },
            other => other,
        }
    }

    pub fn at(self, context: impl Into<String>) -> Self {
        ModelError::At {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
