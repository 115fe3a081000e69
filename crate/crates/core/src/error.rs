use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("graph has no usable nodes")]
    EmptyGraph,

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("training diverged at cycle {cycle}: {message}")]
    Divergence { cycle: usize, message: String },

    #[error("{what} of {size} exceeds the configured limit {limit}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },
}

impl Error {
    pub(crate) fn shape(expected: impl core::fmt::Display, found: impl core::fmt::Display) -> Self {
        use alloc::string::ToString;
        Error::Shape {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
