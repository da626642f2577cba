use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A malformed input row.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A numerical routine failed to reach its target.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A price outside the no-arbitrage band passed to the implied-vol inversion.
    #[error("price {price} outside no-arbitrage band [{lower}, {upper}]")]
    Inversion { price: f64, lower: f64, upper: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True when the root cause is a numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical(_) | Error::Inversion { .. } => true,
            Error::Context { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
