use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A symmetric factorization failed; `pivot` is the offending diagonal
    /// value at step `index`.
    #[error("ill-conditioned matrix ({context}): pivot {pivot:e} at index {index}")]
    IllConditioned {
        context: String,
        pivot: f64,
        index: usize,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Prefixes ill-conditioning errors with extra context, leaving other
    /// variants untouched.
    pub fn within(self, ctx: impl AsRef<str>) -> Self {
        match self {
            Error::IllConditioned {
                context,
                pivot,
                index,
            } => Error::IllConditioned {
                context: format!("{}: {}", ctx.as_ref(), context),
                pivot,
                index,
            },
            other => other,
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Precondition(_) => 2,
            Error::IllConditioned { .. } => 3,
            Error::InvalidInput(_)
            | Error::Degenerate(_)
            | Error::Data(_)
            | Error::Io(_)
            | Error::Csv(_) => 4,
        }
    }
}
