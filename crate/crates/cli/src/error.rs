use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("config: {0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] aoheom_core::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl AppError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        AppError::Io { context: context.into(), source }
    }

    /// Process exit status: 2 for bad input, 3 for numerical failure, 1
    /// for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config { .. } | AppError::Validation(_) => 2,
            AppError::Core(e) if e.is_validation() => 2,
            AppError::Core(aoheom_core::Error::Io(_) | aoheom_core::Error::Checkpoint(_)) => 1,
            AppError::Core(_) => 3,
            AppError::Io { .. } => 1,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
