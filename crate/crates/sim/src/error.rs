use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}:{line}:{column}: {message}{}", field.as_ref().map(|f| format!(" (field `{f}`)")).unwrap_or_default())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        field: Option<String>,
        message: String,
    },
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Internal(String),
}

impl HarnessError {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        HarnessError::Validation { field: field.into(), reason: reason.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Parse { .. } | HarnessError::Validation { .. } => 2,
            HarnessError::Io { .. } | HarnessError::Internal(_) => 4,
        }
    }

    /// Last path segment of the offending field, if any.
    pub fn field_name(&self) -> Option<&str> {
        match self {
            HarnessError::Validation { field, .. } => Some(field.rsplit('.').next().unwrap_or(field)),
            HarnessError::Parse { field, .. } => field.as_deref(),
            _ => None,
        }
    }
}
