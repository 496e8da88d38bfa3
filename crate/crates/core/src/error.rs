use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("schema error: required column `{column}` is missing")]
    Schema { column: String },

    #[error("parse error at row {row}: cannot parse `{value}` as a number")]
    Parse { row: usize, value: String },

    #[error("format error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Format { line: Option<usize>, msg: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("gradient check failed: {param} has relative error {rel_err:e} > {tolerance:e}")]
    GradcheckFailed {
        param: String,
        rel_err: f64,
        tolerance: f64,
    },

    #[error("internal consistency error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Format {
            line,
            msg: msg.into(),
        }
    }

    /// Process exit code for the command-line tool.
    ///
    /// 1: validation or argument problems, 2: data or file format problems,
    /// 3: numerical divergence or a failed self-check.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Shape { .. }
            | Error::Validation(_)
            | Error::Argument(_)
            | Error::Config(_)
            | Error::Lookup(_)
            | Error::Internal(_) => 1,
            Error::Schema { .. } | Error::Parse { .. } | Error::Format { .. } | Error::Io { .. } => 2,
            Error::Divergence { .. } | Error::GradcheckFailed { .. } => 3,
        }
    }
}
