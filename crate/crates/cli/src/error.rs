use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Core(#[from] msm_core::Error),

    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Internal(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn read(path: &Path, source: std::io::Error) -> Self {
        CliError::Read {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn write(path: &Path, source: std::io::Error) -> Self {
        CliError::Write {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for bad usage or input, 1 for failures inside a run.
    pub fn exit_code(&self) -> u8 {
        use msm_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Input(_) | CliError::Read { .. } => 2,
            CliError::Write { .. } | CliError::Internal(_) => 1,
            CliError::Core(e) => match e {
                E::Inconsistent(_)
                | E::NodeSampling { .. }
                | E::TruncatedSampling { .. }
                | E::NonPositiveLikelihood { .. } => 1,
                _ => 2,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Input(_) | CliError::Read { .. } => "input",
            CliError::Core(_) if self.exit_code() == 2 => "input",
            CliError::Core(_) | CliError::Write { .. } | CliError::Internal(_) => "internal",
        }
    }

    /// One-line JSON report for stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Report<'a> {
            error: &'a str,
            message: String,
            exit_code: u8,
        }
        serde_json::to_string(&Report {
            error: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
        })
        .unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", self.kind()))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(format!("malformed CSV: {e}"))
    }
}
