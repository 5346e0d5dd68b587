use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}{}: {message}", path.display(), line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Format {
        path: PathBuf,
        line: Option<u64>,
        message: String,
    },
    #[error(transparent)]
    Core(#[from] localscore_core::Error),
    #[error(transparent)]
    Sim(#[from] localscore_sim::Error),
    #[error(transparent)]
    Econometrics(#[from] localscore_econometrics::Error),
    #[error("output directory {} already exists", .0.display())]
    OutputExists(PathBuf),
    #[error("{0}")]
    Usage(String),
    #[error("market has {0} validation violation(s)")]
    Invalid(usize),
    #[error("{0} stability violation(s)")]
    Unstable(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: Option<u64>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), line, message: message.into() }
    }

    /// Stable identifier used in the error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Core(_) => "market",
            Error::Sim(_) => "simulation",
            Error::Econometrics(_) => "estimation",
            Error::OutputExists(_) => "output_exists",
            Error::Usage(_) => "usage",
            Error::Invalid(_) => "invalid_market",
            Error::Unstable(_) => "unstable",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut body = serde_json::json!({ "kind": self.kind(), "message": self.to_string() });
        match self {
            Error::Io { path, .. } | Error::OutputExists(path) => {
                body["path"] = path.display().to_string().into();
            }
            Error::Format { path, line, .. } => {
                body["path"] = path.display().to_string().into();
                if let Some(l) = line {
                    body["line"] = (*l).into();
                }
            }
            _ => {}
        }
        serde_json::json!({ "error": body })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
