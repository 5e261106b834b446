use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular geometry: {0}")]
    SingularGeometry(String),

    #[error("singular Fisher information (condition number {cond:.3e})")]
    SingularFim { cond: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("association budget exceeded: {0}")]
    AssociationBudget(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Stable machine-readable tag, used by the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::SingularGeometry(_) => "singular_geometry",
            Error::SingularFim { .. } => "singular_fim",
            Error::DegenerateInput(_) => "degenerate_input",
            Error::AssociationBudget(_) => "association_budget",
            Error::Precondition(_) => "precondition",
            Error::Io { .. } => "io",
            Error::Parse(_) => "parse",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
