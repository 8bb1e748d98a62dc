use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, line {line}, field `{field}`: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        field: String,
        message: String,
    },

    #[error("duplicate record for ({symbol}, {date})")]
    DuplicateRecord { symbol: String, date: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("empty calendar: {0}")]
    EmptyCalendar(String),

    #[error("insufficient history: need {required} observations, have {available}")]
    InsufficientHistory { required: usize, available: usize },

    #[error("degenerate risk structure{}", .asset.as_ref().map(|a| format!(" for asset {a}")).unwrap_or_default())]
    DegenerateRiskStructure { asset: Option<String> },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("date misalignment at {0}")]
    DateMisalignment(String),

    #[error("rank-deficient design: column(s) {} collinear with earlier columns", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("stale artifact {path}: {reason}")]
    StaleArtifact { path: PathBuf, reason: String },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for input/config problems, 1 for computation failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::DuplicateRecord { .. }
            | Error::Config(_)
            | Error::Input(_)
            | Error::EmptyCalendar(_)
            | Error::StaleArtifact { .. } => 2,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
