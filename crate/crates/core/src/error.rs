use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("duplicate record for station {station_id} on {date}")]
    DuplicateStation { station_id: String, date: String },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("rank-deficient design matrix ({0}); consider ridge regression")]
    RankDeficient(String),

    #[error("variogram fit did not converge (best residual {best_residual:.6e})")]
    FitFailed {
        best_residual: f64,
        best: Option<crate::geostat::VariogramModel>,
    },

    #[error("missing feature `{0}`")]
    MissingFeature(String),

    #[error("model schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("incompatible grids: {0}")]
    Incompatible(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier for machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::Parse { .. } => "parse",
            Error::Domain(_) => "domain",
            Error::InsufficientData(_) => "insufficient_data",
            Error::DuplicateStation { .. } => "duplicate_station",
            Error::Singular(_) => "singular",
            Error::RankDeficient(_) => "rank_deficient",
            Error::FitFailed { .. } => "fit_failed",
            Error::MissingFeature(_) => "missing_feature",
            Error::SchemaVersion { .. } => "schema_version",
            Error::Config(_) => "config",
            Error::Incompatible(_) => "incompatible",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
