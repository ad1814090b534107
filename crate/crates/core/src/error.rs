use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A problem found while cataloging one scene directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneIssue {
    pub scene_id: String,
    pub problem: String,
}

impl fmt::Display for SceneIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.scene_id, self.problem)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("grids are not aligned: {0}")]
    Misaligned(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("window out of bounds: {0}")]
    OutOfBounds(String),
    #[error("cannot resample: {0}")]
    Resample(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed sidecar {path}: {message}")]
    Sidecar { path: PathBuf, message: String },
    #[error("invalid workspace: {0}")]
    Workspace(String),
    #[error("{} malformed scene(s): {}", .0.len(), join_issues(.0))]
    InvalidScenes(Vec<SceneIssue>),
    #[error("stack has no `{0}` channel")]
    MissingChannel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate mask: {0}")]
    DegenerateMask(String),
    #[error("built-up baseline unavailable: {0}")]
    Baseline(String),
    #[error("profiles have different bins or sides")]
    BinMismatch,
    #[error("metrics: {0}")]
    Metrics(String),
    #[error("split: {0}")]
    Split(String),
    #[error("feature matrix is rank deficient: {0}")]
    RankDeficient(String),
    #[error("unknown scene `{0}`")]
    SceneNotFound(String),
    #[error("predictor `{variant}`: {message}")]
    Predictor { variant: String, message: String },
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("intervention mask covers no built-up pixels")]
    MaskNotBuilt,
    #[error("insufficient donor pixels: found {found}, need {required}")]
    InsufficientDonors { found: usize, required: usize },
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("synthetic world: {0}")]
    Synthetic(String),
    #[error("geotiff: {0}")]
    GeoTiff(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

fn join_issues(issues: &[SceneIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Coarse failure classes, used by the CLI to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Data,
    Invariant,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Invariant(_) => ErrorClass::Invariant,
            _ => ErrorClass::Data,
        }
    }
}
