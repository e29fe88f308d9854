use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// `location` is a 1-based line for text formats, a byte offset for binary ones.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("face {face} references vertex {index} but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        vertex_count: usize,
    },

    #[error("mesh has no faces")]
    NoFaces,

    #[error("face {face} is degenerate (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },

    #[error("connectivity mismatch: expected {expected} vertices, found {found}")]
    ConnectivityMismatch { expected: usize, found: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),

    #[error("non-finite objective: {0}")]
    NonFinite(String),

    #[error("degenerate mesh at path time index {time}: {source}")]
    DegeneratePath {
        time: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("combined basis is rank deficient (smallest Gram eigenvalue {min_eigenvalue:e}); near-dependent pose/shape pairs: {pairs:?}")]
    RankDeficient {
        min_eigenvalue: f64,
        pairs: Vec<(usize, usize)>,
    },

    #[error("least-squares solve did not converge (residual {residual:e}, target {target:e})")]
    LeastSquares { residual: f64, target: f64 },

    /// `partial` holds the flat codes computed before the failing step.
    #[error("geodesic shooting failed at step {step}: {source}")]
    Shooting {
        step: usize,
        partial: Vec<Vec<f64>>,
        #[source]
        source: Box<Error>,
    },

    #[error("sequence {sequence}, frame {frame}: {source}")]
    Sequence {
        sequence: usize,
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    /// `velocity` is the drawn initial velocity, for reproducing the failure.
    #[error("generation failed for drawn velocity: {source}")]
    Generation {
        velocity: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("container error: {0}")]
    Container(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl ToString, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.to_string(),
            message: message.into(),
        }
    }
}
