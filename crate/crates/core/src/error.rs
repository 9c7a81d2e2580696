use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {message}")]
    MeshParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate element {element}: jacobian determinant {det:e}")]
    DegenerateElement { element: usize, det: f64 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unsupported primitive `{0}`")]
    UnsupportedPrimitive(String),

    #[error("loss must be scalar, got {0} entries")]
    NonScalarLoss(usize),

    #[error("line search failed: {0}")]
    LineSearch(String),

    #[error("non-finite objective at iteration {iteration}: f = {value}")]
    NonFinite { iteration: usize, value: f64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::MeshParse { .. } => "mesh_parse",
            Error::InvalidMesh(_) => "invalid_mesh",
            Error::DegenerateElement { .. } => "degenerate_element",
            Error::SingularSystem(_) => "singular_system",
            Error::LinearSolve(_) => "linear_solve",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::UnsupportedPrimitive(_) => "unsupported_primitive",
            Error::NonScalarLoss(_) => "non_scalar_loss",
            Error::LineSearch(_) => "line_search",
            Error::NonFinite { .. } => "non_finite",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Serde(_) => "serde",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
