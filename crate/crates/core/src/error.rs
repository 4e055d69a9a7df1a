use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid obstacle shape: {0}")]
    InvalidShape(String),

    #[error("obstacle touches the cell boundary (voxel layer of Y contains solid)")]
    ObstacleTouchesBoundary,

    #[error("fluid voxels are not face-connected under periodic wrap ({components} components)")]
    DisconnectedFluid { components: usize },

    #[error("{axis} / a_eps = {ratio} is not a positive integer")]
    NonIntegerTiling { axis: &'static str, ratio: f64 },

    #[error("invalid thin domain: {0}")]
    InvalidDomain(String),

    #[error("cell problem requires at least one solid voxel")]
    EmptyObstacle,

    #[error("{stage} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        stage: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("cell solutions were computed on different masks or viscosities")]
    MaskMismatch,

    #[error("matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    SpdViolation { min_eigenvalue: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("grid has {unknowns} unknowns, above the cap of {cap}")]
    GridTooLarge { unknowns: usize, cap: usize },

    #[error("runs are not comparable: {0}")]
    InconsistentRuns(String),

    #[error("point lies on a cell boundary (coordinate {coordinate})")]
    OnCellBoundary { coordinate: f64 },

    #[error("field grid is not aligned with the microcell lattice: {0}")]
    MisalignedGrid(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid value for `{key}`: {message}")]
    Validation { key: String, message: String },

    /// A computed property check failed.
    #[error("check `{check}` failed: {message}")]
    CheckFailed { check: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation { .. } | Error::InvalidShape(_) => 2,
            Error::NonIntegerTiling { .. } | Error::InvalidDomain(_) => 2,
            Error::ObstacleTouchesBoundary | Error::DisconnectedFluid { .. } | Error::EmptyObstacle => 2,
            Error::GridTooLarge { .. } => 2,
            Error::NotConverged { .. } => 3,
            Error::Io(_) => 1,
            _ => 4,
        }
    }
}
