use std::path::PathBuf;

/// Coarse error class used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Numerical,
    Io,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unsupported dimension: {0}")]
    Dimension(String),
    #[error("non-finite value {value} at node {node}")]
    NonFinite { node: usize, value: f64 },
    #[error("negative input value {value:e} at node {node}")]
    NegativeInput { node: usize, value: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("CFL violation: dt = {dt:e} exceeds limit {limit:e} (max eigenvalue {eigenvalue:e} of A at node {node})")]
    Cfl {
        dt: f64,
        limit: f64,
        eigenvalue: f64,
        node: usize,
    },
    #[error("Picard iteration failed to converge in {} iterations (last relative update {:e})", history.len(), history.last().copied().unwrap_or(f64::NAN))]
    PicardNonConvergence { history: Vec<f64> },
    #[error("linear solver failed: {0}")]
    LinearSolver(String),
    #[error("negativity: min f = {min:e} below -1e-8 * max f = {max:e} at t = {time}")]
    Negativity { min: f64, max: f64, time: f64 },
    #[error("size guard: {0}")]
    SizeGuard(String),
    #[error("trajectory error: {0}")]
    Trajectory(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Grid(_)
            | Error::Param(_)
            | Error::Config(_)
            | Error::Dimension(_)
            | Error::Format(_)
            | Error::NegativeInput { .. }
            | Error::SizeGuard(_) => ErrorCategory::Config,
            Error::Io { .. } => ErrorCategory::Io,
            _ => ErrorCategory::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
