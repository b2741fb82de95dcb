use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("kernel support {support} does not fit the torus: must be below {limit} (half the extent)")]
    KernelTooWide { support: f64, limit: f64 },
    #[error("time step {dt} violates the stability bound; admissible dt is {admissible}")]
    Stability { dt: f64, admissible: f64 },
    #[error("no convergence after {iterations} iterations (final residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("positivity violated: {0}")]
    Positivity(String),
    #[error("velocity lattice with {nodes} nodes exceeds the dense-operator cap of {cap}")]
    TooLarge { nodes: usize, cap: usize },
    #[error("velocity truncation: boundary nodes carry {fraction:e} of the mass")]
    Truncation { fraction: f64 },
}
