use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("form degree {degree} out of range for operation `{op}` in dimension {dim}")]
    Degree { op: &'static str, degree: usize, dim: usize },

    #[error("grid/form mismatch: {0}")]
    Mismatch(String),

    #[error("empty shell at r = {r} (thickness {thickness}); shrink thickness or grow r")]
    EmptyShell { r: f64, thickness: f64 },

    #[error("iterative solve did not converge: residual {residual:.3e} after {iters} iterations")]
    NonConvergence { iters: usize, residual: f64 },

    #[error("parameter out of range: {0}")]
    InvalidParam(String),

    #[error("flow step rejected: {0}")]
    StepRejected(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
