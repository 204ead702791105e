use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid: {0}")]
    Grid(String),
    #[error("field was built on a different grid")]
    GridMismatch,
    #[error("boundary trace: {0}")]
    Boundary(String),
    #[error("gradient undefined: {0} node(s) with J <= 0")]
    DegenerateJacobian(usize),
    #[error("transform plan: {0}")]
    Plan(String),
    #[error("support leaks beyond half the transform box (mass {0:.3e} outside)")]
    SupportLeakage(f64),
    #[error("beltrami iteration did not converge in {iters} steps (last update {update:.3e})")]
    BeltramiDiverged { iters: usize, update: f64 },
    #[error("k_inf = {0} is not < 1; no contraction")]
    InvalidDilatation(f64),
    #[error("radial equation: {0}")]
    Radial(String),
    #[error("test function: {0}")]
    TestFunction(String),
    #[error("diagnostics: {0}")]
    Diagnostics(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
