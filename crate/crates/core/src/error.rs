use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent sizes, horizons or parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Poisson problem with a non-zero mean right-hand side.
    #[error("poisson problem not solvable: right-hand side has mean {mean:e}")]
    Solvability { mean: f64 },

    #[error("CFL guard violated at t = {t}: dt * max|v| * n / 2pi = {courant:.4} > {limit}")]
    Cfl { t: f64, courant: f64, limit: f64 },

    #[error("time {t} outside the available range [{start}, {end}]")]
    Range { t: f64, start: f64, end: f64 },

    #[error("perturbation too large: I + eps grad h is near-singular (min |det| = {min_det:e})")]
    NearSingular { min_det: f64 },

    #[error("not a steady Euler field: residual {residual:e} exceeds {tolerance:e}")]
    NotSteadyEuler { residual: f64, tolerance: f64 },

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
