//! Spectral calculus on the periodic torus `[0, 2pi)^2`.

mod grid;
mod modal;
pub mod snapshot;
mod spectral;

pub use grid::{TorusGrid, DIM};
pub use modal::ModalBundle;
pub use spectral::{poisson_solve, MeanHandling, SpectralField, SpectralVectorField, DIV_FREE_TOL};

/// Taylor-Green vortex `(sin x1 cos x2, -cos x1 sin x2)`, a steady Euler field
/// whose Navier-Stokes evolution is pure decay at rate `2 nu`.
pub fn taylor_green(grid: &TorusGrid) -> SpectralVectorField {
    let psi = SpectralField::from_fn(grid, |x, y| x.sin() * y.sin());
    SpectralVectorField::from_stream_function(&psi)
}
