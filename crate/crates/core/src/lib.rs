//! Stochastic Lagrangian flows for the incompressible Navier-Stokes equation
//! on the flat 2-torus.
//!
//! The crate evolves diffusions `dg = sqrt(2 nu) dW + v(t, g) dt` driven by a
//! Navier-Stokes velocity, evaluates the pressure-constrained action
//! `S = 1/2 E int |D_t g|^2 + E int p(g) (det grad g - 1)`, measures its
//! Gateaux derivatives along shift variations, checks the associated
//! conservation laws and integrates the transport-noise Navier-Stokes SPDE.
//!
//! Modules, bottom-up:
//!
//! * [`fields`]: Fourier transforms, derivatives, Leray projection, Poisson
//!   solves and exact off-grid evaluation.
//! * [`ns`]: integrating-factor RK4 solver with pressure recovery.
//! * [`rng`]: counter-based Brownian increments.
//! * [`flows`]: particle ensembles, flow Jacobians and the branching
//!   estimator of the generalized derivative.
//! * [`action`]: action functional, shift variations and criticality tests.
//! * [`noether`]: material operator, invariance tests and conserved charges.
//! * [`spde`]: Ito and Stratonovich integrators with an exact shift oracle.

pub mod action;
pub mod error;
pub mod fields;
pub mod flows;
pub mod noether;
pub mod ns;
pub mod rng;
pub mod spacetime;
pub mod spde;
pub mod stats;

pub use error::{Error, Result};
