//! Phase macromodels of planar nonlinear oscillators.
//!
//! The crate locates a stable limit cycle, builds its Floquet frame in
//! closed form (tangent and isochron eigenvectors, projection covectors,
//! exponents), cross-checks that frame against direct numerical
//! integration of the variational and adjoint equations, and drives
//! deterministic and stochastic phase-deviation simulations with it.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod csv;
pub mod cycle;
pub mod diliberto;
pub mod error;
pub mod isochron;
pub mod linalg;
pub mod models;
pub mod ode;
pub mod phase;
pub mod stochastic;

pub use cycle::{cycle_point, find_cycle, find_cycle_with, sample_cycle, CycleOptions, LimitCycle};
pub use diliberto::{BasisOptions, DilibertoBasis, FloquetSpectrum};
pub use error::{Error, Result};
pub use linalg::{perp, Mat2, Vec2};
pub use models::{ModelKind, OscillatorModel};
pub use ode::{integrate, integrate_quadrature, Tolerances, Trajectory};
