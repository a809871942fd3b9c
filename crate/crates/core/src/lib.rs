//! Spectral workbench for the complex Monge-Ampere equation
//! log det(g + hess phi) - log det g = F - lambda phi on flat complex tori
//! T = C^n/(Z+iZ)^n, n in {1, 2}.
//!
//! The crate has five parts:
//!
//! * [`geometry`] - grids, periodic fields, Fourier-multiplier calculus,
//!   quadrature and L^p norms;
//! * [`operator`] - the equation objects: residual, linearization,
//!   normalizations, volume forms and background curvature;
//! * [`continuation`] - the damped Newton solver with amplitude continuation
//!   and preconditioned Krylov linear solves;
//! * [`rhs`] - right-hand-side generators, including the mollified cusp
//!   family that probes the W^{1,p} regularity threshold p > 2n;
//! * [`estimates`] - barrier functions, pointwise inequality checks with
//!   fitted constants, Moser-iteration norm ladders, Sobolev-constant probes
//!   and estimate sweeps.

pub mod continuation;
pub mod error;
pub mod estimates;
pub mod field_io;
pub mod geometry;
pub mod linalg;
pub mod operator;
pub mod rhs;

pub use error::{Error, Result};
