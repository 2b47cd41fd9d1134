//! Numerical laboratory for bistable reaction-diffusion fronts in `N` space
//! dimensions.
//!
//! The crate computes the one-dimensional travelling wave `(U*, c*)` of
//! `u_t = Δu + f(u)`, integrates the radial and polar equations in the lab
//! frame and in the frame moving like `c* t - k ln t` with `k = (N-1)/c*`,
//! tracks level sets, fits the logarithmic delay law
//! `r(t) = c* t - k ln t + s`, and evaluates the sub/super-solution
//! certificates (the decay and growth ODE pairs and the residual of the
//! shifted-wave super-solution) on finite lattices.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angular_solver;
pub mod certificates;
pub mod error;
pub mod front_analysis;
pub mod nonlinearity;
pub mod ode;
pub mod radial_solver;
pub mod tridiag;
pub mod wave_profile;

pub use error::{Error, Result};
pub use nonlinearity::{BistableNonlinearity, GapConstants};
pub use wave_profile::WaveProfile;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
