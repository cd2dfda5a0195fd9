//! Numerical laboratory for the nonlocal heat equation `u_t = J*u - u` on
//! exterior domains of the line with a Dirichlet hole.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernel`]: convolution kernels, their moments and Fourier transform,
//!   the heat kernel and dipole, and the regular part `W` of the
//!   fundamental solution.
//! * [`domain`]: hole geometry, the uniform grid, fields and the discrete
//!   operator `L`.
//! * [`stationary`]: profiles `φ` with prescribed linear growth and their
//!   barriers.
//! * [`evolution`]: time integration and the representation-formula oracle.
//! * [`diagnostics`]: masses, momenta, conserved functionals and decay fits.
//! * [`asymptotics`]: error functionals for the near, far and very far
//!   field, scaled solutions and barrier certificates.
//!
//! Fourier convention used throughout: `ĝ(ξ) = ∫ g(x) e^{-iξx} dx`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod asymptotics;
pub mod diagnostics;
pub mod domain;
pub mod error;
pub mod evolution;
pub mod kernel;
pub mod quadrature;
pub mod stationary;

pub use error::{Error, Result};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
