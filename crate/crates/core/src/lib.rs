//! Numerical laboratory for Poisson problems with singular right-hand sides.
//!
//! The crate is split along the lines of the computation:
//!
//! * [`fractal`] builds generalized Cantor sets, Cantor grills and placed
//!   copies of them as finite unions of axis-aligned boxes, and estimates
//!   their box-counting dimension.
//! * [`distance`] answers exact Euclidean distance queries against those
//!   unions and samples distance shells.
//! * [`rhs`] assembles right-hand sides of the form
//!   `F(x) = sum_k c_k / |d(., A_k)^-g_k|_2 * d(x, A_k)^-g_k`, estimates the
//!   norms involved and checks the integrability window.
//! * [`poisson`] solves `-Lap u = F` with zero Dirichlet data, both in closed
//!   radial form and on regular grids, and fits singularity orders.
//! * [`singdim`] detects singular sets and estimates the pointwise singular
//!   dimension map.
//! * [`io`] holds the on-disk formats shared by the command-line runner.

pub mod distance;
pub mod error;
pub mod fractal;
pub mod io;
pub mod poisson;
pub mod regression;
pub mod rhs;
pub mod rng;
pub mod singdim;

pub use error::{Error, Result};
