//! Solvers for the one-parameter reduction
//!
//! ```text
//! g_t - g_yyt + 4g^2 - 4g g_yy = y g g_yyy - y g_y g_yy,   y in R,
//! ```
//!
//! written in terms of the momentum `phi = g - g_yy`.
//!
//! The crate provides
//! - [`kernel`]: inversion of `1 - d^2/dy^2` by a linear-time exponential scan,
//! - [`initdata`]: construction and validation of initial momentum profiles,
//! - [`lagrangian`]: a particle method on the characteristic flow `gamma_t = gamma g(t, gamma)`,
//! - [`eulerian`]: an independent fixed-grid upwind solver used as a cross-check,
//! - [`diagnostics`]: invariant, bound, and blowup checks on solver output.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod diagnostics;
pub mod error;
pub mod eulerian;
pub mod initdata;
pub mod kernel;
pub mod lagrangian;
mod math;

pub use error::{Error, Result};
