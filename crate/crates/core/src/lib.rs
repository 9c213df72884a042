//! Pseudo-spectral solvers for the semiclassical Hartree equation
//!
//! ```text
//! iε ∂_t u + (ε²/2) Δu = λ (|x|^{-γ} ∗ |u|²) u
//! ```
//!
//! on a periodic box, together with its phase/amplitude formulation, the
//! order-by-order WKB cascade and the studies that measure how the WKB
//! approximants converge as `ε → 0`.

pub mod cascade;
pub mod cli;
pub mod direct;
pub mod error;
pub mod field;
pub mod grenier;
pub mod grid;
pub mod io;
mod integrator;
pub mod norms;
pub mod physics;
pub mod spectral;
pub mod validation;

#[cfg(test)]
mod test_support;

pub use error::{Error, Result};
pub use field::{Field, Spectrum, VectorField};
pub use grid::{Grid, GridSpec};
pub use norms::{NormKind, NormValue};
