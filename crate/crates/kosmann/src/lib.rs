//! Symbolic-numeric tensor and spinor calculus on four-dimensional
//! Lorentzian charts.
//!
//! The crate builds regular, generalized and Kosmann-Lie derivatives of
//! tensor and Weyl-spinor fields from exact symbolic component expressions
//! and verifies the defining identities by pointwise numeric residuals at
//! sampled chart points.

pub mod error;
pub mod expr;
pub mod geometry;
pub mod lie;
pub mod spin;
pub mod cli;

pub use error::{Error, Result};
