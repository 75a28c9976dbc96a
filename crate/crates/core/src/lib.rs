//! Pseudo-spectral simulation of non-isothermal nematic liquid crystal flow
//! on the periodic square `(-pi, pi)^2`, with the cutoff / power-law
//! approximation hierarchy and numerical checks of its energy identities,
//! entropy inequality, maximum principles and concentration behaviour.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod csvio;
pub mod diagnostics;
pub mod driver;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod initial;
pub mod limits;
pub mod par;
pub mod spectral;
pub mod stepper;

pub use error::{Error, Result};
pub use grid::{DirectorField, ScalarField, TorusGrid, VectorField};
pub use spectral::Spectral;
