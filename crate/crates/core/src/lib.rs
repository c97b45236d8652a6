//! Speckle decorrelation in locally shifted random media.
//!
//! Two regimes are covered: a Monte Carlo solver for the phase-modulated
//! radiative transfer equations and a finite-difference solver for their
//! diffusion limits. Both feed the speckle correlation `C12`.

// Negated comparisons are how NaN inputs get rejected alongside bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod cli;
pub mod config;
pub mod correlation;
pub mod diffusion;
pub mod error;
pub mod geom;
pub mod medium;
pub mod quadrature;
pub mod scene;
pub mod transport;

pub use error::{Error, Result};
