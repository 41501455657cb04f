//! Numerical laboratory for weighted Carleman estimates for wave equations on
//! the exterior of the light cone `{|t| < r}`.
//!
//! Fields are studied on grids in `(log f, log h)` where `f = -uv` and
//! `h = -v/u` are built from the null coordinates `u = (t-r)/2`,
//! `v = (t+r)/2`. Angular dependence is a single spherical harmonic mode.

// `!(x > 0.0)` style guards are how NaN inputs get rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod currents;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod quadrature;
pub mod scalar;
pub mod solver;
pub mod verifier;
pub mod weights;

pub use error::{LabError, Result};
pub use geometry::{AdmissibleRegion, Dimension, SpacetimePoint};
