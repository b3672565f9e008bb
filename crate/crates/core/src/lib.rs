#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Differentially private Winsorized mean estimation for dependent data.
//!
//! The crate covers private histograms and projection intervals, central and
//! local Winsorized mean estimators at item and user level, private variance
//! plug-ins, Priestley–Chao regression and longitudinal regression, together
//! with structured Gaussian samplers used to exercise them.

pub mod error;
pub mod histogram;
pub mod linalg;
pub mod mean;
pub mod mechanisms;
pub mod nonparam;
pub mod synth;
pub mod user_level;
pub mod variance;

pub use error::{DpError, Result};
