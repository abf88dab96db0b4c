//! Fourier ptychographic microscopy: forward model, noise, and the AP, WFP,
//! PWFP and TPWFP reconstruction engines.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod harness;
pub mod metrics;
pub mod noise;
pub mod optics;
pub mod recon;

pub use error::{Error, Result};
