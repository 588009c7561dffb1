//! RAW-domain imaging toolkit.
//!
//! * [`raw`] — `.braw` container, normalization, Bayer mosaic/demosaic, plane stacking.
//! * [`isp`] — forward ISP and the illumination-conditioned inverse ISP.
//! * [`losses`] — cycle / variance / adversarial losses and histogram features.
//! * [`stats`] — patch-mean density model and Monte-Carlo studies.
//! * [`ric`] — lossless progressive RAW codec.

// `!(x > 0.0)` is used on purpose so NaN lands in the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod isp;
pub mod losses;
pub mod raw;
pub mod ric;
pub mod selftest;
pub mod stats;

pub use error::{Error, Result};
