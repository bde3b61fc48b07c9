// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod contour;
pub mod eigen;
pub mod error;
pub mod green;
pub mod hyperbolic;
pub mod io;
pub mod orbits;
pub mod quad;
pub mod special;
pub mod spectral;
pub mod testfn;
pub mod trace;

pub use error::{Error, Result};
