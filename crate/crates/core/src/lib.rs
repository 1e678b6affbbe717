//! Physics-informed neural networks for hyperbolic mean curvature flow of
//! closed plane curves and closed surfaces.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod autodiff;
#[cfg(feature = "cli")]
pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod loss;
pub mod network;
pub mod optim;
pub mod sampling;
pub mod trainer;
pub mod oracle;

pub use error::{Error, Result};
