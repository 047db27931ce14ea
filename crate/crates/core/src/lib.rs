//! Simulation and design toolkit for refractive-index sensors read out by
//! biased (or standard) weak measurement on a total-internal-reflection
//! prism.
//!
//! The crate is organised bottom-up:
//!
//! - [`optics`]: TIR phase, its index derivative, post-selected spectral
//!   weights and the closed-form centroid shift.
//! - [`spectral`]: sources, the pixel grid, ideal frames and centroids.
//! - [`noise`]: detector noise synthesis and centroid-noise propagation.
//! - [`calibration`]: sensorgram segmentation and sensitivity regression.
//! - [`design`]: operating-point search, scheme comparison and resolution.
//! - [`kinetics`]: Langmuir binding fits and detection limits.
//! - [`cli`]: the `wmsense` command-line front end.

// `!(x > 0.0)` is used on purpose so that NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod optics;
pub mod spectral;
pub mod noise;
pub mod calibration;
pub mod design;
pub mod kinetics;
pub mod config;
pub mod io;
pub mod cli;

pub use error::{Error, Result};
