//! HarsanyiNet: networks whose hidden units encode AND-interactions between
//! input players, trained end to end, with exact Shapley attributions read
//! out of a single forward pass.
//!
//! The crate is organized bottom-up:
//!
//! * [`game`] — coalitions, tabulated games, Möbius/interaction transforms,
//!   and the brute-force Shapley oracle used as ground truth everywhere.
//! * [`model`] — the tabular (MLP-style) HarsanyiNet: gated AND units,
//!   receptive fields, and closed-form exact attributions.
//! * [`cnn`] — the convolutional variant whose players are grid locations.
//! * [`train`] — straight-through selector training, reverse-mode gradients,
//!   Adam, and the training loop.
//! * [`estimators`] — sampling baselines (permutation, antithetical,
//!   kernel-weighted regression) that exact attributions are compared against.
//! * [`data`], [`io`], [`experiment`], [`cli`] — dataset ingestion, model
//!   persistence, the convergence experiment, and the command-line harness.
//!
//! All arithmetic is f64 with fixed summation order; every seeded entry point
//! is reproducible bit for bit.

pub mod cli;
pub mod cnn;
pub mod data;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod game;
pub mod io;
pub mod model;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
