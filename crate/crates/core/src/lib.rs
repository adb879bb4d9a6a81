//! Semi-supervised conditional recurrent variational autoencoder for
//! labeled motion sequences.
//!
//! The crate is organized bottom-up:
//!
//! - [`motion`]: keypoint clips, normalization, sliding windows, splits and
//!   synthetic oscillatory motion.
//! - [`labels`]: sparse categorical labels, their CSV store and the two
//!   augmentation rules (between-fill and temporal dilation).
//! - [`diff`]: a small reverse-mode autodiff tape over `f64` matrices, the
//!   finite-difference checker, Adam and the checkpoint format.
//! - [`model`]: LSTM encoder with Gaussian head, dense classifier and LSTM
//!   decoder.
//! - [`objective`]: labeled bound `L(x, y)`, unlabeled bound `U(x)` and the
//!   weighted total loss.
//! - [`trainer`], [`generator`], [`metrics`]: training loop, latent atlas
//!   sampling and evaluation.

pub mod diff;
pub mod error;
pub mod generator;
pub mod labels;
pub mod metrics;
pub mod model;
pub mod motion;
pub mod objective;
pub mod trainer;

pub use error::{Error, Result};
