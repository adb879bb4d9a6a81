//! Differentiation, verification and optimization primitives.

pub mod adam;
pub mod check;
pub mod checkpoint;
pub mod graph;
pub mod param;
pub mod rng;

pub use adam::{AdamConfig, AdamState};
pub use check::{grad_check, GradCheckOptions, GradCheckReport, TensorCheck};
pub use graph::{Graph, Mat, Var};
pub use param::{grad, ParamSet, ParamTensor};
pub use rng::{RngState, RngStream};
