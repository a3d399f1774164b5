//! Numerical lab for the simplicity bias of two-layer networks trained by
//! gradient flow from small initialization.

// `!(x > 0.0)` guards are written that way on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activation;
pub mod analysis;
pub mod csvio;
pub mod datasets;
pub mod dynamics;
pub mod error;
pub mod gfield;
pub mod linalg;
pub mod network;
pub mod rng;

pub use activation::{ActivationCfg, ActivationKind};
pub use error::{Error, Result};
pub use gfield::{ExtremumRecord, GLandscape};
pub use linalg::LabeledDataset;
pub use network::{InitSpec, Params, Tangent};
