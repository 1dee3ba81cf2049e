//! Multimodal review helpfulness ranking with interaction subtasks and
//! self-supervised pseudo-labels.
//!
//! The crate is organised bottom-up: [`numerics`] provides tensors and a
//! reverse-mode autodiff graph, [`blocks`] the layers, [`model`] the full
//! scorer, [`ssplabel`] and [`objectives`] the training signal, and
//! [`train`] ties them into an optimization loop evaluated by [`metrics`].

pub mod blocks;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod objectives;
pub mod ssplabel;
pub mod train;

pub use error::{Error, Result};
