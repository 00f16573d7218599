//! Compact 3D Gaussian splatting.
//!
//! A CPU reference implementation of a compact Gaussian splatting pipeline:
//! learnable volume masks, residual vector quantization of geometry, a hash
//! grid color field, space-time Gaussians for dynamic scenes, and a
//! post-training compaction codec.

pub mod codec;
pub mod dataset;
pub mod dynamic;
pub mod error;
pub mod field;
pub mod image;
pub mod mask;
pub mod math;
pub mod metrics;
pub mod mlp;
pub mod model;
pub mod optim;
pub mod render;
pub mod report;
pub mod rvq;
pub mod scene;
pub mod toy;
pub mod train;

pub use error::{Error, Result};
