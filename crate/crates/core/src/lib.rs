//! Training-free leader-follower guidance for two-agent motion diffusion.

pub mod cli;
pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod motion;
pub mod pace;
pub mod pipeline;
pub mod plot;
pub mod sync;
pub mod synth;

pub use error::{Error, Result};
