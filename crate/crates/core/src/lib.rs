pub mod checkpoint;
pub mod config;
pub mod distortion;
pub mod error;
pub mod image;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod reward;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
