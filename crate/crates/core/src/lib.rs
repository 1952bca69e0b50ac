pub mod artifacts;
pub mod augmentation;
pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod matrix;
pub mod nn;
pub mod ordering;
pub mod pipeline;
pub mod rng;
pub mod synthetic;

pub use error::{LoclError, Result};
pub use matrix::Matrix;
