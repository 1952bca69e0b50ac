//! Minimal dense arrays with hand-written reverse-mode gradients for the
//! layer set the autoencoders need: conv1d, dense, max-pool, up-sample,
//! LeakyReLU and batch standardization, plus RMSProp and a binary
//! checkpoint container.

pub mod container;
pub mod layers;
pub mod ops;
pub mod optim;
mod tensor;

pub use layers::{Layer, LayerSpec, Network, Tape};
pub use optim::RmsProp;
pub use tensor::Tensor;
