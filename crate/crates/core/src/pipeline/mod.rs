//! Pretraining loop, twin autoencoder model, checkpoints and embeddings.

pub mod config;
pub mod model;
pub mod train;

pub use config::{EncoderKind, TrainConfig};
pub use model::{EmbeddingMatrix, TwinBatch, TwinModel};
pub use train::{pretrain, pretrain_fold, EpochLog, TrainingLog};
