//! Gated recurrent sequence regressor mapping strain and microstructure
//! features to stress, trained by backpropagation through time.

pub mod checkpoint;
mod gru;
mod model;
mod train;

pub use gru::{backward, data_cost, forward, loss_and_gradient, ForwardCache, GruLayerParams, GruParams, LinearParams};
pub use model::{features, Batch, GruModel, NetworkConfig, Normalizer, Sequence, INPUT_WIDTH, OUTPUT_WIDTH};
pub use train::{clip_global_norm, evaluate_cost, train, Adam, EpochRecord, TrainConfig, TrainHistory};
