//! Dense tensors, reverse-mode differentiation, the graph attention layer
//! and the Adam optimizer. Everything is `f64`.

mod adam;
mod checkpoint;
mod gat;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{config_hash, load_checkpoint, save_checkpoint, sidecar_path, CheckpointMeta};
pub use gat::{
    attention_weights, gat_layer_forward, Activation, GatConfig, GatLayerParams, GatModel, LossAndGrads,
    DEFAULT_LEAKY_SLOPE,
};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
