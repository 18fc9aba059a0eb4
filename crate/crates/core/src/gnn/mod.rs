//! Small GNNs (GCN with optional layernorm, SGC, mean-aggregation SAGE)
//! with hand-written reverse passes.

mod checkpoint;
mod grad;
mod model;
mod train;

pub use checkpoint::{load_model, save_model, Checkpoint, TensorRecord};
pub use grad::{grad_injected_features, AttackObjective, InjectionLayout};
pub use model::{
    forward, logits, predict_labels, Activation, Architecture, GraphOps, Layer, LayerNorm, Mode,
    Model, ModelSpec, Prediction,
};
pub use train::{train, TrainConfig};
pub(crate) use model::check_input;

#[cfg(test)]
mod tests;
