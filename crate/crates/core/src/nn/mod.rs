//! A small pre-norm transformer over `f64` with exact analytic gradients.
//!
//! The same parameter layout serves three heads: masked-LM and causal-LM
//! (logits through the tied token embedding) and a sentence-embedding head
//! (mean-pooled final states).

mod arch;
mod dropout;
mod generate;
mod loss;
mod model;
pub mod ops;
mod params;

pub use arch::{ArchConfig, Head, NnError};
pub use dropout::{dropout_apply, DropoutConfig};
pub use generate::{argmax, greedy_generate, DEFAULT_MAX_LENGTH};
pub use loss::{causal_targets, loss_causal, loss_mlm, perplexity, LossOutput};
pub use model::{backward, embed, forward, Batch, Cache, ForwardOutput, MaskedToken};
pub use params::{Gradients, LayerWeights, ModelParams, Tensor, Weights};
