//! Training-free temporal memory for frozen transformer policies.
//!
//! The crate caches pre-RoPE prefix keys/values of selected layers in
//! per-layer FIFO buffers, retrieves from them by key-to-key similarity with
//! a frame-gap recency bias, and fuses the result back into the current
//! key/value table by norm-preserving residual loading. A small seeded
//! transformer hosts the mechanism so every property can be checked end to
//! end without pretrained checkpoints.
//!
//! Module map:
//!
//! - [`numerics`]: tensors, softmax, norms, rotary embeddings
//! - [`kv_memory`]: FIFO buffers and history snapshots
//! - [`retrieval`]: K-to-K / Q-to-K retrieval with frame-gap bias
//! - [`injection`]: residual, norm-preserving and concatenation fusion
//! - [`backbone`]: the frozen toy transformer and its memory hook
//! - [`harness`]: aliasing tasks, ablation grid, efficiency benchmark, traces
//!
//! See the crate's `examples/` directory for one runnable program per
//! capability.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backbone;
pub mod config;
pub mod error;
pub mod harness;
pub mod injection;
pub mod kv_memory;
pub mod numerics;
pub mod retrieval;

pub use backbone::{Backbone, BackboneWeights, EpisodeMemory, StepOutput};
pub use config::{BackboneConfig, LayerSubset, RunConfig, TempoFitConfig};
pub use error::{Error, Result};
pub use injection::InjectionMode;
pub use numerics::{Tensor4, Tokens};
pub use retrieval::{FgtbParams, RetrievalMode};
