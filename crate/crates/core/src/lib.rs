//! Cooperative generative classifier networks: a tape-based autodiff engine,
//! the explainer/reasoner/producer triple, its losses, training loop,
//! tabular data utilities and comparison baselines.
//!
//! Builds without `std`; only `alloc` is required.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod activation;
pub mod baselines;
pub mod curve;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod nets;
pub mod nn;
pub mod optim;
pub mod param;
pub mod tape;
pub mod tensor;
pub mod trainer;

pub use activation::Activation;
pub use error::{Error, Result};
pub use loss::{LossKind, ModelLossForm, ReductionMode};
pub use metrics::{compute_metrics, Metrics};
pub use nets::{CcnetsConfig, CooperativeTriple, JointMode, NetworkConfig, Role};
pub use param::{ParamId, ParamStore};
pub use tape::{ParamFilter, Tape, Var};
pub use tensor::Tensor;
pub use trainer::{EvalConfig, ScoreMode, TrainConfig};
