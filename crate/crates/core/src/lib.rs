//! Mutation-testing toolkit for small neural-network classifiers.
//!
//! The crate bundles a deterministic CPU inference/training engine with the
//! two mutation workflows used to grade test datasets:
//!
//! - **source-level**: mutate the training data or the architecture spec,
//!   retrain, and collect the resulting mutant models
//!   ([`source_mutators`]);
//! - **model-level**: mutate a trained model's weights, neurons or layers
//!   directly, no retraining ([`model_mutators`]).
//!
//! Mutants are scored against the passed test set with a class-level
//! mutation score and an average error rate ([`analysis`]). Everything is
//! seeded and single-threaded so identical inputs reproduce identical
//! artifacts bit for bit.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod datasets;
pub mod error;
pub mod model_mutators;
pub mod mutant;
pub mod nncore;
pub mod rng;
pub mod source_mutators;
pub mod trainer;

pub use error::{Error, Result};
pub use nncore::{ActivationFn, LayerKind, LayerSpec, ModelSpec, Tensor, TrainedModel};
