//! Registration drivers: the optimizer loop, sequential and pairwise
//! registration, label propagation and field composition.

mod config;
mod labels;
mod optimize;
mod register;

pub use config::{OptimizerKind, RegistrationConfig};
pub use labels::{compose_pairwise, propagate_binary_linear, propagate_labels};
pub use optimize::{optimize, Optimized};
pub use register::{
    register_pair, register_pairwise_chain, register_pairwise_to_baseline, register_sequence, sequence_loss,
    PairwiseResult, RegistrationResult, SequenceSpec,
};

#[cfg(test)]
mod tests;
