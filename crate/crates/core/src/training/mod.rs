//! Losses, reverse-mode gradients and Adam optimization on a fixed topology.

mod adam;
mod config;
mod fit;
mod gradient;
mod loss;
mod trace;

pub use adam::{adam_step, AdamState};
pub use config::{L1Ramp, LossVariant, TrainingConfig};
pub use fit::{train_fixed_topology, validation_score, EpochRecord, Scope, TrainingReport, INIT_STD};
pub use gradient::{compute_gradients, compute_gradients_for};
pub use loss::{
    action_loss, batch_loss, batch_loss_with_targets, evolution_loss, kl_targets, l1_penalty, split_alphas,
    split_regularizer, trajectory_loss, EvolutionLoss, LossBreakdown, ALPHA_CLAMP,
};
