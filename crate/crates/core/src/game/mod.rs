//! The semi-cooperative game between the task model `f` and the
//! label-observability discriminator `d`.
//!
//! Per minibatch, `f` produces `Ŷ` and the per-sample loss `g` against the
//! working labels; `d` scores `(X, Ŷ, g)` and takes a step on its own
//! loss; its scores are turned into soft-labeling weights and `f` takes a
//! step on the weighted loss. Pseudo-labels on `U` are refreshed from `f`
//! every `refresh_interval` epochs.

pub mod losses;
pub mod pseudo;
mod train;
pub mod weights;

pub use losses::{discriminator_loss, elementwise_loss, elementwise_loss_values, main_loss};
pub use pseudo::{init_pseudo_labels, refresh_pseudo_labels, PseudoState};
pub use train::{run_game, GameConfig, GameRun, WeightMode};
pub use weights::{soft_weights, LossVariant, SoftWeights};
