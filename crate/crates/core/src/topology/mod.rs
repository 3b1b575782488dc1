//! Sparsification regimes: gradual magnitude pruning, static masks, SET and
//! RigL, with their schedules.

mod schedule;
mod update;

pub use schedule::{cosine_drop_fraction, prune_target_sparsity, PruneSchedule, TopologySchedule};
pub use update::{
    prune_layer, prune_step, rigl_layer, rigl_update, set_layer, set_update, LayerUpdate, TopologyUpdate,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TopologyError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("topology updates need a masked network")]
    Dense,
    #[error("shape mismatch: {0}")]
    Shape(String),
}
