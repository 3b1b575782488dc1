//! Masks, layer-sparsity plans (uniform and ERK), sparsity-aware
//! initialisation, parameter/FLOPs accounting, and gradient SNR.

mod accounting;
mod init;
mod mask;
mod network;
mod plan;
mod snr;

pub use accounting::{
    count_flops, count_flops_for_plan, count_params, count_params_for_mask, count_params_for_plan,
    parse_architecture, ParamCount, NATURE_CNN,
};
pub use init::{random_mask, sparsity_aware_init, sparsity_aware_init_network};
pub use mask::{apply_mask, LayerMask, Mask};
pub use network::SparseNetwork;
pub use plan::{
    erk_plan, make_plan, mlp_shapes, round_active, uniform_plan, Distribution, LayerKind, LayerShape, SparsityPlan,
};
pub use snr::{network_snr, snr_stats, SnrRecord, SNR_EPSILON};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SparseError {
    #[error("sparsity {0} is outside [0, 1)")]
    InvalidSparsity(f64),
    #[error("infeasible sparsity plan: {0}")]
    Infeasible(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("architecture schema error on line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("need at least 2 samples for gradient statistics, got {0}")]
    InsufficientSamples(usize),
}
