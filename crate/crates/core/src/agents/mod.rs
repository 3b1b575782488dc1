//! DQN and SAC on top of [`SparseNetwork`]s, the replay buffer, and helpers
//! for sizing networks to a parameter budget.

mod budget;
mod dqn;
mod replay;
mod sac;

use rand::Rng;

use crate::envs::Action;
use crate::numerics::{AdamState, Gradients, Mlp, NumericsError, RngStream, Tensor2};
use crate::sparse::{make_plan, mlp_shapes, random_mask, sparsity_aware_init_network, Distribution, Mask, SnrRecord, SparseError, SparseNetwork};
use crate::topology::{prune_step, rigl_update, set_update, TopologyError, TopologyUpdate};

pub use budget::{actor_critic_budget_split, mlp_param_count, width_for_budget, BudgetRegime, BudgetSplit, NetworkBudget, DEFAULT_ACTOR_FRACTION};
pub use dqn::{epsilon_greedy, linear_epsilon, DqnAgent, DqnConfig, TdLoss};
pub use replay::ReplayBuffer;
pub use sac::{squashed_log_prob, SacAgent, SacConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("non-finite {what}; batch: {dump}")]
    NonFinite { what: String, dump: String },
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("invalid agent setting: {0}")]
    Config(String),
    #[error("budget of {budget} parameters is infeasible: {reason}")]
    Infeasible { budget: usize, reason: String },
}

/// How a network's connectivity is set up at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Topology {
    Dense,
    /// Dense weights behind an all-ones mask, ready to be pruned.
    Prunable,
    /// Random mask drawn from a sparsity plan.
    Sparse { sparsity: f64, distribution: Distribution, sparsity_aware_init: bool },
}

/// He-initialised MLP with the requested connectivity.
pub fn build_network(sizes: &[usize], topology: Topology, rng: &mut RngStream) -> Result<SparseNetwork, AgentError> {
    let mut net = Mlp::new(sizes, rng)?;
    Ok(match topology {
        Topology::Dense => SparseNetwork::dense(net),
        Topology::Prunable => {
            let mask = Mask::dense_for(&net);
            SparseNetwork::masked(net, mask)?
        }
        Topology::Sparse { sparsity, distribution, sparsity_aware_init } => {
            let shapes = mlp_shapes(sizes);
            let plan = make_plan(distribution, sparsity, &shapes)?;
            let mask = random_mask(&plan, &shapes, rng)?;
            if sparsity_aware_init {
                sparsity_aware_init_network(&mut net, &mask)?;
            }
            SparseNetwork::masked(net, mask)?
        }
    })
}

/// Adam step on every parameter block, then re-zero masked weights.
pub(crate) fn apply_gradients(net: &mut SparseNetwork, optimizer: &mut AdamState, grads: &Gradients) -> Result<(), AgentError> {
    let blocks = grads.blocks();
    let mut params = net.net.param_blocks_mut();
    optimizer.step(&mut params, &blocks)?;
    net.enforce()?;
    Ok(())
}

/// Extra outputs requested from one gradient step.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepOptions {
    /// Keep unmasked weight gradients (RigL growth).
    pub dense_grads: bool,
    pub snr: bool,
    /// Environment step, stamped on SNR records.
    pub step: u64,
}

#[derive(Debug, Clone)]
pub struct StepReport {
    /// TD loss for DQN, mean critic loss for SAC.
    pub loss: f64,
    /// Indexed like [`Agent::trainable`].
    pub dense_grads: Option<Vec<Vec<Tensor2>>>,
    pub snr: Option<Vec<SnrRecord>>,
}

pub trait Agent {
    /// Exploration action at environment step `env_step`.
    fn act(&mut self, obs: &[f64], env_step: u64, rng: &mut RngStream) -> Result<Action, AgentError>;
    fn act_eval(&self, obs: &[f64], rng: &mut RngStream) -> Result<Action, AgentError>;
    fn observe(&mut self, transition: crate::envs::Transition);
    /// Enough data collected to start gradient steps.
    fn ready(&self) -> bool;
    fn train_step(&mut self, rng: &mut RngStream, opts: StepOptions) -> Result<StepReport, AgentError>;
    /// Target-network maintenance, run after any topology update.
    fn end_step(&mut self);
    /// Networks subject to sparsification, in a fixed order.
    fn trainable(&self) -> Vec<(&'static str, &SparseNetwork)>;
    fn trainable_mut(&mut self) -> Vec<(&mut SparseNetwork, &mut AdamState)>;
}

#[derive(Debug, Clone, Copy)]
pub enum TopologyOp<'a> {
    Prune(f64),
    Set(f64),
    Rigl { fraction: f64, dense_grads: &'a [Vec<Tensor2>] },
}

/// Applies one mask update to every trainable network. Optimizer moments of
/// dropped and grown connections restart from zero.
pub fn apply_topology<A: Agent + ?Sized>(agent: &mut A, op: TopologyOp<'_>, rng: &mut RngStream) -> Result<Vec<TopologyUpdate>, AgentError> {
    let mut updates = Vec::new();
    for (i, (net, optimizer)) in agent.trainable_mut().into_iter().enumerate() {
        let update = match op {
            TopologyOp::Prune(s) => prune_step(net, s)?,
            TopologyOp::Set(f) => set_update(net, f, rng)?,
            TopologyOp::Rigl { fraction, dense_grads } => {
                let grads = dense_grads.get(i).ok_or_else(|| AgentError::Config(format!("no dense gradients for network {i}")))?;
                rigl_update(net, grads, fraction)?
            }
        };
        for (l, layer) in update.layers.iter().enumerate() {
            optimizer.reset_entries(2 * l, &layer.dropped);
            optimizer.reset_entries(2 * l, &layer.grown);
        }
        updates.push(update);
    }
    Ok(updates)
}

pub(crate) fn uniform_action(num_actions: usize, rng: &mut RngStream) -> usize {
    rng.random_range(0..num_actions)
}

pub(crate) fn dump_batch(batch: &[&crate::envs::Transition]) -> String {
    batch
        .iter()
        .take(4)
        .map(|t| format!("(obs {:?}, action {}, reward {}, terminal {})", t.obs, t.action, t.reward, t.terminal))
        .collect::<Vec<_>>()
        .join("; ")
}

pub(crate) fn stack_rows(rows: impl Iterator<Item = Vec<f64>>, cols: usize) -> Tensor2 {
    let data: Vec<f64> = rows.flatten().collect();
    let n = data.len() / cols.max(1);
    Tensor2::from_vec(n, cols, data).expect("rows have equal length")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_sparse_matches_plan() {
        let sizes = [6, 64, 64, 3];
        let topo = Topology::Sparse { sparsity: 0.8, distribution: Distribution::Erk, sparsity_aware_init: true };
        let net = build_network(&sizes, topo, &mut RngStream::new(0, "net")).unwrap();
        let plan = make_plan(Distribution::Erk, 0.8, &mlp_shapes(&sizes)).unwrap();
        assert_eq!(net.mask().unwrap().active_counts(), plan.active_counts);
        assert!(net.is_consistent());
    }

    #[test]
    fn prunable_starts_dense() {
        let net = build_network(&[4, 8, 2], Topology::Prunable, &mut RngStream::new(0, "net")).unwrap();
        assert_eq!(net.sparsity(), 0.0);
        assert!(net.mask().is_some());
    }
}
