use crate::sparse::{make_plan, mlp_shapes, Distribution};

use super::AgentError;

/// Actor share of the total parameter budget in the standard SAC setup.
pub const DEFAULT_ACTOR_FRACTION: f64 = 0.34;

/// Weights plus biases of a dense MLP with the given layer sizes.
pub fn mlp_param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn uniform_sizes(input: usize, output: usize, depth: usize, width: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend(std::iter::repeat_n(width, depth));
    sizes.push(output);
    sizes
}

/// Largest hidden width `w` whose dense MLP (`depth` hidden layers of `w`
/// units) has at most `budget` parameters.
pub fn width_for_budget(obs_dim: usize, out_dim: usize, depth: usize, budget: usize) -> Result<usize, AgentError> {
    if depth == 0 {
        return Err(AgentError::Config("need at least one hidden layer".into()));
    }
    let params = |w: usize| mlp_param_count(&uniform_sizes(obs_dim, out_dim, depth, w));
    if params(1) > budget {
        return Err(AgentError::Infeasible { budget, reason: format!("width 1 already needs {}", params(1)) });
    }
    let mut hi = 2;
    while params(hi) <= budget {
        hi *= 2;
    }
    // params(lo) ≤ budget < params(hi)
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if params(mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetRegime {
    /// Shrink hidden widths.
    Dense,
    /// Keep widths and raise sparsity.
    Sparse(Distribution),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkBudget {
    pub sizes: Vec<usize>,
    pub sparsity: f64,
    /// Nonzero-capable weights plus biases.
    pub active_params: usize,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetSplit {
    pub actor: NetworkBudget,
    /// Configuration of each of the two critics.
    pub critic: NetworkBudget,
}

fn active_at(sizes: &[usize], distribution: Distribution, sparsity: f64) -> Result<usize, AgentError> {
    let shapes = mlp_shapes(sizes);
    let biases: usize = sizes[1..].iter().sum();
    if sparsity == 0.0 {
        return Ok(mlp_param_count(sizes));
    }
    Ok(make_plan(distribution, sparsity, &shapes)?.active_total() + biases)
}

fn fit_network(base: &[usize], budget: usize, regime: BudgetRegime) -> Result<NetworkBudget, AgentError> {
    match regime {
        BudgetRegime::Dense => {
            let depth = base.len() - 2;
            let w = width_for_budget(base[0], base[base.len() - 1], depth, budget)?;
            let sizes = uniform_sizes(base[0], base[base.len() - 1], depth, w);
            Ok(NetworkBudget { active_params: mlp_param_count(&sizes), sizes, sparsity: 0.0, budget })
        }
        BudgetRegime::Sparse(distribution) => {
            let sizes = base.to_vec();
            let dense = mlp_param_count(&sizes);
            if dense <= budget {
                return Ok(NetworkBudget { sizes, sparsity: 0.0, active_params: dense, budget });
            }
            // Bisect for the smallest sparsity that fits; the sparsest plan
            // keeps one weight per layer.
            let weights: usize = sizes.windows(2).map(|w| w[0] * w[1]).sum();
            let (mut lo, mut hi) = (0.0_f64, 1.0 - (sizes.len() - 1) as f64 / weights as f64);
            let floor = active_at(&sizes, distribution, hi)
                .map_err(|_| AgentError::Infeasible { budget, reason: "no sparsity level is feasible".into() })?;
            if floor > budget {
                return Err(AgentError::Infeasible { budget, reason: format!("even the sparsest network needs {floor}") });
            }
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if active_at(&sizes, distribution, mid).is_ok_and(|a| a <= budget) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let active_params = active_at(&sizes, distribution, hi)?;
            Ok(NetworkBudget { sizes, sparsity: hi, active_params, budget })
        }
    }
}

/// Splits `total` parameters between one actor (`⌊ρ·total⌋`) and two
/// critics (equal shares of the rest).
pub fn actor_critic_budget_split(
    total: usize,
    actor_fraction: f64,
    actor_base: &[usize],
    critic_base: &[usize],
    regime: BudgetRegime,
) -> Result<BudgetSplit, AgentError> {
    if !(actor_fraction > 0.0 && actor_fraction < 1.0) {
        return Err(AgentError::Config(format!("actor fraction {actor_fraction} outside (0, 1)")));
    }
    if actor_base.len() < 3 || critic_base.len() < 3 {
        return Err(AgentError::Config("base networks need at least one hidden layer".into()));
    }
    let actor_budget = (actor_fraction * total as f64 + 1e-9).floor() as usize;
    let critic_budget = (total - actor_budget) / 2;
    Ok(BudgetSplit {
        actor: fit_network(actor_base, actor_budget, regime)?,
        critic: fit_network(critic_base, critic_budget, regime)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_and_boundary_inversion() {
        let p512 = mlp_param_count(&[6, 512, 512, 3]);
        assert_eq!(width_for_budget(6, 3, 2, p512).unwrap(), 512);
        assert_eq!(width_for_budget(6, 3, 2, p512 - 1).unwrap(), 511);
    }

    #[test]
    fn tenth_of_acrobot_network() {
        assert_eq!(mlp_param_count(&[6, 512, 512, 3]), 267_779);
        let w = width_for_budget(6, 3, 2, 26_777).unwrap();
        let scan = (1..1000).take_while(|&w| mlp_param_count(&[6, w, w, 3]) <= 26_777).last().unwrap();
        assert_eq!(w, scan);
        assert_eq!(w, 158);
    }

    #[test]
    fn infeasible_budget() {
        assert!(matches!(width_for_budget(6, 3, 2, 5), Err(AgentError::Infeasible { .. })));
    }

    #[test]
    fn default_split_recovers_standard_sizes() {
        let actor = [3, 256, 256, 2];
        let critic = [4, 256, 256, 1];
        let total = mlp_param_count(&actor) + 2 * mlp_param_count(&critic);
        let split = actor_critic_budget_split(total, DEFAULT_ACTOR_FRACTION, &actor, &critic, BudgetRegime::Dense).unwrap();
        for (net, base) in [(&split.actor, 256.0), (&split.critic, 256.0)] {
            assert!((net.sizes[1] as f64 - base).abs() / base < 0.02, "{:?}", net.sizes);
        }
    }

    #[test]
    fn symmetric_split() {
        let base = [4, 32, 32, 1];
        let total = 3 * mlp_param_count(&base);
        let split = actor_critic_budget_split(total, 0.5, &base, &base, BudgetRegime::Dense).unwrap();
        assert_eq!(split.actor.budget, total / 2);
        assert_eq!(2 * split.critic.budget, total - total / 2);
        let sparse = actor_critic_budget_split(total, 1.0 / 3.0, &base, &base, BudgetRegime::Sparse(Distribution::Erk)).unwrap();
        assert_eq!(sparse.actor, sparse.critic);
    }

    #[test]
    fn full_budget_means_dense() {
        let base = [4, 32, 32, 1];
        let total = 3 * mlp_param_count(&base);
        let split = actor_critic_budget_split(total, 1.0 / 3.0, &base, &base, BudgetRegime::Sparse(Distribution::Uniform)).unwrap();
        assert_eq!(split.actor.sparsity, 0.0);
        assert_eq!(split.critic.sparsity, 0.0);
    }

    #[test]
    fn sparse_regime_meets_budget() {
        let actor = [3, 256, 256, 2];
        let critic = [4, 256, 256, 1];
        let total = (mlp_param_count(&actor) + 2 * mlp_param_count(&critic)) / 10;
        let split = actor_critic_budget_split(total, DEFAULT_ACTOR_FRACTION, &actor, &critic, BudgetRegime::Sparse(Distribution::Erk)).unwrap();
        for net in [&split.actor, &split.critic] {
            assert!(net.active_params <= net.budget);
            assert!(net.budget - net.active_params < net.budget / 100);
            assert!(net.sparsity > 0.85 && net.sparsity < 0.95);
        }
    }
}
