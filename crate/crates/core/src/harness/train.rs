use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{
    apply_topology, width_for_budget, Agent, AgentError, DqnAgent, DqnConfig, SacAgent, SacConfig, StepOptions, Topology, TopologyOp,
};
use crate::envs::{env_reset, env_step, ActionSpace, EnvKind, Transition};
use crate::numerics::{Mlp, RngStream};
use crate::sparse::{make_plan, mlp_shapes, SparseNetwork};
use crate::topology::{PruneSchedule, TopologySchedule};

use super::config::{AgentKind, ExperimentConfig, Regime};
use super::policy::{evaluate_episodes, Policy};
use super::stats::final_score;
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    pub mean_return: f64,
    pub std_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityRecord {
    pub step: u64,
    pub network: String,
    pub sparsity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrLogRecord {
    pub step: u64,
    pub network: String,
    pub mean_snr: f64,
}

/// Everything a run records. Equality ignores wall-clock time.
#[derive(Debug, Clone)]
pub struct RunLog {
    pub config: ExperimentConfig,
    pub evals: Vec<EvalRecord>,
    pub sparsity: Vec<SparsityRecord>,
    pub snr: Vec<SnrLogRecord>,
    /// Weights plus biases that can be nonzero, summed over trained networks.
    pub active_params: usize,
    /// SHA-256 over final weights and masks.
    pub weights_digest: String,
    pub wall_clock_secs: f64,
}

impl PartialEq for RunLog {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.evals == other.evals
            && self.sparsity == other.sparsity
            && self.snr == other.snr
            && self.active_params == other.active_params
            && self.weights_digest == other.weights_digest
    }
}

impl RunLog {
    pub fn eval_means(&self) -> Vec<f64> {
        self.evals.iter().map(|e| e.mean_return).collect()
    }

    pub fn final_score(&self) -> Result<f64, HarnessError> {
        Ok(final_score(&self.eval_means())?)
    }
}

pub struct RunOutput {
    pub log: RunLog,
    pub policy: Policy,
}

enum TrainedAgent {
    Dqn(DqnAgent),
    Sac(SacAgent),
}

impl TrainedAgent {
    fn agent(&mut self) -> &mut dyn Agent {
        match self {
            TrainedAgent::Dqn(a) => a,
            TrainedAgent::Sac(a) => a,
        }
    }

    fn agent_ref(&self) -> &dyn Agent {
        match self {
            TrainedAgent::Dqn(a) => a,
            TrainedAgent::Sac(a) => a,
        }
    }

    fn policy(&self, env: EnvKind) -> Policy {
        match self {
            TrainedAgent::Dqn(a) => Policy::greedy(env, a.online.net.clone(), a.config.eval_epsilon),
            TrainedAgent::Sac(a) => Policy::squashed_mean(env, a.actor.net.clone(), a.action_scale()),
        }
    }
}

/// Dense sizes whose parameter count matches the active count of `base`
/// at the config's sparsity and distribution.
fn scaled_sizes(base: &[usize], config: &ExperimentConfig) -> Result<Vec<usize>, HarnessError> {
    let sparsity = config.sparsity().expect("validated");
    let distribution = config.distribution().expect("validated");
    let plan = make_plan(distribution, sparsity, &mlp_shapes(base))?;
    let biases: usize = base[1..].iter().sum();
    let budget = plan.active_total() + biases;
    let depth = base.len() - 2;
    let width = width_for_budget(base[0], base[base.len() - 1], depth, budget)?;
    let mut sizes = vec![base[0]];
    sizes.extend(std::iter::repeat_n(width, depth));
    sizes.push(base[base.len() - 1]);
    Ok(sizes)
}

fn topology_for(config: &ExperimentConfig) -> Topology {
    match config.run.regime {
        Regime::Dense | Regime::DenseScaled => Topology::Dense,
        Regime::Prune => Topology::Prunable,
        Regime::Static | Regime::Set | Regime::Rigl => Topology::Sparse {
            sparsity: config.sparsity().expect("validated"),
            distribution: config.distribution().expect("validated"),
            sparsity_aware_init: config.sparsity.sparsity_aware_init.unwrap_or(false),
        },
    }
}

fn hidden_of(sizes: &[usize]) -> Vec<usize> {
    sizes[1..sizes.len() - 1].to_vec()
}

fn build_agent(config: &ExperimentConfig, rng: &mut RngStream) -> Result<TrainedAgent, HarnessError> {
    let env = config.run.env;
    let obs = env.obs_dim();
    let tr = &config.training;
    let hidden = config.hidden();
    let topology = topology_for(config);
    let with_io = |input: usize, output: usize| {
        let mut s = vec![input];
        s.extend(&hidden);
        s.push(output);
        s
    };
    match (config.run.agent, env.action_space()) {
        (AgentKind::Dqn, ActionSpace::Discrete(n)) => {
            let mut sizes = with_io(obs, n);
            if config.run.regime == Regime::DenseScaled {
                sizes = scaled_sizes(&sizes, config)?;
            }
            let dqn = DqnConfig {
                hidden: hidden_of(&sizes),
                gamma: tr.gamma.expect("resolved"),
                learning_rate: tr.learning_rate.expect("resolved"),
                weight_decay: config.weight_decay(),
                batch_size: tr.batch_size.expect("resolved"),
                replay_capacity: tr.replay_capacity.expect("resolved"),
                initial_collect: tr.initial_collect.expect("resolved"),
                target_update_interval: tr.target_update_interval.expect("resolved"),
                epsilon_decay_period: tr.epsilon_decay_period.expect("resolved"),
                ..DqnConfig::default()
            };
            Ok(TrainedAgent::Dqn(DqnAgent::new(obs, n, dqn, topology, rng)?))
        }
        (AgentKind::Sac, ActionSpace::Continuous { dim, scale }) => {
            let mut actor = with_io(obs, 2 * dim);
            let mut critic = with_io(obs + dim, 1);
            if config.run.regime == Regime::DenseScaled {
                actor = scaled_sizes(&actor, config)?;
                critic = scaled_sizes(&critic, config)?;
            }
            let sac = SacConfig {
                actor_hidden: hidden_of(&actor),
                critic_hidden: hidden_of(&critic),
                gamma: tr.gamma.expect("resolved"),
                learning_rate: tr.learning_rate.expect("resolved"),
                weight_decay: config.weight_decay(),
                batch_size: tr.batch_size.expect("resolved"),
                replay_capacity: tr.replay_capacity.expect("resolved"),
                initial_collect: tr.initial_collect.expect("resolved"),
                ..SacConfig::default()
            };
            Ok(TrainedAgent::Sac(SacAgent::new(obs, dim, scale, sac, topology, topology, rng)?))
        }
        _ => Err(AgentError::Config(format!("agent {} cannot act in {env}", config.run.agent)).into()),
    }
}

fn weights_digest(networks: &[(&'static str, &SparseNetwork)]) -> String {
    let mut h = Sha256::new();
    for (name, net) in networks {
        h.update(name.as_bytes());
        digest_mlp(&mut h, &net.net);
        if let Some(mask) = net.mask() {
            for layer in mask.layers() {
                h.update(layer.bits().iter().map(|&b| b as u8).collect::<Vec<_>>());
            }
        }
    }
    hex::encode(h.finalize())
}

fn digest_mlp(h: &mut Sha256, net: &Mlp) {
    for block in net.param_blocks() {
        for v in block {
            h.update(v.to_le_bytes());
        }
    }
}

fn record_sparsity(agent: &dyn Agent, step: u64, out: &mut Vec<SparsityRecord>) {
    for (name, net) in agent.trainable() {
        out.push(SparsityRecord { step, network: name.to_string(), sparsity: net.sparsity() });
    }
}

/// Runs one configuration to completion.
pub fn train_run(config: &ExperimentConfig) -> Result<RunLog, HarnessError> {
    train_run_full(config).map(|o| o.log)
}

/// Like [`train_run`], also returning the final evaluation policy.
pub fn train_run_full(config: &ExperimentConfig) -> Result<RunOutput, HarnessError> {
    let started = Instant::now();
    let config = config.resolve()?;
    let run = &config.run;
    let root = RngStream::new(run.seed, "run");
    let mut init_rng = root.fork("init");
    let mut env_rng = root.fork("env");
    let mut act_rng = root.fork("act");
    let mut replay_rng = root.fork("replay");
    let mut topo_rng = root.fork("topology");
    let mut eval_env_rng = root.fork("eval/env");
    let mut eval_act_rng = root.fork("eval/act");

    let mut trained = build_agent(&config, &mut init_rng)?;
    let regime = run.regime;
    let interval = config.topology.update_interval.unwrap_or(u64::MAX);
    let prune = match regime {
        Regime::Prune => Some(PruneSchedule::standard(run.total_steps, config.sparsity().expect("validated"), interval)?),
        _ => None,
    };
    let dynamic = match regime {
        Regime::Set | Regime::Rigl => {
            Some(TopologySchedule::standard(run.total_steps, interval, config.topology.drop_fraction.expect("resolved"))?)
        }
        _ => None,
    };
    let snr_interval = config.snr_interval();

    let mut evals = Vec::new();
    let mut sparsity = Vec::new();
    let mut snr = Vec::new();
    record_sparsity(trained.agent_ref(), 0, &mut sparsity);

    let mut state = env_reset(run.env, &mut env_rng);
    let mut last_loss = None;
    for t in 0..run.total_steps {
        let step = t + 1;
        let agent = trained.agent();
        let obs = state.observation();
        let action = agent.act(&obs, t, &mut act_rng)?;
        let outcome = env_step(&state, action)?;
        agent.observe(Transition {
            obs,
            action,
            reward: outcome.reward,
            next_obs: outcome.next.observation(),
            terminal: outcome.terminal,
            truncated: outcome.truncated,
        });
        state = if outcome.next.done { env_reset(run.env, &mut env_rng) } else { outcome.next };

        if agent.ready() {
            let topo_step = prune.is_some_and(|p| p.is_update_step(step)) || dynamic.is_some_and(|d| d.is_update_step(step));
            let opts = StepOptions { dense_grads: topo_step && regime == Regime::Rigl, snr: step % snr_interval == 0, step };
            let report = agent.train_step(&mut replay_rng, opts).map_err(|e| numeric_failure(step, last_loss, agent, e))?;
            last_loss = Some(report.loss);
            if topo_step {
                let op = match (prune, dynamic) {
                    (Some(p), _) => TopologyOp::Prune(p.target_sparsity(step)),
                    (None, Some(d)) if regime == Regime::Set => TopologyOp::Set(d.drop_fraction_at(step)),
                    (None, Some(d)) => TopologyOp::Rigl {
                        fraction: d.drop_fraction_at(step),
                        dense_grads: report.dense_grads.as_deref().unwrap_or(&[]),
                    },
                    (None, None) => unreachable!("topology step without a schedule"),
                };
                apply_topology(agent, op, &mut topo_rng)?;
            }
            agent.end_step();
            if let Some(records) = report.snr {
                let names: Vec<&str> = agent.trainable().iter().map(|(n, _)| *n).collect();
                for (name, rec) in names.into_iter().zip(records) {
                    snr.push(SnrLogRecord { step, network: name.to_string(), mean_snr: rec.mean_snr });
                }
            }
        }

        if step % run.eval_interval == 0 {
            let agent = trained.agent_ref();
            let returns = evaluate_episodes(
                run.env,
                run.eval_episodes,
                |o, rng| agent.act_eval(o, rng),
                &mut eval_env_rng,
                &mut eval_act_rng,
                None,
            )?;
            let (mean_return, std_return) = mean_std(&returns);
            evals.push(EvalRecord { step, mean_return, std_return });
            record_sparsity(agent, step, &mut sparsity);
        }
    }

    let agent = trained.agent_ref();
    let networks = agent.trainable();
    let log = RunLog {
        active_params: networks.iter().map(|(_, n)| n.active_params()).sum(),
        weights_digest: weights_digest(&networks),
        config: config.clone(),
        evals,
        sparsity,
        snr,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutput { policy: trained.policy(run.env), log })
}

fn numeric_failure(step: u64, last_loss: Option<f64>, agent: &dyn Agent, error: AgentError) -> HarnessError {
    match error {
        AgentError::NonFinite { .. } | AgentError::Numerics(_) => HarnessError::Numeric {
            step,
            last_loss,
            sparsities: agent.trainable().iter().map(|(_, n)| n.sparsity()).collect(),
            detail: error.to_string(),
        },
        other => other.into(),
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(regime: &str, extra: &str) -> ExperimentConfig {
        let text = format!(
            "[run]\nagent = \"dqn\"\nenv = \"cart-pole\"\nregime = \"{regime}\"\nseed = 3\ntotal_steps = 400\neval_interval = 100\neval_episodes = 2\n\
             [training]\nhidden = [16, 16]\nbatch_size = 8\ninitial_collect = 50\n{extra}"
        );
        ExperimentConfig::from_toml_str(&text).unwrap()
    }

    #[test]
    fn static_trace_is_constant() {
        let c = quick("static", "[sparsity]\nsparsity = 0.8\n[topology]\nsnr_interval = 100\n");
        let log = train_run(&c).unwrap();
        assert_eq!(log.evals.len(), 4);
        let first = log.sparsity[0].sparsity;
        assert!(first > 0.7);
        assert!(log.sparsity.iter().all(|r| r.sparsity == first));
        assert_eq!(log.snr.len(), 4);
        assert!(log.evals.iter().all(|e| e.step % 100 == 0));
    }

    #[test]
    fn dense_scaled_uses_narrower_network() {
        let c = quick("dense-scaled", "[sparsity]\nsparsity = 0.9\n");
        let log = train_run(&c).unwrap();
        let sparse_active = make_plan(crate::sparse::Distribution::Erk, 0.9, &mlp_shapes(&[4, 16, 16, 2])).unwrap().active_total() + 34;
        assert!(log.active_params <= sparse_active);
        assert!(log.sparsity.iter().all(|r| r.sparsity == 0.0));
    }

    #[test]
    fn prune_reaches_target() {
        let c = quick("prune", "[sparsity]\nsparsity = 0.75\n[topology]\nupdate_interval = 20\n");
        let log = train_run(&c).unwrap();
        for r in &log.sparsity {
            if r.step < 80 {
                assert_eq!(r.sparsity, 0.0);
            }
            if r.step >= 320 {
                assert!((r.sparsity - 0.75).abs() < 0.02, "{r:?}");
            }
        }
    }
}
