use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::envs::{Action, Transition};
use crate::numerics::{AdamConfig, AdamState, BackwardOptions, Mlp, RngStream, Tape, Tensor2};
use crate::sparse::{network_snr, SparseNetwork};

use super::{apply_gradients, build_network, dump_batch, stack_rows, Agent, AgentError, ReplayBuffer, StepOptions, StepReport, Topology};

const LOG_STD_MIN: f64 = -20.0;
const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub struct SacConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub gamma: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub initial_collect: usize,
    pub tau: f64,
    pub init_alpha: f64,
    pub learn_alpha: bool,
    /// Defaults to `−dim(A)`.
    pub target_entropy: Option<f64>,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            actor_hidden: vec![256, 256],
            critic_hidden: vec![256, 256],
            gamma: 0.99,
            learning_rate: 3e-4,
            weight_decay: 0.0,
            batch_size: 256,
            replay_capacity: 100_000,
            initial_collect: 1000,
            tau: 0.005,
            init_alpha: 1.0,
            learn_alpha: true,
            target_entropy: None,
        }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `−log(1 − tanh²u)` without cancellation.
fn squash_correction(u: f64) -> f64 {
    -2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Log-density of `a = tanh(u)`, `u ~ N(μ, σ²)`, evaluated at the
/// pre-squash value `u` (density over `a ∈ (−1, 1)`).
pub fn squashed_log_prob(mu: f64, log_std: f64, u: f64) -> f64 {
    let z = (u - mu) / log_std.exp();
    -0.5 * z * z - log_std - HALF_LN_2PI + squash_correction(u)
}

/// Reparameterised draw from the policy for a batch.
struct PolicySample {
    eps: Vec<f64>,
    std: Vec<f64>,
    /// Whether the raw log-std was inside the clamp range.
    log_std_free: Vec<bool>,
    /// Squashed actions in (−1, 1), `B × d`.
    actions: Tensor2,
    log_prob: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    pub config: SacConfig,
    pub actor: SparseNetwork,
    pub critic1: SparseNetwork,
    pub critic2: SparseNetwork,
    pub target1: Mlp,
    pub target2: Mlp,
    pub replay: ReplayBuffer,
    actor_opt: AdamState,
    critic1_opt: AdamState,
    critic2_opt: AdamState,
    alpha_opt: AdamState,
    log_alpha: f64,
    action_dim: usize,
    action_scale: f64,
}

fn dense_copy(net: &SparseNetwork) -> Mlp {
    let mut m = net.net.clone();
    m.layers_mut().iter_mut().for_each(|l| l.set_support(None));
    m
}

impl SacAgent {
    pub fn new(
        obs_dim: usize,
        action_dim: usize,
        action_scale: f64,
        config: SacConfig,
        actor_topology: Topology,
        critic_topology: Topology,
        rng: &mut RngStream,
    ) -> Result<Self, AgentError> {
        if config.batch_size < 2 {
            return Err(AgentError::Config("SAC needs a batch of at least 2".into()));
        }
        if action_dim != 1 {
            return Err(AgentError::Config(format!("continuous actions must be one-dimensional, got {action_dim}")));
        }
        if !(config.init_alpha >= 0.0) || (config.learn_alpha && config.init_alpha == 0.0) {
            return Err(AgentError::Config(format!("initial temperature {} not usable", config.init_alpha)));
        }
        let sizes = |input: usize, hidden: &[usize], output: usize| {
            let mut s = vec![input];
            s.extend(hidden);
            s.push(output);
            s
        };
        let actor = build_network(&sizes(obs_dim, &config.actor_hidden, 2 * action_dim), actor_topology, rng)?;
        let critic_sizes = sizes(obs_dim + action_dim, &config.critic_hidden, 1);
        let critic1 = build_network(&critic_sizes, critic_topology, rng)?;
        let critic2 = build_network(&critic_sizes, critic_topology, rng)?;
        let adam = |net: &SparseNetwork| {
            AdamState::new(AdamConfig::new(config.learning_rate).with_weight_decay(config.weight_decay), &net.net.block_sizes())
        };
        Ok(Self {
            actor_opt: adam(&actor),
            critic1_opt: adam(&critic1),
            critic2_opt: adam(&critic2),
            alpha_opt: AdamState::new(AdamConfig::new(config.learning_rate), &[1]),
            log_alpha: config.init_alpha.ln(),
            target1: dense_copy(&critic1),
            target2: dense_copy(&critic2),
            replay: ReplayBuffer::new(config.replay_capacity),
            actor,
            critic1,
            critic2,
            action_dim,
            action_scale,
            config,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha
    }

    pub fn action_scale(&self) -> f64 {
        self.action_scale
    }

    fn target_entropy(&self) -> f64 {
        self.config.target_entropy.unwrap_or(-(self.action_dim as f64))
    }

    fn sample_policy(&self, actor_out: &Tensor2, rng: &mut RngStream) -> PolicySample {
        let (b, d) = (actor_out.rows(), self.action_dim);
        let mut s = PolicySample {
            eps: Vec::with_capacity(b * d),
            std: Vec::with_capacity(b * d),
            log_std_free: Vec::with_capacity(b * d),
            actions: Tensor2::zeros(b, d),
            log_prob: vec![0.0; b],
        };
        for r in 0..b {
            let row = actor_out.row(r);
            for j in 0..d {
                let raw = row[d + j];
                let log_std = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                let std = log_std.exp();
                let eps: f64 = StandardNormal.sample(rng);
                let u = row[j] + std * eps;
                s.log_prob[r] += -0.5 * eps * eps - log_std - HALF_LN_2PI + squash_correction(u);
                s.actions.set(r, j, u.tanh());
                s.eps.push(eps);
                s.std.push(std);
                s.log_std_free.push((LOG_STD_MIN..=LOG_STD_MAX).contains(&raw));
            }
        }
        s
    }

    fn normalized_actions(&self, batch: &[&Transition]) -> Result<Tensor2, AgentError> {
        let mut a = Tensor2::zeros(batch.len(), self.action_dim);
        for (b, t) in batch.iter().enumerate() {
            let Action::Continuous(u) = t.action else {
                return Err(AgentError::Config("SAC needs continuous actions".into()));
            };
            a.set(b, 0, u / self.action_scale);
        }
        Ok(a)
    }

    /// `y = r + γ(1 − terminal)(min Q̄(x', a') − α log π(a'|x'))` with `a'`
    /// drawn fresh from the current policy.
    pub fn critic_targets(&self, batch: &[&Transition], rng: &mut RngStream) -> Result<Vec<f64>, AgentError> {
        let next = stack_rows(batch.iter().map(|t| t.next_obs.clone()), self.actor.net.input_dim());
        let sample = self.sample_policy(&self.actor.net.forward(&next)?, rng);
        let input = next.hcat(&sample.actions)?;
        let q1 = self.target1.forward(&input)?;
        let q2 = self.target2.forward(&input)?;
        let alpha = self.alpha();
        Ok(batch
            .iter()
            .enumerate()
            .map(|(b, t)| {
                if t.terminal {
                    t.reward
                } else {
                    let soft = q1.get(b, 0).min(q2.get(b, 0)) - alpha * sample.log_prob[b];
                    t.reward + self.config.gamma * soft
                }
            })
            .collect())
    }

    /// Mean squared error of one critic against `targets`; returns the loss,
    /// the tape and the output gradient.
    fn critic_loss(critic: &SparseNetwork, input: &Tensor2, targets: &[f64]) -> Result<(f64, Tape, Tensor2), AgentError> {
        let tape = critic.net.forward_tape(input)?;
        let n = targets.len() as f64;
        let mut upstream = Tensor2::zeros(targets.len(), 1);
        let mut loss = 0.0;
        for (b, &y) in targets.iter().enumerate() {
            let delta = tape.output().get(b, 0) - y;
            loss += delta * delta / n;
            upstream.set(b, 0, 2.0 * delta / n);
        }
        Ok((loss, tape, upstream))
    }

    /// One update of both critics, the actor and the temperature on `batch`.
    pub fn update(&mut self, batch: &[&Transition], rng: &mut RngStream, opts: StepOptions) -> Result<StepReport, AgentError> {
        if batch.len() < 2 {
            return Err(AgentError::Config("SAC update needs at least two transitions".into()));
        }
        let n = batch.len() as f64;
        let backward = BackwardOptions { dense_weights: opts.dense_grads, input: false, deltas: opts.snr };
        let obs = stack_rows(batch.iter().map(|t| t.obs.clone()), self.actor.net.input_dim());
        let actions = self.normalized_actions(batch)?;
        let targets = self.critic_targets(batch, rng)?;
        let critic_input = obs.hcat(&actions)?;

        let mut dense = Vec::new();
        let mut snr = Vec::new();
        let mut critic_loss = 0.0;
        for k in 0..2 {
            let (critic, optimizer) = if k == 0 {
                (&mut self.critic1, &mut self.critic1_opt)
            } else {
                (&mut self.critic2, &mut self.critic2_opt)
            };
            let (loss, tape, upstream) = Self::critic_loss(critic, &critic_input, &targets)?;
            if !loss.is_finite() {
                return Err(AgentError::NonFinite { what: format!("critic {} loss", k + 1), dump: dump_batch(batch) });
            }
            let grads = critic.net.backward(&tape, &upstream, backward)?;
            if opts.snr {
                snr.push(network_snr(opts.step, &tape, &grads, n)?);
            }
            apply_gradients(critic, optimizer, &grads)?;
            if let Some(g) = grads.dense_weights {
                dense.push(g);
            }
            critic_loss += loss / 2.0;
        }

        let alpha = self.alpha();
        let actor_tape = self.actor.net.forward_tape(&obs)?;
        let sample = self.sample_policy(actor_tape.output(), rng);
        let q_input = obs.hcat(&sample.actions)?;
        let t1 = self.critic1.net.forward_tape(&q_input)?;
        let t2 = self.critic2.net.forward_tape(&q_input)?;
        let mut up1 = Tensor2::zeros(batch.len(), 1);
        let mut up2 = Tensor2::zeros(batch.len(), 1);
        let mut actor_loss = 0.0;
        for b in 0..batch.len() {
            let (q1, q2) = (t1.output().get(b, 0), t2.output().get(b, 0));
            if q1 <= q2 {
                up1.set(b, 0, -1.0 / n);
            } else {
                up2.set(b, 0, -1.0 / n);
            }
            actor_loss += (alpha * sample.log_prob[b] - q1.min(q2)) / n;
        }
        if !actor_loss.is_finite() {
            return Err(AgentError::NonFinite { what: "actor loss".into(), dump: dump_batch(batch) });
        }
        let input_only = BackwardOptions { dense_weights: false, input: true, deltas: false };
        let g1 = self.critic1.net.backward(&t1, &up1, input_only)?.input.expect("input gradient requested");
        let g2 = self.critic2.net.backward(&t2, &up2, input_only)?.input.expect("input gradient requested");
        let obs_dim = obs.cols();
        let d = self.action_dim;
        let mut upstream = Tensor2::zeros(batch.len(), 2 * d);
        for b in 0..batch.len() {
            for j in 0..d {
                let i = b * d + j;
                let dq_da = g1.get(b, obs_dim + j) + g2.get(b, obs_dim + j);
                let a = sample.actions.get(b, j);
                // d(log π)/du = 2·tanh(u); da/du = 1 − a².
                let du = alpha / n * 2.0 * a + dq_da * (1.0 - a * a);
                upstream.set(b, j, du);
                if sample.log_std_free[i] {
                    upstream.set(b, d + j, du * sample.std[i] * sample.eps[i] - alpha / n);
                }
            }
        }
        let grads = self.actor.net.backward(&actor_tape, &upstream, backward)?;
        if opts.snr {
            snr.insert(0, network_snr(opts.step, &actor_tape, &grads, n)?);
        }
        apply_gradients(&mut self.actor, &mut self.actor_opt, &grads)?;
        if let Some(g) = grads.dense_weights {
            dense.insert(0, g);
        }

        if self.config.learn_alpha {
            let mean_log_prob = sample.log_prob.iter().sum::<f64>() / n;
            let grad = -(mean_log_prob + self.target_entropy());
            let mut param = [self.log_alpha];
            self.alpha_opt.step(&mut [&mut param[..]], &[&[grad]])?;
            self.log_alpha = param[0];
        }

        Ok(StepReport {
            loss: critic_loss,
            dense_grads: opts.dense_grads.then_some(dense),
            snr: opts.snr.then_some(snr),
        })
    }

    /// `θ̄ ← τθ + (1 − τ)θ̄` for both target critics.
    pub fn polyak_update(&mut self) {
        let tau = self.config.tau;
        for (target, online) in [(&mut self.target1, &self.critic1), (&mut self.target2, &self.critic2)] {
            for (tb, ob) in target.param_blocks_mut().into_iter().zip(online.net.param_blocks()) {
                for (t, &o) in tb.iter_mut().zip(ob) {
                    *t = tau * o + (1.0 - tau) * *t;
                }
            }
        }
    }
}

impl Agent for SacAgent {
    fn act(&mut self, obs: &[f64], _env_step: u64, rng: &mut RngStream) -> Result<Action, AgentError> {
        if self.replay.len() < self.config.initial_collect {
            let s = self.action_scale;
            return Ok(Action::Continuous(rng.random_range(-s..=s)));
        }
        let out = self.actor.net.forward(&Tensor2::row_vector(obs))?;
        let sample = self.sample_policy(&out, rng);
        Ok(Action::Continuous(self.action_scale * sample.actions.get(0, 0)))
    }

    /// Mean action.
    fn act_eval(&self, obs: &[f64], _rng: &mut RngStream) -> Result<Action, AgentError> {
        let out = self.actor.net.forward(&Tensor2::row_vector(obs))?;
        Ok(Action::Continuous(self.action_scale * out.get(0, 0).tanh()))
    }

    fn observe(&mut self, transition: Transition) {
        self.replay.push(transition);
    }

    fn ready(&self) -> bool {
        self.replay.len() >= self.config.initial_collect.max(self.config.batch_size)
    }

    fn train_step(&mut self, rng: &mut RngStream, opts: StepOptions) -> Result<StepReport, AgentError> {
        let indices = self.replay.sample_indices(self.config.batch_size, rng);
        let batch: Vec<Transition> = indices.iter().map(|&i| self.replay.get(i).clone()).collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        self.update(&refs, rng, opts)
    }

    fn end_step(&mut self) {
        self.polyak_update();
    }

    fn trainable(&self) -> Vec<(&'static str, &SparseNetwork)> {
        vec![("actor", &self.actor), ("critic1", &self.critic1), ("critic2", &self.critic2)]
    }

    fn trainable_mut(&mut self) -> Vec<(&mut SparseNetwork, &mut AdamState)> {
        vec![
            (&mut self.actor, &mut self.actor_opt),
            (&mut self.critic1, &mut self.critic1_opt),
            (&mut self.critic2, &mut self.critic2_opt),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::Distribution;

    fn small_config() -> SacConfig {
        SacConfig { actor_hidden: vec![16], critic_hidden: vec![16], batch_size: 8, initial_collect: 8, ..SacConfig::default() }
    }

    fn filled(config: SacConfig, topology: Topology) -> SacAgent {
        let mut agent = SacAgent::new(3, 1, 2.0, config, topology, topology, &mut RngStream::new(0, "sac")).unwrap();
        let mut rng = RngStream::new(1, "data");
        for i in 0..16 {
            let obs: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let next: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            agent.observe(Transition {
                obs,
                action: Action::Continuous(rng.random_range(-2.0..2.0)),
                reward: rng.random_range(-1.0..0.0),
                next_obs: next,
                terminal: i == 15,
                truncated: false,
            });
        }
        agent
    }

    #[test]
    fn squashed_density_integrates_to_one() {
        for (mu, log_std) in [(0.0, 0.0), (0.7, -0.5), (-1.2, 0.3), (2.0, -1.0)] {
            // Midpoint rule over u; da = (1 − tanh²u) du.
            let (lo, hi, n) = (-12.0, 12.0, 200_000);
            let h = (hi - lo) / n as f64;
            let mut total = 0.0;
            for k in 0..n {
                let u: f64 = lo + (k as f64 + 0.5) * h;
                let t = u.tanh();
                total += squashed_log_prob(mu, log_std, u).exp() * (1.0 - t * t) * h;
            }
            assert!((total - 1.0).abs() < 1e-3, "mass {total} for ({mu}, {log_std})");
        }
    }

    #[test]
    fn squashed_density_matches_change_of_variables() {
        let (mu, log_std, u) = (0.3_f64, -0.2_f64, 0.9_f64);
        let sigma = log_std.exp();
        let gaussian = (-(u - mu).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        let direct = (gaussian / (1.0 - u.tanh().powi(2))).ln();
        assert!((squashed_log_prob(mu, log_std, u) - direct).abs() < 1e-12);
    }

    #[test]
    fn zero_discount_targets_are_rewards() {
        let config = SacConfig { gamma: 0.0, init_alpha: 0.0, learn_alpha: false, ..small_config() };
        let agent = filled(config, Topology::Dense);
        let batch: Vec<&Transition> = (0..8).map(|i| agent.replay.get(i)).collect();
        let y = agent.critic_targets(&batch, &mut RngStream::new(3, "t")).unwrap();
        for (t, y) in batch.iter().zip(y) {
            assert_eq!(y, t.reward);
        }
    }

    #[test]
    fn actions_stay_in_range() {
        let mut agent = filled(small_config(), Topology::Dense);
        let mut rng = RngStream::new(4, "act");
        for _ in 0..500 {
            let obs: Vec<f64> = (0..3).map(|_| rng.random_range(-50.0..50.0)).collect();
            let Action::Continuous(u) = agent.act(&obs, 100, &mut rng).unwrap() else { panic!() };
            assert!(u.abs() <= 2.0);
        }
    }

    #[test]
    fn polyak_is_exact_and_alpha_positive() {
        let topo = Topology::Sparse { sparsity: 0.5, distribution: Distribution::Uniform, sparsity_aware_init: true };
        let mut agent = filled(small_config(), topo);
        let mut rng = RngStream::new(5, "train");
        for _ in 0..20 {
            agent.train_step(&mut rng, StepOptions::default()).unwrap();
            let before = agent.target1.clone();
            agent.end_step();
            for ((t, b), o) in agent.target1.param_blocks().iter().zip(before.param_blocks()).zip(agent.critic1.net.param_blocks()) {
                for i in 0..t.len() {
                    assert_eq!(t[i], 0.005 * o[i] + 0.995 * b[i]);
                }
            }
            assert!(agent.alpha() > 0.0);
            for (_, net) in agent.trainable() {
                assert!(net.is_consistent());
            }
        }
    }

    #[test]
    fn learns_toward_higher_reward_action() {
        // Reward is the action itself, so the mean action should rise.
        let config = SacConfig { gamma: 0.0, learning_rate: 3e-3, ..small_config() };
        let mut agent = SacAgent::new(1, 1, 2.0, config, Topology::Dense, Topology::Dense, &mut RngStream::new(0, "sac")).unwrap();
        let mut rng = RngStream::new(1, "data");
        for _ in 0..256 {
            let u: f64 = rng.random_range(-2.0..2.0);
            agent.observe(Transition { obs: vec![0.0], action: Action::Continuous(u), reward: u, next_obs: vec![0.0], terminal: true, truncated: false });
        }
        for _ in 0..600 {
            agent.train_step(&mut rng, StepOptions::default()).unwrap();
            agent.end_step();
        }
        let Action::Continuous(mean) = agent.act_eval(&[0.0], &mut rng).unwrap() else { panic!() };
        assert!(mean > 1.0, "mean action {mean}");
    }
}
