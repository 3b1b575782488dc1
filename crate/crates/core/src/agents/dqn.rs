use rand::Rng;

use crate::envs::{Action, Transition};
use crate::numerics::{AdamConfig, AdamState, BackwardOptions, RngStream, Tape, Tensor2};
use crate::sparse::{network_snr, SparseNetwork};

use super::{apply_gradients, build_network, dump_batch, stack_rows, uniform_action, Agent, AgentError, ReplayBuffer, StepOptions, StepReport, Topology};

#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub initial_collect: usize,
    /// Gradient steps between hard target copies.
    pub target_update_interval: u64,
    pub epsilon_decay_period: u64,
    pub final_epsilon: f64,
    pub eval_epsilon: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![512, 512],
            gamma: 0.99,
            learning_rate: 1e-3,
            weight_decay: 1e-6,
            batch_size: 128,
            replay_capacity: 100_000,
            initial_collect: 1000,
            target_update_interval: 100,
            epsilon_decay_period: 25_000,
            final_epsilon: 0.1,
            eval_epsilon: 0.1,
        }
    }
}

/// 1 during the first `warmup` steps, then linear down to `final_epsilon`
/// over `decay_period` steps.
pub fn linear_epsilon(step: u64, warmup: u64, decay_period: u64, final_epsilon: f64) -> f64 {
    let progress = (step.saturating_sub(warmup)) as f64 / decay_period as f64;
    if progress >= 1.0 {
        return final_epsilon;
    }
    1.0 - (1.0 - final_epsilon) * progress
}

/// Argmax (lowest index on ties) with probability `1 − ε`, otherwise a
/// uniformly random action. Always consumes one draw before deciding.
pub fn epsilon_greedy(q_values: &[f64], epsilon: f64, rng: &mut RngStream) -> Result<usize, AgentError> {
    if q_values.is_empty() {
        return Err(AgentError::Empty("q-values"));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(AgentError::Config(format!("epsilon {epsilon} outside [0, 1]")));
    }
    if rng.random::<f64>() < epsilon {
        return Ok(uniform_action(q_values.len(), rng));
    }
    let mut best = 0;
    for (i, &q) in q_values.iter().enumerate().skip(1) {
        if q > q_values[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Squared TD error of one batch and its gradient with respect to the
/// online network's output.
#[derive(Debug, Clone)]
pub struct TdLoss {
    pub loss: f64,
    /// `Q(x, a) − y` per transition.
    pub residuals: Vec<f64>,
    /// `2δ/B` at the taken action, zero elsewhere.
    pub upstream: Tensor2,
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub config: DqnConfig,
    pub online: SparseNetwork,
    pub target: SparseNetwork,
    pub replay: ReplayBuffer,
    optimizer: AdamState,
    num_actions: usize,
    gradient_steps: u64,
}

impl DqnAgent {
    pub fn new(obs_dim: usize, num_actions: usize, config: DqnConfig, topology: Topology, rng: &mut RngStream) -> Result<Self, AgentError> {
        if num_actions == 0 || config.batch_size == 0 || config.target_update_interval == 0 {
            return Err(AgentError::Config("actions, batch size and target interval must be positive".into()));
        }
        let mut sizes = vec![obs_dim];
        sizes.extend(&config.hidden);
        sizes.push(num_actions);
        let online = build_network(&sizes, topology, rng)?;
        let optimizer = AdamState::new(
            AdamConfig::new(config.learning_rate).with_weight_decay(config.weight_decay),
            &online.net.block_sizes(),
        );
        Ok(Self {
            target: online.clone(),
            replay: ReplayBuffer::new(config.replay_capacity),
            online,
            optimizer,
            num_actions,
            gradient_steps: 0,
            config,
        })
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gradient_steps(&self) -> u64 {
        self.gradient_steps
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>, AgentError> {
        Ok(self.online.net.forward(&Tensor2::row_vector(obs))?.into_vec())
    }

    pub fn epsilon_at(&self, env_step: u64) -> f64 {
        linear_epsilon(env_step, self.config.initial_collect as u64, self.config.epsilon_decay_period, self.config.final_epsilon)
    }

    /// Copies the online network into the target.
    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    pub fn td_loss(&self, batch: &[&Transition]) -> Result<TdLoss, AgentError> {
        self.td_loss_with_tape(batch).map(|(loss, _)| loss)
    }

    fn td_loss_with_tape(&self, batch: &[&Transition]) -> Result<(TdLoss, Tape), AgentError> {
        if batch.is_empty() {
            return Err(AgentError::Empty("batch"));
        }
        let obs_dim = self.online.net.input_dim();
        let obs = stack_rows(batch.iter().map(|t| t.obs.clone()), obs_dim);
        let next = stack_rows(batch.iter().map(|t| t.next_obs.clone()), obs_dim);
        let tape = self.online.net.forward_tape(&obs)?;
        let q_next = self.target.net.forward(&next)?;
        let n = batch.len() as f64;
        let mut residuals = Vec::with_capacity(batch.len());
        let mut upstream = Tensor2::zeros(batch.len(), self.num_actions);
        for (b, t) in batch.iter().enumerate() {
            let Action::Discrete(a) = t.action else {
                return Err(AgentError::Config("DQN needs discrete actions".into()));
            };
            let bootstrap = if t.terminal {
                0.0
            } else {
                q_next.row(b).iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            let y = t.reward + self.config.gamma * bootstrap;
            let delta = tape.output().get(b, a) - y;
            residuals.push(delta);
            upstream.set(b, a, 2.0 * delta / n);
        }
        let loss = residuals.iter().map(|d| d * d).sum::<f64>() / n;
        if !loss.is_finite() {
            return Err(AgentError::NonFinite { what: "TD loss".into(), dump: dump_batch(batch) });
        }
        Ok((TdLoss { loss, residuals, upstream }, tape))
    }

    /// One gradient step on `batch` (no target sync).
    pub fn train_on(&mut self, batch: &[&Transition], opts: StepOptions) -> Result<StepReport, AgentError> {
        let (td, tape) = self.td_loss_with_tape(batch)?;
        let grads = self.online.net.backward(
            &tape,
            &td.upstream,
            BackwardOptions { dense_weights: opts.dense_grads, input: false, deltas: opts.snr },
        )?;
        let snr = if opts.snr { Some(vec![network_snr(opts.step, &tape, &grads, batch.len() as f64)?]) } else { None };
        apply_gradients(&mut self.online, &mut self.optimizer, &grads)?;
        self.gradient_steps += 1;
        Ok(StepReport { loss: td.loss, dense_grads: grads.dense_weights.map(|g| vec![g]), snr })
    }
}

impl Agent for DqnAgent {
    fn act(&mut self, obs: &[f64], env_step: u64, rng: &mut RngStream) -> Result<Action, AgentError> {
        let eps = self.epsilon_at(env_step);
        let q = self.q_values(obs)?;
        Ok(Action::Discrete(epsilon_greedy(&q, eps, rng)?))
    }

    fn act_eval(&self, obs: &[f64], rng: &mut RngStream) -> Result<Action, AgentError> {
        let q = self.q_values(obs)?;
        Ok(Action::Discrete(epsilon_greedy(&q, self.config.eval_epsilon, rng)?))
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
        self.train_on(&refs, opts)
    }

    fn end_step(&mut self) {
        if self.gradient_steps > 0 && self.gradient_steps % self.config.target_update_interval == 0 {
            self.sync_target();
        }
    }

    fn trainable(&self) -> Vec<(&'static str, &SparseNetwork)> {
        vec![("q", &self.online)]
    }

    fn trainable_mut(&mut self) -> Vec<(&mut SparseNetwork, &mut AdamState)> {
        vec![(&mut self.online, &mut self.optimizer)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Layer, Mlp};

    /// One linear layer mapping a single feature to two Q-values.
    fn agent_with_linear(w: [f64; 2], target_w: [f64; 2]) -> DqnAgent {
        let config = DqnConfig { hidden: vec![], ..DqnConfig::default() };
        let mut agent = DqnAgent::new(1, 2, config, Topology::Dense, &mut RngStream::new(0, "dqn")).unwrap();
        let layer = |w: [f64; 2]| Layer::new(Tensor2::from_rows(&[&w]).unwrap(), vec![0.0, 0.0]).unwrap();
        agent.online = SparseNetwork::dense(Mlp::from_layers(vec![layer(w)]).unwrap());
        agent.target = SparseNetwork::dense(Mlp::from_layers(vec![layer(target_w)]).unwrap());
        agent
    }

    fn t(obs: f64, action: usize, reward: f64, terminal: bool) -> Transition {
        Transition { obs: vec![obs], action: Action::Discrete(action), reward, next_obs: vec![1.0], terminal, truncated: false }
    }

    #[test]
    fn td_fixed_point() {
        let agent = agent_with_linear([1.0, 0.0], [0.0, 0.0]);
        let tr = t(1.0, 0, 1.0, true);
        let td = agent.td_loss(&[&tr]).unwrap();
        assert_eq!(td.residuals, vec![0.0]);
        assert_eq!(td.loss, 0.0);
        assert!(td.upstream.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn td_terminal_uses_reward_only() {
        let agent = agent_with_linear([2.0, 0.0], [100.0, 100.0]);
        let tr = t(1.0, 0, 0.0, true);
        assert_eq!(agent.td_loss(&[&tr]).unwrap().loss, 4.0);
    }

    #[test]
    fn td_bootstrapped() {
        let agent = agent_with_linear([0.0, 0.0], [2.0, -1.0]);
        let tr = t(1.0, 1, 1.0, false);
        let td = agent.td_loss(&[&tr]).unwrap();
        assert!((td.residuals[0] - -2.98).abs() < 1e-12);
        assert!((td.loss - 8.8804).abs() < 1e-12);
        assert_eq!(td.upstream.row(0), &[0.0, 2.0 * -2.98]);
    }

    #[test]
    fn non_finite_loss_reports_batch() {
        let agent = agent_with_linear([f64::INFINITY, 0.0], [0.0, 0.0]);
        let tr = t(1.0, 0, 0.0, true);
        assert!(matches!(agent.td_loss(&[&tr]), Err(AgentError::NonFinite { .. })));
    }

    #[test]
    fn greedy_ties_and_bounds() {
        let mut rng = RngStream::new(0, "eps");
        assert_eq!(epsilon_greedy(&[1.0, 3.0, 3.0], 0.0, &mut rng).unwrap(), 1);
        assert!(epsilon_greedy(&[], 0.0, &mut rng).is_err());
        assert!(epsilon_greedy(&[1.0], 1.5, &mut rng).is_err());
    }

    #[test]
    fn uniform_when_fully_random() {
        let mut rng = RngStream::new(5, "eps");
        let mut counts = [0usize; 3];
        let n = 100_000;
        for _ in 0..n {
            counts[epsilon_greedy(&[0.0, 1.0, 2.0], 1.0, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 * 3.0 - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn epsilon_schedule() {
        assert_eq!(linear_epsilon(0, 1000, 25_000, 0.1), 1.0);
        assert_eq!(linear_epsilon(1000, 1000, 25_000, 0.1), 1.0);
        assert!((linear_epsilon(13_500, 1000, 25_000, 0.1) - 0.55).abs() < 1e-12);
        assert_eq!(linear_epsilon(26_000, 1000, 25_000, 0.1), 0.1);
        assert_eq!(linear_epsilon(90_000, 1000, 25_000, 0.1), 0.1);
    }

    #[test]
    fn target_changes_only_at_sync() {
        let config = DqnConfig { hidden: vec![8], batch_size: 4, initial_collect: 4, target_update_interval: 3, ..DqnConfig::default() };
        let mut agent = DqnAgent::new(2, 2, config, Topology::Dense, &mut RngStream::new(1, "dqn")).unwrap();
        for i in 0..8 {
            let x = i as f64 / 8.0;
            agent.observe(Transition {
                obs: vec![x, -x],
                action: Action::Discrete(i % 2),
                reward: x,
                next_obs: vec![-x, x],
                terminal: i == 7,
                truncated: false,
            });
        }
        let mut rng = RngStream::new(1, "replay");
        let before = agent.target.clone();
        for step in 1..=3 {
            agent.train_step(&mut rng, StepOptions::default()).unwrap();
            agent.end_step();
            if step < 3 {
                assert_eq!(agent.target, before);
            }
        }
        assert_eq!(agent.target, agent.online);
        assert_ne!(agent.target, before);
    }
}
