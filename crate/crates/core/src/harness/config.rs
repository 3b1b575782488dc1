//! Experiment configuration files.
//!
//! A config is a TOML document with four sections. Only `[run]` is
//! required; everything else falls back to per-agent, per-regime defaults
//! when the config is resolved.
//!
//! ```toml
//! [run]
//! agent = "dqn"            # dqn | sac
//! env = "cart-pole"        # cart-pole | acrobot | mountain-car | pendulum
//! regime = "rigl"          # dense | dense-scaled | prune | static | set | rigl
//! seed = 0
//! total_steps = 100000     # environment steps
//! eval_interval = 2000     # environment steps between evaluations
//! eval_episodes = 20
//!
//! [sparsity]               # not allowed for the dense regime
//! sparsity = 0.9           # final sparsity (prune) or matched sparsity (dense-scaled)
//! distribution = "erk"     # uniform | erk; static, set, rigl and dense-scaled only
//! sparsity_aware_init = true   # prune, static, set, rigl
//!
//! [topology]
//! update_interval = 1000   # prune, set, rigl
//! drop_fraction = 0.5      # set, rigl
//! snr_interval = 1000      # gradient SNR logging cadence, any regime
//!
//! [training]
//! weight_decay = 1e-6
//! learning_rate = 1e-3
//! gamma = 0.99
//! batch_size = 128
//! replay_capacity = 100000
//! initial_collect = 1000
//! hidden = [512, 512]      # base widths before any dense-scaled shrinking
//! target_update_interval = 100   # dqn only
//! epsilon_decay_period = 25000   # dqn only
//! ```
//!
//! Unknown keys are errors. Keys that do not apply to the chosen agent or
//! regime are errors too.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{DqnConfig, SacConfig};
use crate::envs::{ActionSpace, EnvKind};
use crate::sparse::Distribution;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Dqn,
    Sac,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Dense,
    /// Dense network narrowed to the active parameter count of a sparse one.
    DenseScaled,
    Prune,
    Static,
    Set,
    Rigl,
}

impl Regime {
    pub const ALL: [Regime; 6] = [Regime::Dense, Regime::DenseScaled, Regime::Prune, Regime::Static, Regime::Set, Regime::Rigl];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Dense => "dense",
            Regime::DenseScaled => "dense-scaled",
            Regime::Prune => "prune",
            Regime::Static => "static",
            Regime::Set => "set",
            Regime::Rigl => "rigl",
        }
    }

    pub fn is_dynamic(self) -> bool {
        matches!(self, Regime::Set | Regime::Rigl)
    }

    fn masked_from_start(self) -> bool {
        matches!(self, Regime::Static | Regime::Set | Regime::Rigl)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Dqn => "dqn",
            AgentKind::Sac => "sac",
        })
    }
}

fn default_seed() -> u64 {
    0
}
fn default_total_steps() -> u64 {
    100_000
}
fn default_eval_interval() -> u64 {
    2_000
}
fn default_eval_episodes() -> u32 {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub agent: AgentKind,
    pub env: EnvKind,
    pub regime: Regime,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_total_steps")]
    pub total_steps: u64,
    #[serde(default = "default_eval_interval")]
    pub eval_interval: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsitySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<Distribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity_aware_init: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update_interval: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_interval: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_capacity: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_collect: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_update_interval: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_decay_period: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunSection,
    #[serde(default)]
    pub sparsity: SparsitySection,
    #[serde(default)]
    pub topology: TopologySection,
    #[serde(default)]
    pub training: TrainingSection,
}

/// Best settings per agent and regime: weight decay, update interval, drop
/// fraction, sparsity-aware init.
fn tuned_defaults(agent: AgentKind, regime: Regime) -> (f64, Option<u64>, Option<f64>, Option<bool>) {
    use Regime::*;
    match (agent, regime) {
        (AgentKind::Dqn, Dense | DenseScaled) => (1e-6, None, None, None),
        (AgentKind::Dqn, Prune) => (1e-6, Some(1000), None, Some(true)),
        (AgentKind::Dqn, Static) => (1e-6, None, None, Some(true)),
        (AgentKind::Dqn, Set | Rigl) => (1e-6, Some(1000), Some(0.5), Some(true)),
        (AgentKind::Sac, Dense | DenseScaled) => (1e-4, None, None, None),
        (AgentKind::Sac, Prune) => (1e-4, Some(1000), None, Some(true)),
        (AgentKind::Sac, Static) => (1e-4, None, None, Some(false)),
        (AgentKind::Sac, Rigl) => (1e-6, Some(1000), Some(0.5), Some(true)),
        (AgentKind::Sac, Set) => (1e-4, Some(250), Some(0.3), Some(true)),
    }
}

fn reject<T>(field: &Option<T>, name: &str, context: &str) -> Result<(), ConfigError> {
    if field.is_some() {
        return Err(ConfigError::Invalid(format!("`{name}` does not apply to {context}")));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses and resolves a config file's contents.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        raw.resolve()
    }

    /// Validates the config and fills every applicable field with its default.
    pub fn resolve(&self) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        let run = &c.run;
        let (agent, regime) = (run.agent, run.regime);
        let context = format!("agent {agent} with regime {regime}");

        match (agent, run.env.action_space()) {
            (AgentKind::Dqn, ActionSpace::Discrete(_)) | (AgentKind::Sac, ActionSpace::Continuous { .. }) => {}
            _ => return Err(ConfigError::Invalid(format!("agent {agent} cannot act in {}", run.env))),
        }
        if run.total_steps == 0 || run.eval_interval == 0 || run.eval_episodes == 0 {
            return Err(ConfigError::Invalid("total_steps, eval_interval and eval_episodes must be positive".into()));
        }
        if run.eval_interval > run.total_steps {
            return Err(ConfigError::Invalid("eval_interval exceeds total_steps".into()));
        }

        let (wd, interval, drop, init) = tuned_defaults(agent, regime);
        let s = &mut c.sparsity;
        match regime {
            Regime::Dense => {
                reject(&s.sparsity, "sparsity", &context)?;
                reject(&s.distribution, "distribution", &context)?;
                reject(&s.sparsity_aware_init, "sparsity_aware_init", &context)?;
            }
            Regime::DenseScaled => {
                reject(&s.sparsity_aware_init, "sparsity_aware_init", &context)?;
                s.distribution.get_or_insert(Distribution::Erk);
            }
            Regime::Prune => {
                reject(&s.distribution, "distribution", &context)?;
                s.sparsity_aware_init = s.sparsity_aware_init.or(init);
            }
            Regime::Static | Regime::Set | Regime::Rigl => {
                s.distribution.get_or_insert(Distribution::Erk);
                s.sparsity_aware_init = s.sparsity_aware_init.or(init);
            }
        }
        if regime != Regime::Dense {
            match s.sparsity {
                None => return Err(ConfigError::Invalid(format!("regime {regime} needs `sparsity`"))),
                Some(v) if !(v > 0.0 && v < 1.0) => {
                    return Err(ConfigError::Invalid(format!("sparsity {v} outside (0, 1)")));
                }
                _ => {}
            }
        }

        let t = &mut c.topology;
        if interval.is_none() {
            reject(&t.update_interval, "update_interval", &context)?;
        } else {
            t.update_interval = t.update_interval.or(interval);
        }
        if drop.is_none() {
            reject(&t.drop_fraction, "drop_fraction", &context)?;
        } else {
            t.drop_fraction = t.drop_fraction.or(drop);
        }
        t.snr_interval = t.snr_interval.or(t.update_interval).or(Some(1000));
        if t.update_interval == Some(0) || t.snr_interval == Some(0) {
            return Err(ConfigError::Invalid("intervals must be positive".into()));
        }
        if let Some(f) = t.drop_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(ConfigError::Invalid(format!("drop fraction {f} outside [0, 1]")));
            }
        }

        let tr = &mut c.training;
        tr.weight_decay = tr.weight_decay.or(Some(wd));
        match agent {
            AgentKind::Dqn => {
                let d = DqnConfig::default();
                tr.learning_rate = tr.learning_rate.or(Some(d.learning_rate));
                tr.gamma = tr.gamma.or(Some(d.gamma));
                tr.batch_size = tr.batch_size.or(Some(d.batch_size));
                tr.replay_capacity = tr.replay_capacity.or(Some(d.replay_capacity));
                tr.initial_collect = tr.initial_collect.or(Some(d.initial_collect));
                tr.hidden = tr.hidden.take().or(Some(d.hidden));
                tr.target_update_interval = tr.target_update_interval.or(Some(d.target_update_interval));
                tr.epsilon_decay_period = tr.epsilon_decay_period.or(Some(d.epsilon_decay_period));
            }
            AgentKind::Sac => {
                reject(&tr.target_update_interval, "target_update_interval", "sac")?;
                reject(&tr.epsilon_decay_period, "epsilon_decay_period", "sac")?;
                let d = SacConfig::default();
                tr.learning_rate = tr.learning_rate.or(Some(d.learning_rate));
                tr.gamma = tr.gamma.or(Some(d.gamma));
                tr.batch_size = tr.batch_size.or(Some(d.batch_size));
                tr.replay_capacity = tr.replay_capacity.or(Some(d.replay_capacity));
                tr.initial_collect = tr.initial_collect.or(Some(d.initial_collect));
                tr.hidden = tr.hidden.take().or(Some(d.actor_hidden));
            }
        }
        let hidden = tr.hidden.as_ref().expect("filled above");
        if hidden.is_empty() || hidden.contains(&0) {
            return Err(ConfigError::Invalid("hidden widths must be nonempty and positive".into()));
        }
        if tr.batch_size == Some(0) || tr.replay_capacity == Some(0) {
            return Err(ConfigError::Invalid("batch_size and replay_capacity must be positive".into()));
        }
        Ok(c)
    }

    /// Key-sorted TOML text; identical configs give identical text.
    pub fn canonical_text(&self) -> String {
        let value = toml::Value::try_from(self).expect("config serialises");
        toml::to_string(&value).expect("toml value serialises")
    }

    /// SHA-256 of [`Self::canonical_text`], hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }

    pub fn sparsity(&self) -> Option<f64> {
        self.sparsity.sparsity
    }

    pub fn distribution(&self) -> Option<Distribution> {
        self.sparsity.distribution
    }

    pub fn weight_decay(&self) -> f64 {
        self.training.weight_decay.unwrap_or(0.0)
    }

    pub fn hidden(&self) -> Vec<usize> {
        self.training.hidden.clone().unwrap_or_default()
    }

    pub fn snr_interval(&self) -> u64 {
        self.topology.snr_interval.unwrap_or(1000)
    }

    /// Whether the networks carry a mask from step 0.
    pub fn masked_from_start(&self) -> bool {
        self.run.regime.masked_from_start()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RIGL: &str = r#"
[run]
agent = "dqn"
env = "acrobot"
regime = "rigl"

[sparsity]
sparsity = 0.9
"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_toml_str(RIGL).unwrap();
        assert_eq!(c.training.weight_decay, Some(1e-6));
        assert_eq!(c.topology.update_interval, Some(1000));
        assert_eq!(c.topology.drop_fraction, Some(0.5));
        assert_eq!(c.sparsity.sparsity_aware_init, Some(true));
        assert_eq!(c.sparsity.distribution, Some(Distribution::Erk));
        assert_eq!(c.run.total_steps, 100_000);
        assert_eq!(c.run.eval_interval, 2_000);
        assert_eq!(c.run.eval_episodes, 20);
    }

    #[test]
    fn canonical_round_trip() {
        let c = ExperimentConfig::from_toml_str(RIGL).unwrap();
        let text = c.canonical_text();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.canonical_text(), text);
        assert_eq!(back.content_hash(), c.content_hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{RIGL}\nbogus = 1\n");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(ConfigError::Parse(_))));
        let text = RIGL.replace("[sparsity]", "[sparsity]\nlevel = 3");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn regime_specific_fields() {
        let text = RIGL.replace("rigl", "static") + "\n[topology]\ndrop_fraction = 0.3\n";
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(ConfigError::Invalid(_))));
        let dense = "[run]\nagent = \"dqn\"\nenv = \"cart-pole\"\nregime = \"dense\"\n[sparsity]\nsparsity = 0.5\n";
        assert!(ExperimentConfig::from_toml_str(dense).is_err());
        let no_sparsity = "[run]\nagent = \"dqn\"\nenv = \"cart-pole\"\nregime = \"set\"\n";
        assert!(ExperimentConfig::from_toml_str(no_sparsity).is_err());
    }

    #[test]
    fn agent_env_compatibility() {
        let text = RIGL.replace("acrobot", "pendulum");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
        let sac = RIGL.replace("dqn", "sac").replace("acrobot", "pendulum");
        let c = ExperimentConfig::from_toml_str(&sac).unwrap();
        assert_eq!(c.training.weight_decay, Some(1e-6));
        assert_eq!(c.training.batch_size, Some(256));
    }

    #[test]
    fn hash_changes_with_seed() {
        let a = ExperimentConfig::from_toml_str(RIGL).unwrap();
        let mut b = a.clone();
        b.run.seed = 1;
        assert_ne!(a.content_hash(), b.content_hash());
    }
}
