//! Classic-control tasks (CartPole, Acrobot, MountainCar), a pendulum
//! swing-up task for continuous control, and observation noise.
//!
//! Environments are plain state machines: [`env_reset`] draws an initial
//! [`EnvState`] and [`env_step`] maps `(state, action)` to the next state
//! deterministically.

pub mod constants;
mod dynamics;
mod noise;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::RngStream;

pub use dynamics::acrobot_energy;
pub use noise::{add_observation_noise, NoiseSpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("unknown environment '{0}'")]
    UnknownEnv(String),
    #[error("invalid action {action} for {env}")]
    InvalidAction { env: EnvKind, action: String },
    #[error("episode already ended; reset before stepping")]
    EpisodeOver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    CartPole,
    Acrobot,
    MountainCar,
    Pendulum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionSpace {
    Discrete(usize),
    /// Box `[−scale, scale]^dim`.
    Continuous { dim: usize, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(f64),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Discrete(a) => write!(f, "{a}"),
            Action::Continuous(u) => write!(f, "{u}"),
        }
    }
}

impl EnvKind {
    pub const ALL: [EnvKind; 4] = [EnvKind::CartPole, EnvKind::Acrobot, EnvKind::MountainCar, EnvKind::Pendulum];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::CartPole => "cart-pole",
            EnvKind::Acrobot => "acrobot",
            EnvKind::MountainCar => "mountain-car",
            EnvKind::Pendulum => "pendulum",
        }
    }

    pub fn obs_dim(self) -> usize {
        match self {
            EnvKind::CartPole => 4,
            EnvKind::Acrobot => 6,
            EnvKind::MountainCar => 2,
            EnvKind::Pendulum => 3,
        }
    }

    pub fn action_space(self) -> ActionSpace {
        match self {
            EnvKind::CartPole => ActionSpace::Discrete(2),
            EnvKind::Acrobot | EnvKind::MountainCar => ActionSpace::Discrete(3),
            EnvKind::Pendulum => ActionSpace::Continuous { dim: 1, scale: constants::pendulum::MAX_TORQUE },
        }
    }

    pub fn max_steps(self) -> u32 {
        match self {
            EnvKind::CartPole => constants::cartpole::MAX_STEPS,
            EnvKind::Acrobot => constants::acrobot::MAX_STEPS,
            EnvKind::MountainCar => constants::mountain_car::MAX_STEPS,
            EnvKind::Pendulum => constants::pendulum::MAX_STEPS,
        }
    }

    /// Per-feature half-range used to scale observation noise.
    pub fn feature_half_width(self) -> &'static [f64] {
        match self {
            EnvKind::CartPole => &constants::cartpole::FEATURE_HALF_WIDTH,
            EnvKind::Acrobot => &constants::acrobot::FEATURE_HALF_WIDTH,
            EnvKind::MountainCar => &constants::mountain_car::FEATURE_HALF_WIDTH,
            EnvKind::Pendulum => &constants::pendulum::FEATURE_HALF_WIDTH,
        }
    }

    /// Lowest achievable episode return; the zero point for score
    /// normalisation.
    pub fn return_floor(self) -> f64 {
        match self {
            EnvKind::CartPole => 0.0,
            EnvKind::Acrobot => -(constants::acrobot::MAX_STEPS as f64),
            EnvKind::MountainCar => -(constants::mountain_car::MAX_STEPS as f64),
            EnvKind::Pendulum => {
                use constants::pendulum::*;
                let worst = std::f64::consts::PI.powi(2) + 0.1 * MAX_SPEED.powi(2) + 0.001 * MAX_TORQUE.powi(2);
                -worst * MAX_STEPS as f64
            }
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EnvKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| EnvError::UnknownEnv(s.to_string()))
    }
}

/// Physical state of one episode plus its step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub kind: EnvKind,
    /// CartPole: x, ẋ, θ, θ̇. Acrobot: θ₁, θ₂, θ̇₁, θ̇₂. MountainCar:
    /// position, velocity. Pendulum: θ, θ̇.
    pub features: Vec<f64>,
    pub steps: u32,
    pub done: bool,
}

impl EnvState {
    /// What the agent sees.
    pub fn observation(&self) -> Vec<f64> {
        match self.kind {
            EnvKind::CartPole | EnvKind::MountainCar => self.features.clone(),
            EnvKind::Acrobot => {
                let s = &self.features;
                vec![s[0].cos(), s[0].sin(), s[1].cos(), s[1].sin(), s[2], s[3]]
            }
            EnvKind::Pendulum => {
                let s = &self.features;
                vec![s[0].cos(), s[0].sin(), s[1]]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: EnvState,
    pub reward: f64,
    pub terminal: bool,
    /// Time limit reached without termination.
    pub truncated: bool,
}

/// One stored experience tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// Bootstrapping stops only at true termination, not at truncation.
    pub terminal: bool,
    pub truncated: bool,
}

pub fn env_reset(kind: EnvKind, rng: &mut RngStream) -> EnvState {
    use std::f64::consts::PI;
    let features = match kind {
        EnvKind::CartPole => {
            let b = constants::cartpole::RESET_BOUND;
            (0..4).map(|_| rng.random_range(-b..=b)).collect()
        }
        EnvKind::Acrobot => {
            let b = constants::acrobot::RESET_BOUND;
            (0..4).map(|_| rng.random_range(-b..=b)).collect()
        }
        EnvKind::MountainCar => {
            use constants::mountain_car::{RESET_HIGH, RESET_LOW};
            vec![rng.random_range(RESET_LOW..=RESET_HIGH), 0.0]
        }
        EnvKind::Pendulum => {
            let v = constants::pendulum::RESET_VELOCITY;
            vec![rng.random_range(-PI..=PI), rng.random_range(-v..=v)]
        }
    };
    EnvState { kind, features, steps: 0, done: false }
}

pub fn env_step(state: &EnvState, action: Action) -> Result<StepOutcome, EnvError> {
    if state.done {
        return Err(EnvError::EpisodeOver);
    }
    let invalid = || EnvError::InvalidAction { env: state.kind, action: action.to_string() };
    let (features, reward, terminal) = match (state.kind, action) {
        (EnvKind::CartPole, Action::Discrete(a)) if a < 2 => dynamics::cartpole(&state.features, a),
        (EnvKind::Acrobot, Action::Discrete(a)) if a < 3 => dynamics::acrobot(&state.features, a),
        (EnvKind::MountainCar, Action::Discrete(a)) if a < 3 => dynamics::mountain_car(&state.features, a),
        (EnvKind::Pendulum, Action::Continuous(u)) if u.is_finite() && u.abs() <= constants::pendulum::MAX_TORQUE => {
            dynamics::pendulum(&state.features, u)
        }
        _ => return Err(invalid()),
    };
    let steps = state.steps + 1;
    let truncated = !terminal && steps >= state.kind.max_steps();
    Ok(StepOutcome {
        next: EnvState { kind: state.kind, features, steps, done: terminal || truncated },
        reward,
        terminal,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_names() {
        for k in EnvKind::ALL {
            assert_eq!(k.name().parse::<EnvKind>().unwrap(), k);
        }
        assert!(matches!("pong".parse::<EnvKind>(), Err(EnvError::UnknownEnv(_))));
    }

    #[test]
    fn mountain_car_reset_velocity_zero() {
        let s = env_reset(EnvKind::MountainCar, &mut RngStream::new(1, "env"));
        assert_eq!(s.features[1], 0.0);
        assert!((-0.6..=-0.4).contains(&s.features[0]));
    }

    #[test]
    fn cartpole_reset_bounds_and_determinism() {
        let mut rng = RngStream::new(4, "env");
        for _ in 0..100 {
            let s = env_reset(EnvKind::CartPole, &mut rng);
            assert!(s.features.iter().all(|v| v.abs() <= 0.05));
        }
        let a = env_reset(EnvKind::CartPole, &mut RngStream::new(9, "env"));
        let b = env_reset(EnvKind::CartPole, &mut RngStream::new(9, "env"));
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_actions() {
        let s = env_reset(EnvKind::CartPole, &mut RngStream::new(1, "env"));
        assert!(matches!(env_step(&s, Action::Discrete(2)), Err(EnvError::InvalidAction { .. })));
        assert!(env_step(&s, Action::Continuous(0.0)).is_err());
        let p = env_reset(EnvKind::Pendulum, &mut RngStream::new(1, "env"));
        assert!(env_step(&p, Action::Continuous(2.5)).is_err());
        assert!(env_step(&p, Action::Continuous(f64::NAN)).is_err());
        assert!(env_step(&p, Action::Discrete(0)).is_err());
    }

    #[test]
    fn no_step_after_end() {
        let mut s = env_reset(EnvKind::MountainCar, &mut RngStream::new(1, "env"));
        let mut n = 0;
        while !s.done {
            s = env_step(&s, Action::Discrete(1)).unwrap().next;
            n += 1;
        }
        assert_eq!(n, 200);
        assert_eq!(env_step(&s, Action::Discrete(1)), Err(EnvError::EpisodeOver));
    }
}
