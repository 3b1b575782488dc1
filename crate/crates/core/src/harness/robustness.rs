use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Action, ActionSpace, EnvKind, NoiseSpec};
use crate::numerics::RngStream;

use super::policy::{evaluate_episodes, Policy};
use super::train::mean_std;
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPoint {
    pub sigma: f64,
    pub mean_return: f64,
    pub std_return: f64,
    pub episodes: u32,
}

fn sigma_stream(seed: u64, sigma: f64) -> RngStream {
    RngStream::new(seed, format!("robustness/{sigma}"))
}

/// Evaluates a frozen policy under observation noise at each `σ`. Every
/// noise level draws from its own streams, so results do not depend on
/// which other levels are evaluated.
pub fn noise_robustness_eval(policy: &Policy, sigmas: &[f64], episodes: u32, seed: u64) -> Result<Vec<RobustnessPoint>, HarnessError> {
    sigmas
        .iter()
        .map(|&sigma| {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(HarnessError::Format { what: "noise level".into(), message: format!("{sigma} is not a valid σ") });
            }
            let root = sigma_stream(seed, sigma);
            let (mut env_rng, mut act_rng, mut noise_rng) = (root.fork("env"), root.fork("act"), root.fork("noise"));
            let returns = evaluate_episodes(
                policy.env,
                episodes,
                |o, r| policy.act(o, r),
                &mut env_rng,
                &mut act_rng,
                Some((NoiseSpec::new(sigma), &mut noise_rng)),
            )?;
            let (mean_return, std_return) = mean_std(&returns);
            Ok(RobustnessPoint { sigma, mean_return, std_return, episodes })
        })
        .collect()
}

/// Episode returns of a uniformly random policy.
pub fn random_policy_returns(env: EnvKind, episodes: u32, seed: u64) -> Result<Vec<f64>, HarnessError> {
    let root = RngStream::new(seed, "random-policy");
    let (mut env_rng, mut act_rng) = (root.fork("env"), root.fork("act"));
    let space = env.action_space();
    evaluate_episodes(
        env,
        episodes,
        |_, r| {
            Ok(match space {
                ActionSpace::Discrete(n) => Action::Discrete(r.random_range(0..n)),
                ActionSpace::Continuous { scale, .. } => Action::Continuous(r.random_range(-scale..=scale)),
            })
        },
        &mut env_rng,
        &mut act_rng,
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Mlp;

    #[test]
    fn levels_are_independent_of_each_other() {
        let mut rng = RngStream::new(4, "net");
        let policy = Policy::greedy(EnvKind::CartPole, Mlp::new(&[4, 8, 2], &mut rng).unwrap(), 0.0);
        let both = noise_robustness_eval(&policy, &[0.0, 0.3], 3, 9).unwrap();
        let alone = noise_robustness_eval(&policy, &[0.3], 3, 9).unwrap();
        assert_eq!(both[1], alone[0]);
        assert!(noise_robustness_eval(&policy, &[-0.1], 1, 0).is_err());
    }

    #[test]
    fn random_cart_pole_is_short_lived() {
        let returns = random_policy_returns(EnvKind::CartPole, 50, 0).unwrap();
        let (mean, _) = mean_std(&returns);
        assert!(mean > 10.0 && mean < 40.0, "{mean}");
    }
}
