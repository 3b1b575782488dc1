use std::fmt::Write as _;

use crate::agents::{epsilon_greedy, AgentError};
use crate::envs::{add_observation_noise, env_reset, env_step, Action, EnvKind, NoiseSpec};
use crate::numerics::{Layer, Mlp, RngStream, Tensor2};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    /// ε-greedy over Q-values.
    Greedy { epsilon: f64 },
    /// `scale · tanh(μ)` where `μ` is the first output.
    SquashedMean { scale: f64 },
}

/// A frozen evaluation policy, detached from its training agent. Its
/// network always runs the dense kernels, so a policy read back from text
/// behaves bitwise like the one written.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub env: EnvKind,
    pub kind: PolicyKind,
    pub net: Mlp,
}

impl Policy {
    pub fn greedy(env: EnvKind, net: Mlp, epsilon: f64) -> Self {
        Self { env, kind: PolicyKind::Greedy { epsilon }, net: without_support(net) }
    }

    pub fn squashed_mean(env: EnvKind, net: Mlp, scale: f64) -> Self {
        Self { env, kind: PolicyKind::SquashedMean { scale }, net: without_support(net) }
    }

    pub fn act(&self, obs: &[f64], rng: &mut RngStream) -> Result<Action, AgentError> {
        let out = self.net.forward(&Tensor2::row_vector(obs))?;
        Ok(match self.kind {
            PolicyKind::Greedy { epsilon } => Action::Discrete(epsilon_greedy(out.row(0), epsilon, rng)?),
            PolicyKind::SquashedMean { scale } => Action::Continuous(scale * out.get(0, 0).tanh()),
        })
    }

    /// Plain-text form; floats are written in shortest round-trip notation.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        match self.kind {
            PolicyKind::Greedy { epsilon } => writeln!(s, "greedy {epsilon}"),
            PolicyKind::SquashedMean { scale } => writeln!(s, "squashed-mean {scale}"),
        }
        .unwrap();
        writeln!(s, "env {}", self.env).unwrap();
        writeln!(s, "layers {}", self.net.layers().len()).unwrap();
        for layer in self.net.layers() {
            writeln!(s, "layer {} {}", layer.n_in(), layer.n_out()).unwrap();
            for r in 0..layer.n_in() {
                s.push_str(&join(layer.weights.row(r)));
                s.push('\n');
            }
            s.push_str(&join(&layer.bias));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, HarnessError> {
        let bad = |m: String| HarnessError::Format { what: "policy".into(), message: m };
        let mut lines = text.lines();
        let mut next = |what: &str| lines.next().ok_or_else(|| bad(format!("missing {what}")));
        let head = next("header")?;
        let (tag, value) = head.split_once(' ').ok_or_else(|| bad(format!("bad header {head:?}")))?;
        let value = parse_f64(value).map_err(bad)?;
        let kind = match tag {
            "greedy" => PolicyKind::Greedy { epsilon: value },
            "squashed-mean" => PolicyKind::SquashedMean { scale: value },
            other => return Err(bad(format!("unknown policy kind {other:?}"))),
        };
        let env_line = next("env")?;
        let env: EnvKind = env_line
            .strip_prefix("env ")
            .ok_or_else(|| bad(format!("bad env line {env_line:?}")))?
            .parse()
            .map_err(|e: crate::envs::EnvError| bad(e.to_string()))?;
        let count_line = next("layer count")?;
        let count: usize = count_line
            .strip_prefix("layers ")
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| bad(format!("bad layer count {count_line:?}")))?;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let dims_line = next("layer dims")?;
            let dims: Vec<usize> = dims_line
                .strip_prefix("layer ")
                .map(|d| d.split_whitespace().filter_map(|x| x.parse().ok()).collect())
                .unwrap_or_default();
            let [n_in, n_out] = dims[..] else {
                return Err(bad(format!("bad layer line {dims_line:?}")));
            };
            let mut data = Vec::with_capacity(n_in * n_out);
            for _ in 0..n_in {
                let row = parse_row(next("weight row")?, n_out).map_err(bad)?;
                data.extend(row);
            }
            let bias = parse_row(next("bias")?, n_out).map_err(bad)?;
            layers.push(Layer::new(Tensor2::from_vec(n_in, n_out, data)?, bias)?);
        }
        Ok(Self { env, kind, net: Mlp::from_layers(layers)? })
    }
}

fn without_support(mut net: Mlp) -> Mlp {
    net.layers_mut().iter_mut().for_each(|l| l.set_support(None));
    net
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.trim().parse().map_err(|_| format!("bad number {s:?}"))
}

fn parse_row(line: &str, n: usize) -> Result<Vec<f64>, String> {
    let row = line.split_whitespace().map(parse_f64).collect::<Result<Vec<_>, _>>()?;
    if row.len() != n {
        return Err(format!("expected {n} values, got {}", row.len()));
    }
    Ok(row)
}

/// Returns of `episodes` full episodes. With `noise`, the policy sees
/// perturbed observations while the environment evolves on clean state.
pub fn evaluate_episodes<F>(
    env: EnvKind,
    episodes: u32,
    mut act: F,
    env_rng: &mut RngStream,
    act_rng: &mut RngStream,
    mut noise: Option<(NoiseSpec, &mut RngStream)>,
) -> Result<Vec<f64>, HarnessError>
where
    F: FnMut(&[f64], &mut RngStream) -> Result<Action, AgentError>,
{
    let half_widths = env.feature_half_width();
    let mut returns = Vec::with_capacity(episodes as usize);
    for _ in 0..episodes {
        let mut state = env_reset(env, env_rng);
        let mut total = 0.0;
        while !state.done {
            let clean = state.observation();
            let obs = match noise.as_mut() {
                Some((spec, rng)) => add_observation_noise(&clean, half_widths, *spec, rng),
                None => clean,
            };
            let outcome = env_step(&state, act(&obs, act_rng)?)?;
            total += outcome.reward;
            state = outcome.next;
        }
        returns.push(total);
    }
    Ok(returns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        let mut rng = RngStream::new(1, "policy");
        let net = Mlp::new(&[3, 5, 2], &mut rng).unwrap();
        for p in [Policy::squashed_mean(EnvKind::Pendulum, net.clone(), 2.0), Policy::greedy(EnvKind::MountainCar, net, 0.1)] {
            let back = Policy::from_text(&p.to_text()).unwrap();
            assert_eq!(back, p);
        }
    }

    #[test]
    fn truncated_text_is_rejected() {
        let mut rng = RngStream::new(1, "policy");
        let p = Policy::greedy(EnvKind::CartPole, Mlp::new(&[4, 3, 2], &mut rng).unwrap(), 0.0);
        let text = p.to_text();
        let cut: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(Policy::from_text(&cut).is_err());
    }

    #[test]
    fn episodes_run_to_completion() {
        let mut env_rng = RngStream::new(0, "env");
        let mut act_rng = RngStream::new(0, "act");
        let returns =
            evaluate_episodes(EnvKind::CartPole, 3, |_, _| Ok(Action::Discrete(0)), &mut env_rng, &mut act_rng, None).unwrap();
        assert_eq!(returns.len(), 3);
        assert!(returns.iter().all(|&r| r >= 1.0 && r < 100.0));
    }
}
