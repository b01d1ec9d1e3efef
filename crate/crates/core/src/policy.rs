//! Actor and critic networks: small ReLU MLPs over the decision vector.
//!
//! Parameters live in one flat buffer per network so optimizers and
//! checkpoints can treat them as plain `f64` slices. Layer `l` stores its
//! weights row-major (`out × in`) followed by its biases.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomposition::StrategyId;

pub const HIDDEN: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("input has {got} entries, network expects {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("action distribution is degenerate")]
    DegenerateDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer inputs and pre-activations from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.pre.last().expect("at least one layer")
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0));
        Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        }
    }

    /// Weights uniform in `±sqrt(1 / fan_in)`, biases zero.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let mut off = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (1.0 / fan_in as f64).sqrt();
            for p in &mut net.params[off..off + fan_in * fan_out] {
                *p = rng.random_range(-bound..bound);
            }
            off += fan_in * fan_out + fan_out;
        }
        net
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && param_count(sizes) == params.len()).then(|| Mlp {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
    pub fn in_width(&self) -> usize {
        self.sizes[0]
    }
    pub fn out_width(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }
    pub fn params(&self) -> &[f64] {
        &self.params
    }
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut off = 0;
        self.sizes.windows(2).map(move |w| {
            let start = off;
            off += w[0] * w[1] + w[1];
            (start, w[0], w[1])
        })
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache, PolicyError> {
        if x.len() != self.in_width() {
            return Err(PolicyError::SizeMismatch {
                expected: self.in_width(),
                got: x.len(),
            });
        }
        let n_layers = self.sizes.len() - 1;
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut act = x.to_vec();
        for (l, (off, n_in, n_out)) in self.layers().enumerate() {
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    b[o] + row.iter().zip(&act).map(|(a, v)| a * v).sum::<f64>()
                })
                .collect();
            let next = if l + 1 < n_layers {
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                Vec::new()
            };
            inputs.push(std::mem::replace(&mut act, next));
            pre.push(z);
        }
        Ok(ForwardCache { inputs, pre })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, PolicyError> {
        Ok(self.forward_cached(x)?.pre.pop().expect("output layer"))
    }

    /// Accumulates `∂loss/∂params` into `grad` given `∂loss/∂output`.
    /// ReLU's derivative at exactly 0 is taken as 0.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64], grad: &mut [f64]) {
        let layers: Vec<_> = self.layers().collect();
        let mut delta = grad_out.to_vec();
        for l in (0..layers.len()).rev() {
            let (off, n_in, n_out) = layers[l];
            let input = &cache.inputs[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            let below = &cache.pre[l - 1];
            delta = (0..n_in)
                .map(|i| {
                    if below[i] > 0.0 {
                        (0..n_out).map(|o| w[o * n_in + i] * delta[o]).sum()
                    } else {
                        0.0
                    }
                })
                .collect();
        }
    }

    /// Sign pattern of every hidden pre-activation; changes when an input
    /// crosses a ReLU kink.
    pub fn activation_pattern(&self, x: &[f64]) -> Result<Vec<bool>, PolicyError> {
        let cache = self.forward_cached(x)?;
        let hidden = &cache.pre[..cache.pre.len() - 1];
        Ok(hidden.iter().flatten().map(|v| *v > 0.0).collect())
    }
}

/// Separate actor and critic networks with identical trunks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub actor: Mlp,
    pub critic: Mlp,
}

impl ActorCritic {
    pub fn sizes(in_width: usize, hidden: usize, n_actions: usize) -> ([usize; 4], [usize; 4]) {
        (
            [in_width, hidden, hidden, n_actions],
            [in_width, hidden, hidden, 1],
        )
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R, in_width: usize, n_actions: usize) -> Self {
        Self::init_with_hidden(rng, in_width, HIDDEN, n_actions)
    }

    pub fn init_with_hidden<R: Rng + ?Sized>(
        rng: &mut R,
        in_width: usize,
        hidden: usize,
        n_actions: usize,
    ) -> Self {
        let (a, c) = Self::sizes(in_width, hidden, n_actions);
        let actor = Mlp::init(&a, rng);
        let critic = Mlp::init(&c, rng);
        ActorCritic { actor, critic }
    }

    pub fn in_width(&self) -> usize {
        self.actor.in_width()
    }

    pub fn n_actions(&self) -> usize {
        self.actor.out_width()
    }

    pub fn actor_forward(&self, state: &[f64]) -> Result<ActionDistribution, PolicyError> {
        Ok(ActionDistribution::from_logits(&self.actor.forward(state)?))
    }

    pub fn critic_forward(&self, state: &[f64]) -> Result<f64, PolicyError> {
        Ok(self.critic.forward(state)?[0])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl ActionDistribution {
    /// Softmax with max-subtraction.
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<f64> = logits.iter().map(|v| v - max).collect();
        let lse = shifted.iter().map(|v| v.exp()).sum::<f64>().ln();
        let log_probs: Vec<f64> = shifted.iter().map(|v| v - lse).collect();
        let probs = log_probs.iter().map(|v| v.exp()).collect();
        ActionDistribution { probs, log_probs }
    }

    pub fn from_probs(probs: &[f64]) -> Result<Self, PolicyError> {
        let sum: f64 = probs.iter().sum();
        if probs.is_empty()
            || probs.iter().any(|p| !p.is_finite() || *p < 0.0)
            || (sum - 1.0).abs() > 1e-9
        {
            return Err(PolicyError::DegenerateDistribution);
        }
        Ok(ActionDistribution {
            probs: probs.to_vec(),
            log_probs: probs.iter().map(|p| p.ln()).collect(),
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_prob(&self, index: usize) -> f64 {
        self.log_probs[index]
    }

    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .zip(&self.log_probs)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, lp)| -p * lp)
            .sum()
    }

    /// Most likely action, ties to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMode {
    #[default]
    Stochastic,
    Greedy,
}

/// Picks an action and returns it with its log-probability.
pub fn sample_action<R: Rng + ?Sized>(
    dist: &ActionDistribution,
    mode: PolicyMode,
    rng: &mut R,
) -> Result<(StrategyId, f64), PolicyError> {
    if dist.probs.iter().any(|p| p.is_nan()) {
        return Err(PolicyError::DegenerateDistribution);
    }
    let index = match mode {
        PolicyMode::Greedy => dist.argmax(),
        PolicyMode::Stochastic => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, p) in dist.probs.iter().enumerate() {
                if *p <= 0.0 {
                    continue;
                }
                acc += p;
                chosen = Some(i);
                if u < acc {
                    break;
                }
            }
            chosen.ok_or(PolicyError::DegenerateDistribution)?
        }
    };
    Ok((StrategyId::from_index(index), dist.log_probs[index]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = ActorCritic::init(&mut ChaCha8Rng::seed_from_u64(5), 58, 3);
        let b = ActorCritic::init(&mut ChaCha8Rng::seed_from_u64(5), 58, 3);
        assert_eq!(a, b);
        assert_eq!(a.actor.params().len(), 8131);
        let mut off = 0;
        for w in a.actor.sizes().windows(2) {
            off += w[0] * w[1];
            assert!(a.actor.params()[off..off + w[1]].iter().all(|&v| v == 0.0));
            off += w[1];
        }
    }

    #[test]
    fn zero_network_outputs() {
        let (a, c) = ActorCritic::sizes(58, 64, 3);
        let net = ActorCritic {
            actor: Mlp::zeros(&a),
            critic: Mlp::zeros(&c),
        };
        let s = vec![0.7; 58];
        let d = net.actor_forward(&s).unwrap();
        for p in d.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(net.critic_forward(&s).unwrap(), 0.0);
    }

    #[test]
    fn huge_logits_do_not_overflow() {
        let d = ActionDistribution::from_logits(&[1000.0, 0.0, 0.0]);
        assert!((d.probs()[0] - 1.0).abs() < 1e-15);
        assert!(d.probs()[1] < 1e-300);
        let d = ActionDistribution::from_logits(&[1e4, -1e4, 3.0]);
        assert!(d.probs().iter().all(|p| p.is_finite()));
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn crafted_output_bias_dominates() {
        let (a, _) = ActorCritic::sizes(4, 8, 3);
        let mut actor = Mlp::zeros(&a);
        let n = actor.params().len();
        actor.params_mut()[n - 3] = 1000.0;
        let d = ActionDistribution::from_logits(&actor.forward(&[1.0; 4]).unwrap());
        assert!((d.probs()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn wrong_width_rejected() {
        let net = ActorCritic::init(&mut ChaCha8Rng::seed_from_u64(0), 10, 3);
        assert_eq!(
            net.actor_forward(&[0.0; 9]).unwrap_err(),
            PolicyError::SizeMismatch { expected: 10, got: 9 }
        );
    }

    #[test]
    fn certain_distribution() {
        let d = ActionDistribution::from_probs(&[1.0, 0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (a, lp) = sample_action(&d, PolicyMode::Stochastic, &mut rng).unwrap();
            assert_eq!(a, StrategyId(1));
            assert_eq!(lp, 0.0);
        }
    }

    #[test]
    fn greedy_picks_argmax() {
        let d = ActionDistribution::from_probs(&[0.2, 0.5, 0.3]).unwrap();
        let (a, _) = sample_action(&d, PolicyMode::Greedy, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(a, StrategyId(2));
        let tie = ActionDistribution::from_probs(&[0.4, 0.4, 0.2]).unwrap();
        assert_eq!(tie.argmax(), 0);
    }

    #[test]
    fn nan_distribution_is_rejected() {
        assert!(ActionDistribution::from_probs(&[f64::NAN, 0.5, 0.5]).is_err());
        let d = ActionDistribution::from_logits(&[f64::NAN, 0.0, 0.0]);
        assert_eq!(
            sample_action(&d, PolicyMode::Stochastic, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(PolicyError::DegenerateDistribution)
        );
    }

    #[test]
    fn uniform_sampling_frequencies() {
        let d = ActionDistribution::from_probs(&[1.0 / 3.0; 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 30_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sample_action(&d, PolicyMode::Stochastic, &mut rng).unwrap().0.index()] += 1;
        }
        let p = 1.0 / 3.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sd, "{counts:?}");
        }
    }
}
