//! PPO training of the actor-critic pair.
//!
//! Advantages are `G - V(s)` with the critic frozen at the start of the
//! epoch; the actor minimizes the negated clipped surrogate and the critic
//! the mean squared error against the discounted returns. Gradients are
//! computed by hand through [`Mlp::backward`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomposition::StrategyId;
use crate::features::StateVector;
use crate::policy::{ActionDistribution, ActorCritic, Mlp, PolicyError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PpoError {
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("no trajectories to train on")]
    EmptyBatch,
    #[error("{0} advantages/returns for {1} steps")]
    Misaligned(usize, usize),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: StateVector,
    pub action: StrategyId,
    pub logprob_old: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub terminal: bool,
}

impl Trajectory {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub clip: f64,
    pub k_iters: usize,
    pub lr: f64,
    #[serde(default)]
    pub normalize_advantages: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            clip: 0.2,
            k_iters: 3,
            lr: 6e-4,
            normalize_advantages: false,
        }
    }
}

/// `G_t = r_t + γ G_{t+1}`, computed backwards.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Adaptive moment estimation over a flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Networks plus their optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub net: ActorCritic,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

impl Learner {
    pub fn new(net: ActorCritic) -> Self {
        let actor_opt = Adam::new(net.actor.params().len());
        let critic_opt = Adam::new(net.critic.params().len());
        Learner {
            net,
            actor_opt,
            critic_opt,
        }
    }
}

fn check_finite(values: &[f64], err: PpoError) -> Result<(), PpoError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(err)
    }
}

/// Per-step clipped surrogate `min(ηA, clip(η, 1-ε, 1+ε)A)` and whether the
/// unclipped branch is the active one.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> (f64, bool) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (unclipped, true)
    } else {
        (clipped, false)
    }
}

/// Negated mean clipped surrogate and its gradient w.r.t. the actor.
pub fn actor_loss_and_grad(
    actor: &Mlp,
    steps: &[&Step],
    advantages: &[f64],
    clip: f64,
) -> Result<(f64, Vec<f64>), PpoError> {
    if steps.len() != advantages.len() {
        return Err(PpoError::Misaligned(advantages.len(), steps.len()));
    }
    if steps.is_empty() {
        return Err(PpoError::EmptyBatch);
    }
    let n = steps.len() as f64;
    let mut grad = vec![0.0; actor.params().len()];
    let mut total = 0.0;
    for (step, &adv) in steps.iter().zip(advantages) {
        let cache = actor.forward_cached(step.state.as_slice())?;
        let dist = ActionDistribution::from_logits(cache.output());
        let a = step.action.index();
        let ratio = (dist.log_prob(a) - step.logprob_old).exp();
        let (surrogate, active) = clipped_surrogate(ratio, adv, clip);
        total += surrogate;
        if active {
            // d(-ηA/n)/dlogits = -(A η / n) (onehot(a) - p)
            let scale = -adv * ratio / n;
            let g_logits: Vec<f64> = dist
                .probs()
                .iter()
                .enumerate()
                .map(|(j, p)| scale * (if j == a { 1.0 } else { 0.0 } - p))
                .collect();
            actor.backward(&cache, &g_logits, &mut grad);
        }
    }
    let loss = -total / n;
    if !loss.is_finite() {
        return Err(PpoError::NonFiniteLoss);
    }
    check_finite(&grad, PpoError::NonFiniteGradient)?;
    Ok((loss, grad))
}

pub fn actor_loss(actor: &Mlp, steps: &[&Step], advantages: &[f64], clip: f64) -> Result<f64, PpoError> {
    Ok(actor_loss_and_grad(actor, steps, advantages, clip)?.0)
}

/// Mean squared error between critic outputs and returns, with gradient.
pub fn critic_loss_and_grad(
    critic: &Mlp,
    steps: &[&Step],
    returns: &[f64],
) -> Result<(f64, Vec<f64>), PpoError> {
    if steps.len() != returns.len() {
        return Err(PpoError::Misaligned(returns.len(), steps.len()));
    }
    if steps.is_empty() {
        return Err(PpoError::EmptyBatch);
    }
    let n = steps.len() as f64;
    let mut grad = vec![0.0; critic.params().len()];
    let mut total = 0.0;
    for (step, &g) in steps.iter().zip(returns) {
        let cache = critic.forward_cached(step.state.as_slice())?;
        let err = cache.output()[0] - g;
        total += err * err;
        critic.backward(&cache, &[2.0 * err / n], &mut grad);
    }
    let loss = total / n;
    if !loss.is_finite() {
        return Err(PpoError::NonFiniteLoss);
    }
    check_finite(&grad, PpoError::NonFiniteGradient)?;
    Ok((loss, grad))
}

pub fn critic_loss(critic: &Mlp, steps: &[&Step], returns: &[f64]) -> Result<f64, PpoError> {
    Ok(critic_loss_and_grad(critic, steps, returns)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub mean_entropy: f64,
    pub mean_advantage: f64,
    pub steps: usize,
}

/// Returns and advantages for a batch, in step order.
pub fn advantages(
    net: &ActorCritic,
    trajectories: &[Trajectory],
    cfg: &TrainConfig,
) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    let mut returns = Vec::new();
    let mut adv = Vec::new();
    for traj in trajectories {
        let g = discounted_returns(&traj.rewards(), cfg.gamma);
        for (step, g) in traj.steps.iter().zip(g) {
            let v = net.critic_forward(step.state.as_slice())?;
            returns.push(g);
            adv.push(g - v);
        }
    }
    if cfg.normalize_advantages && adv.len() > 1 {
        let mean = adv.iter().sum::<f64>() / adv.len() as f64;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / adv.len() as f64;
        let sd = var.sqrt().max(1e-8);
        for a in &mut adv {
            *a = (*a - mean) / sd;
        }
    }
    Ok((returns, adv))
}

/// K full-batch PPO iterations on the actor and critic. On error the learner
/// is left untouched.
pub fn train_epoch(
    learner: &mut Learner,
    trajectories: &[Trajectory],
    cfg: &TrainConfig,
) -> Result<EpochMetrics, PpoError> {
    let steps: Vec<&Step> = trajectories.iter().flat_map(|t| t.steps.iter()).collect();
    if steps.is_empty() {
        return Err(PpoError::EmptyBatch);
    }
    let (returns, adv) = advantages(&learner.net, trajectories, cfg)?;
    let n = steps.len() as f64;

    let mut entropy = 0.0;
    for s in &steps {
        entropy += learner.net.actor_forward(s.state.as_slice())?.entropy();
    }

    let mut work = learner.clone();
    let mut actor_l = actor_loss(&work.net.actor, &steps, &adv, cfg.clip)?;
    let mut critic_l = critic_loss(&work.net.critic, &steps, &returns)?;
    for _ in 0..cfg.k_iters {
        let (la, ga) = actor_loss_and_grad(&work.net.actor, &steps, &adv, cfg.clip)?;
        work.actor_opt.step(work.net.actor.params_mut(), &ga, cfg.lr);
        let (lc, gc) = critic_loss_and_grad(&work.net.critic, &steps, &returns)?;
        work.critic_opt.step(work.net.critic.params_mut(), &gc, cfg.lr);
        actor_l = la;
        critic_l = lc;
    }
    check_finite(work.net.actor.params(), PpoError::NonFiniteGradient)?;
    check_finite(work.net.critic.params(), PpoError::NonFiniteGradient)?;
    *learner = work;
    Ok(EpochMetrics {
        actor_loss: actor_l,
        critic_loss: critic_l,
        mean_entropy: entropy / n,
        mean_advantage: adv.iter().sum::<f64>() / n,
        steps: steps.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::ActorCritic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn step(state: Vec<f64>, action: usize, logprob_old: f64) -> Step {
        Step {
            state: StateVector(state),
            action: StrategyId(action),
            logprob_old,
            reward: 0.0,
        }
    }

    #[test]
    fn returns_small_cases() {
        let g = discounted_returns(&[1.0, 1.0], 0.9);
        assert!((g[0] - 1.9).abs() < 1e-15 && g[1] == 1.0);
        let g = discounted_returns(&[0.2, 0.3, 0.5], 1.0);
        assert!((g[0] - 1.0).abs() < 1e-15);
        assert!((g[1] - 0.8).abs() < 1e-15);
        assert_eq!(g[2], 0.5);
    }

    #[test]
    fn clip_arithmetic() {
        assert_eq!(clipped_surrogate(1.5, 1.0, 0.2).0, 1.2);
        assert_eq!(clipped_surrogate(0.5, -1.0, 0.2).0, -0.8);
        let (v, active) = clipped_surrogate(1.0, 3.0, 0.2);
        assert_eq!(v, 3.0);
        assert!(active);
    }

    #[test]
    fn identity_ratio_gives_mean_advantage() {
        let net = ActorCritic::init_with_hidden(&mut ChaCha8Rng::seed_from_u64(1), 4, 8, 3);
        let states = [vec![0.1, 0.2, -0.3, 1.0], vec![1.0, -1.0, 0.5, 0.0]];
        let steps: Vec<Step> = states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let lp = net.actor_forward(s).unwrap().log_prob(i);
                step(s.clone(), i + 1, lp)
            })
            .collect();
        let refs: Vec<&Step> = steps.iter().collect();
        let loss = actor_loss(&net.actor, &refs, &[0.5, -1.5], 0.2).unwrap();
        assert!((loss - 0.5).abs() < 1e-15);
    }

    #[test]
    fn critic_loss_offsets() {
        let net = ActorCritic::init_with_hidden(&mut ChaCha8Rng::seed_from_u64(2), 3, 8, 3);
        let states = [vec![0.3, 0.1, 0.0], vec![-1.0, 2.0, 0.5]];
        let steps: Vec<Step> = states.iter().map(|s| step(s.clone(), 1, 0.0)).collect();
        let refs: Vec<&Step> = steps.iter().collect();
        let v: Vec<f64> = states.iter().map(|s| net.critic_forward(s).unwrap()).collect();
        assert_eq!(critic_loss(&net.critic, &refs, &v).unwrap(), 0.0);
        let shifted: Vec<f64> = v.iter().map(|x| x + 1.0).collect();
        assert!((critic_loss(&net.critic, &refs, &shifted).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_iterations_leave_params() {
        let net = ActorCritic::init_with_hidden(&mut ChaCha8Rng::seed_from_u64(3), 3, 8, 3);
        let mut learner = Learner::new(net.clone());
        let traj = Trajectory {
            steps: vec![Step {
                reward: 1.0,
                ..step(vec![1.0, 0.0, 0.0], 2, -1.1)
            }],
            terminal: true,
        };
        let cfg = TrainConfig {
            k_iters: 0,
            ..TrainConfig::default()
        };
        let metrics = train_epoch(&mut learner, &[traj], &cfg).unwrap();
        assert_eq!(learner.net, net);
        assert!(metrics.actor_loss.is_finite() && metrics.critic_loss.is_finite());
        assert_eq!(metrics.steps, 1);
    }

    #[test]
    fn failing_epoch_leaves_params() {
        let net = ActorCritic::init_with_hidden(&mut ChaCha8Rng::seed_from_u64(3), 3, 8, 3);
        let mut learner = Learner::new(net.clone());
        let traj = Trajectory {
            steps: vec![Step {
                reward: f64::NAN,
                ..step(vec![1.0, 0.0, 0.0], 2, -1.1)
            }],
            terminal: true,
        };
        assert!(train_epoch(&mut learner, &[traj], &TrainConfig::default()).is_err());
        assert_eq!(learner.net, net);
    }

    #[test]
    fn empty_batch_rejected() {
        let net = ActorCritic::init_with_hidden(&mut ChaCha8Rng::seed_from_u64(3), 3, 8, 3);
        let mut learner = Learner::new(net);
        assert_eq!(
            train_epoch(&mut learner, &[], &TrainConfig::default()),
            Err(PpoError::EmptyBatch)
        );
    }
}
