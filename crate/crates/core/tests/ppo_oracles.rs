use lcc_core::decomposition::StrategyId;
use lcc_core::features::StateVector;
use lcc_core::policy::{sample_action, ActionDistribution, ActorCritic, Mlp, PolicyMode};
use lcc_core::ppo::{
    actor_loss, actor_loss_and_grad, advantages, clipped_surrogate, critic_loss,
    critic_loss_and_grad, discounted_returns, train_epoch, Adam, Learner, Step, TrainConfig,
    Trajectory,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn random_batch(net: &ActorCritic, n: usize, jitter: f64, rng: &mut ChaCha8Rng) -> Vec<Step> {
    (0..n)
        .map(|_| {
            let state = StateVector((0..net.in_width()).map(|_| rng.random_range(-2.0..2.0)).collect());
            let dist = net.actor_forward(state.as_slice()).unwrap();
            let (action, lp) = sample_action(&dist, PolicyMode::Stochastic, rng).unwrap();
            Step {
                state,
                action,
                logprob_old: lp + jitter * rng.random_range(-1.0..1.0),
                reward: rng.random_range(-1.0..1.0),
            }
        })
        .collect()
}

/// Everything that selects a branch of the loss: ReLU masks and clip branches.
fn kinks(actor: &Mlp, steps: &[&Step], adv: &[f64], clip: f64) -> Vec<bool> {
    let mut out = Vec::new();
    for (s, a) in steps.iter().zip(adv) {
        out.extend(actor.activation_pattern(s.state.as_slice()).unwrap());
        let dist = ActionDistribution::from_logits(&actor.forward(s.state.as_slice()).unwrap());
        let ratio = (dist.log_prob(s.action.index()) - s.logprob_old).exp();
        out.push(clipped_surrogate(ratio, *a, clip).1);
    }
    out
}

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= 1e-4 * analytic.abs().max(numeric.abs()).max(1e-6)
}

#[test]
fn actor_and_critic_gradients_match_central_differences() {
    let mut checked = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = ActorCritic::init_with_hidden(&mut rng, 6, 8, 3);
        let steps = random_batch(&net, 5, 0.3, &mut rng);
        let refs: Vec<&Step> = steps.iter().collect();
        let adv: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let clip = 0.2;

        let (_, ga) = actor_loss_and_grad(&net.actor, &refs, &adv, clip).unwrap();
        let base = kinks(&net.actor, &refs, &adv, clip);
        for i in 0..ga.len() {
            let mut plus = net.actor.clone();
            plus.params_mut()[i] += H;
            let mut minus = net.actor.clone();
            minus.params_mut()[i] -= H;
            if kinks(&plus, &refs, &adv, clip) != base || kinks(&minus, &refs, &adv, clip) != base {
                continue;
            }
            let fd = (actor_loss(&plus, &refs, &adv, clip).unwrap()
                - actor_loss(&minus, &refs, &adv, clip).unwrap())
                / (2.0 * H);
            assert!(close(ga[i], fd), "seed {seed} actor[{i}]: {} vs {fd}", ga[i]);
            checked += 1;
        }

        let returns: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (_, gc) = critic_loss_and_grad(&net.critic, &refs, &returns).unwrap();
        for i in 0..gc.len() {
            let mut plus = net.critic.clone();
            plus.params_mut()[i] += H;
            let mut minus = net.critic.clone();
            minus.params_mut()[i] -= H;
            let pattern = |m: &Mlp| -> Vec<bool> {
                refs.iter().flat_map(|s| m.activation_pattern(s.state.as_slice()).unwrap()).collect()
            };
            let p0 = pattern(&net.critic);
            if pattern(&plus) != p0 || pattern(&minus) != p0 {
                continue;
            }
            let fd = (critic_loss(&plus, &refs, &returns).unwrap()
                - critic_loss(&minus, &refs, &returns).unwrap())
                / (2.0 * H);
            assert!(close(gc[i], fd), "seed {seed} critic[{i}]: {} vs {fd}", gc[i]);
            checked += 1;
        }
    }
    assert!(checked > 1000);
}

#[test]
fn unclipped_single_iteration_is_reinforce_with_baseline() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let net = ActorCritic::init_with_hidden(&mut rng, 6, 8, 3);
    let steps = random_batch(&net, 7, 0.0, &mut rng);
    let traj = Trajectory { steps, terminal: true };
    let cfg = TrainConfig {
        clip: 1e12,
        k_iters: 1,
        ..TrainConfig::default()
    };
    let (_, adv) = advantages(&net, std::slice::from_ref(&traj), &cfg).unwrap();

    // -(1/n) Σ A ∇ log π(a|s), assembled step by step.
    let n = traj.steps.len() as f64;
    let mut reinforce = vec![0.0; net.actor.params().len()];
    for (s, a) in traj.steps.iter().zip(&adv) {
        let cache = net.actor.forward_cached(s.state.as_slice()).unwrap();
        let dist = ActionDistribution::from_logits(cache.output());
        let g: Vec<f64> = dist
            .probs()
            .iter()
            .enumerate()
            .map(|(j, p)| -a / n * (f64::from(j == s.action.index()) - p))
            .collect();
        net.actor.backward(&cache, &g, &mut reinforce);
    }
    let refs: Vec<&Step> = traj.steps.iter().collect();
    let (_, ppo) = actor_loss_and_grad(&net.actor, &refs, &adv, cfg.clip).unwrap();
    for (a, b) in ppo.iter().zip(&reinforce) {
        assert!((a - b).abs() <= 1e-10);
    }

    let mut learner = Learner::new(net.clone());
    train_epoch(&mut learner, &[traj], &cfg).unwrap();
    let mut expected = net.actor.clone();
    Adam::new(reinforce.len()).step(expected.params_mut(), &reinforce, cfg.lr);
    for (a, b) in learner.net.actor.params().iter().zip(expected.params()) {
        assert!((a - b).abs() <= 1e-10);
    }
}

#[test]
fn critic_loss_decreases_on_a_fixed_batch() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let net = ActorCritic::init_with_hidden(&mut rng, 6, 16, 3);
        let steps = random_batch(&net, 10, 0.0, &mut rng);
        let refs: Vec<&Step> = steps.iter().collect();
        let returns = discounted_returns(&steps.iter().map(|s| s.reward).collect::<Vec<_>>(), 0.99);
        let mut critic = net.critic.clone();
        let mut opt = Adam::new(critic.params().len());
        let mut last = f64::INFINITY;
        for it in 0..50 {
            let (loss, g) = critic_loss_and_grad(&critic, &refs, &returns).unwrap();
            assert!(loss <= last, "seed {seed} iteration {it}: {loss} > {last}");
            last = loss;
            opt.step(critic.params_mut(), &g, 1e-3);
        }
    }
}

/// One state, three actions; the second pays 1.
fn bandit_epoch(learner: &mut Learner, cfg: &TrainConfig, batch: usize, rng: &mut ChaCha8Rng) {
    let state = StateVector(vec![1.0, 0.5, -0.5, 0.0]);
    let dist = learner.net.actor_forward(state.as_slice()).unwrap();
    let trajs: Vec<Trajectory> = (0..batch)
        .map(|_| {
            let (action, lp) = sample_action(&dist, PolicyMode::Stochastic, rng).unwrap();
            Trajectory {
                steps: vec![Step {
                    state: state.clone(),
                    action,
                    logprob_old: lp,
                    reward: f64::from(action == StrategyId(2)),
                }],
                terminal: true,
            }
        })
        .collect();
    train_epoch(learner, &trajs, cfg).unwrap();
}

#[test]
fn bandit_policy_finds_the_paying_arm() {
    let cfg = TrainConfig::default();
    let mut solved = 0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut learner = Learner::new(ActorCritic::init(&mut rng, 4, 3));
        let state = [1.0, 0.5, -0.5, 0.0];
        for _ in 0..200 {
            bandit_epoch(&mut learner, &cfg, 16, &mut rng);
            if learner.net.actor_forward(&state).unwrap().probs()[1] > 0.9 {
                solved += 1;
                break;
            }
        }
    }
    assert!(solved >= 9, "{solved}/10");
}

#[test]
fn training_is_bit_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut learner = Learner::new(ActorCritic::init(&mut rng, 4, 3));
        for _ in 0..5 {
            bandit_epoch(&mut learner, &TrainConfig::default(), 8, &mut rng);
        }
        learner
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn returns_match_double_sum(rewards in prop::collection::vec(-10.0f64..10.0, 0..40), gamma in 0.5f64..=1.0) {
        let g = discounted_returns(&rewards, gamma);
        prop_assert_eq!(g.len(), rewards.len());
        for t in 0..rewards.len() {
            let direct: f64 = (t..rewards.len()).map(|k| gamma.powi((k - t) as i32) * rewards[k]).sum();
            prop_assert!((g[t] - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn random_networks_give_valid_distributions(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = ActorCritic::init(&mut rng, 38, 3);
        let x: Vec<f64> = (0..38).map(|_| rng.random_range(-5.0..5.0)).collect();
        let d = net.actor_forward(&x).unwrap();
        prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(d.probs().iter().all(|p| *p >= 0.0));
        prop_assert!(net.critic_forward(&x).unwrap().is_finite());
    }
}
