use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cmaes::{extract_sub, writeback_sub, CmaState, CovarianceModel, SIGMA_FLOOR};
use crate::decomposition::{validate, Strategy, StrategyId};
use crate::features::{
    ah_features, assemble_state, go_features, reward, sd_features, ActionStats, GlobalSnapshot,
    SdFeatures, StateVector, SubgroupRecord,
};
use crate::policy::{sample_action, ActorCritic, PolicyMode};
use crate::ppo::{Step, Trajectory};
use crate::problems::{EvalBudget, FePhase, Problem};

use super::{HarnessError, RunConfig};

const OPT_STREAM: u64 = 1;
const ACT_STREAM: u64 = 2;

/// Who picks the decomposition strategy at each step.
#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    Policy { net: &'a ActorCritic, mode: PolicyMode },
    Uniform,
    Fixed(Strategy),
}

impl Controller<'_> {
    fn choose<R: Rng>(&self, state: &StateVector, rng: &mut R) -> Result<(StrategyId, f64), HarnessError> {
        let l = Strategy::POOL.len();
        Ok(match self {
            Controller::Policy { net, mode } => {
                let dist = net.actor_forward(state.as_slice())?;
                sample_action(&dist, *mode, rng)?
            }
            Controller::Uniform => {
                let i = rng.random_range(0..l);
                (StrategyId::from_index(i), -(l as f64).ln())
            }
            Controller::Fixed(s) => (s.id(), 0.0),
        })
    }
}

/// One line of the step log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: Option<u64>,
    pub problem_id: String,
    pub run_seed: u64,
    pub step: usize,
    pub action: usize,
    pub reward: f64,
    pub best_gap: f64,
    pub fes_used: u64,
    pub wall_ms: u64,
    pub state_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub problem_id: String,
    pub run_seed: u64,
    pub steps: Vec<StepLog>,
    pub initial_gap: f64,
    pub final_gap: f64,
    pub total_reward: f64,
    pub fes_used: u64,
    pub fes_initial: u64,
    pub fes_subgroup: u64,
    pub fes_decomposition: u64,
    pub early_stop: bool,
}

impl EpisodeLog {
    pub fn action_histogram(&self, n_actions: usize) -> Vec<u64> {
        let mut h = vec![0; n_actions];
        for s in &self.steps {
            h[s.action - 1] += 1;
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub trajectory: Trajectory,
    pub log: EpisodeLog,
}

/// Projects a symmetric matrix onto the positive-definite cone when it is
/// not already there. Write-back of independently evolved blocks keeps
/// stale cross terms, which can leave the global matrix indefinite.
pub fn ensure_positive_definite(cov: &mut DMatrix<f64>) -> bool {
    if cov.clone().cholesky().is_some() {
        return false;
    }
    let eig = SymmetricEigen::new(cov.clone());
    let top = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let floor = (top * 1e-12).max(1e-300);
    let clipped = eig.eigenvalues.map(|v| v.max(floor));
    let mut rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let n = rebuilt.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (rebuilt[(i, j)] + rebuilt[(j, i)]);
            rebuilt[(i, j)] = v;
            rebuilt[(j, i)] = v;
        }
    }
    *cov = rebuilt;
    true
}

fn uniform_point<R: Rng>(problem: &Problem, rng: &mut R) -> Vec<f64> {
    (0..problem.dim)
        .map(|_| rng.random_range(problem.lower..problem.upper))
        .collect()
}

/// Random initial mean plus λ uniform points that set the starting best.
struct Start {
    mean: DVector<f64>,
    gbest: Vec<f64>,
    gbest_f: f64,
}

fn initialise<R: Rng>(
    problem: &Problem,
    lambda: usize,
    budget: &mut EvalBudget,
    rng: &mut R,
) -> Result<Start, HarnessError> {
    let mean = DVector::from_vec(uniform_point(problem, rng));
    budget.set_phase(FePhase::InitialPopulation);
    let mut gbest = Vec::new();
    let mut gbest_f = f64::INFINITY;
    for _ in 0..lambda {
        let x = uniform_point(problem, rng);
        let f = problem.evaluate(&x, budget)?;
        if f < gbest_f {
            gbest_f = f;
            gbest = x;
        }
    }
    Ok(Start { mean, gbest, gbest_f })
}

fn stops(gap: f64, termination_error: f64) -> bool {
    // A non-finite threshold disables early stopping.
    termination_error.is_finite() && gap < termination_error
}

/// One optimization episode: `ns` decomposition decisions, each followed by
/// a CMA-ES run of `tg` generations on every subgroup.
pub fn run_episode(
    problem: &Problem,
    controller: Controller<'_>,
    cfg: &RunConfig,
    run_seed: u64,
    epoch: Option<u64>,
) -> Result<EpisodeOutcome, HarnessError> {
    if problem.dim != cfg.dim {
        return Err(HarnessError::Config(format!(
            "problem {} has dimension {}, config expects {}",
            problem.id, problem.dim, cfg.dim
        )));
    }
    let started = Instant::now();
    let d = cfg.dim;
    let m = cfg.m;
    let lambda = cfg.lambda;
    let n_actions = cfg.n_actions();
    let radius = problem.radius();
    let diameter = problem.diameter();
    let ablation = cfg.ablation_flags();

    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(OPT_STREAM);
    let mut act_rng = ChaCha8Rng::seed_from_u64(run_seed);
    act_rng.set_stream(ACT_STREAM);

    let mut budget = EvalBudget::new(cfg.total_budget());
    let Start {
        mut mean,
        mut gbest,
        mut gbest_f,
    } = initialise(problem, lambda, &mut budget, &mut rng)?;
    let mut cov = DMatrix::<f64>::identity(d, d);
    let mut sigma = radius;

    let gap0 = gbest_f - problem.f_star;
    let mut prev_gap = gap0;
    let mut stats = ActionStats::new(n_actions);
    let mut records: Vec<SubgroupRecord> = Vec::new();
    let mut trajectory = Trajectory::default();
    let mut step_logs = Vec::new();
    let mut total_reward = 0.0;
    let mut early_stop = false;

    for t in 0..cfg.ns {
        let gap = gbest_f - problem.f_star;
        if stops(gap, cfg.termination_error) {
            early_stop = true;
            break;
        }
        if budget.remaining() < lambda as u64 {
            break;
        }

        let go = go_features(&GlobalSnapshot {
            mean: &mean,
            cov: &cov,
            sigma,
            gbest: &gbest,
            gap,
            prev_gap,
            fes_remaining: budget.remaining(),
            max_fes: budget.max(),
            radius,
        });
        let sd = if records.len() == m && records.iter().all(|r| !r.last_gen.is_empty()) {
            sd_features(&records, lambda, radius, diameter, m)?
        } else {
            SdFeatures::zeros(m)
        };
        let ah = ah_features(&stats, radius);
        let state = assemble_state(&go, &sd, &ah, m, n_actions, ablation)?;
        let (action, logprob) = controller.choose(&state, &mut act_rng)?;

        budget.set_phase(FePhase::Decomposition);
        let diag: Vec<f64> = cov.diagonal().iter().copied().collect();
        let partition = action.strategy()?.partition(&diag, m, &mut rng)?;
        if let Err(v) = validate(&partition, d, m) {
            return Err(HarnessError::Internal(format!("strategy produced bad partition: {v}")));
        }

        budget.set_phase(FePhase::Subgroup);
        let gbest_before = gbest.clone();
        records.clear();
        let mut log_sigma_sum = 0.0;
        for group in &partition.groups {
            let (sub_cov, sub_mean) = extract_sub(&cov, &mean, group)?;
            let mut cma = CmaState::with_covariance(sub_mean, sub_cov, sigma, lambda)?
                .with_sigma_ceiling(radius);
            let mut rec = SubgroupRecord {
                first_gen: Vec::new(),
                last_gen: Vec::new(),
                all_points: Vec::with_capacity(cfg.tg * lambda),
                final_cov: DMatrix::zeros(0, 0),
            };
            for g in 0..cfg.tg {
                if budget.remaining() < lambda as u64 {
                    break;
                }
                let mut off = cma.sample(&mut rng)?;
                let mut gen_best: Option<(f64, Vec<f64>)> = None;
                for (k, p) in off.points.iter_mut().enumerate() {
                    let mut x = gbest.clone();
                    for (a, &i) in group.iter().enumerate() {
                        p[a] = p[a].clamp(problem.lower, problem.upper);
                        x[i] = p[a];
                    }
                    let f = problem.evaluate(&x, &mut budget)?;
                    if !f.is_finite() {
                        return Err(HarnessError::NonFinite(format!(
                            "fitness {f} on {} step {t}",
                            problem.id
                        )));
                    }
                    off.fitness[k] = f;
                    if gen_best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                        gen_best = Some((f, x));
                    }
                }
                if let Some((f, x)) = gen_best {
                    if f < gbest_f {
                        gbest_f = f;
                        gbest = x;
                    }
                }
                cma.update(&off)?;
                if g == 0 {
                    rec.first_gen = off.points.clone();
                }
                rec.last_gen = off.points.clone();
                rec.all_points.extend(off.points);
            }
            log_sigma_sum += cma.sigma().ln();
            let (sub_mean, sub_cov, _) = cma.into_parts();
            writeback_sub(&mut cov, &mut mean, group, &sub_cov, &sub_mean)?;
            rec.final_cov = sub_cov;
            records.push(rec);
        }
        ensure_positive_definite(&mut cov);
        sigma = (log_sigma_sum / m as f64).exp().clamp(SIGMA_FLOOR, radius);

        let cur_gap = gbest_f - problem.f_star;
        let r = reward(gap, cur_gap, gap0, 0.0, cfg.reward);
        if !r.is_finite() {
            return Err(HarnessError::NonFinite(format!("reward on {} step {t}", problem.id)));
        }
        let moved = gbest
            .iter()
            .zip(&gbest_before)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        stats.record(action.index(), r, moved);
        prev_gap = gap;
        total_reward += r;

        step_logs.push(StepLog {
            epoch,
            problem_id: problem.id.clone(),
            run_seed,
            step: t,
            action: action.0,
            reward: r,
            best_gap: cur_gap,
            fes_used: budget.used(),
            wall_ms: if cfg.log_wall_time {
                started.elapsed().as_millis() as u64
            } else {
                0
            },
            state_digest: format!("{:016x}", state.digest()),
        });
        trajectory.steps.push(Step {
            state,
            action,
            logprob_old: logprob,
            reward: r,
        });
    }
    trajectory.terminal = true;

    Ok(EpisodeOutcome {
        trajectory,
        log: EpisodeLog {
            problem_id: problem.id.clone(),
            run_seed,
            steps: step_logs,
            initial_gap: gap0,
            final_gap: gbest_f - problem.f_star,
            total_reward,
            fes_used: budget.used(),
            fes_initial: budget.used_in(FePhase::InitialPopulation),
            fes_subgroup: budget.used_in(FePhase::Subgroup),
            fes_decomposition: budget.used_in(FePhase::Decomposition),
            early_stop,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub problem_id: String,
    pub run_seed: u64,
    pub initial_gap: f64,
    pub final_gap: f64,
    pub fes_used: u64,
}

/// CMA-ES on the full dimension under the same budget and start as an
/// episode with the same seed.
pub fn run_monolithic(
    problem: &Problem,
    model: CovarianceModel,
    cfg: &RunConfig,
    run_seed: u64,
) -> Result<BaselineOutcome, HarnessError> {
    let lambda = cfg.lambda;
    let radius = problem.radius();
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(OPT_STREAM);
    let mut budget = EvalBudget::new(cfg.total_budget());
    let Start {
        mean,
        mut gbest_f,
        ..
    } = initialise(problem, lambda, &mut budget, &mut rng)?;
    let initial_gap = gbest_f - problem.f_star;

    let mut cma = match model {
        CovarianceModel::Full => CmaState::new(mean, radius, lambda)?,
        CovarianceModel::Diagonal => CmaState::new_diagonal(mean, radius, lambda)?,
    }
    .with_sigma_ceiling(radius);
    budget.set_phase(FePhase::Monolithic);
    while budget.remaining() >= lambda as u64 && !stops(gbest_f - problem.f_star, cfg.termination_error) {
        let mut off = cma.sample(&mut rng)?;
        for (k, p) in off.points.iter_mut().enumerate() {
            problem.clamp(p.as_mut_slice());
            let f = problem.evaluate(p.as_slice(), &mut budget)?;
            off.fitness[k] = f;
            gbest_f = gbest_f.min(f);
        }
        cma.update(&off)?;
    }
    Ok(BaselineOutcome {
        problem_id: problem.id.clone(),
        run_seed,
        initial_gap,
        final_gap: gbest_f - problem.f_star,
        fes_used: budget.used(),
    })
}
