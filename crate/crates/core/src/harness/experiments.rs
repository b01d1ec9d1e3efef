use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cmaes::CovarianceModel;
use crate::decomposition::Strategy;
use crate::features::RewardVariant;
use crate::policy::{ActorCritic, PolicyMode};
use crate::ppo::{train_epoch, EpochMetrics, Learner, Trajectory};
use crate::problems::{Problem, Suite};

use super::checkpoint::{save_checkpoint, Checkpoint};
use super::config::{AblationArm, RunConfig};
use super::episode::{run_episode, run_monolithic, Controller, EpisodeLog};
use super::report::{mean_std, min_max_scores, OutDir};
use super::HarnessError;

const INIT_STREAM: u64 = 3;
const SEED_STREAM: u64 = 4;

/// Evaluation run seeds derived from one base seed.
pub fn eval_seeds(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| base.wrapping_mul(1_000_003).wrapping_add(i)).collect()
}

/// Fresh network and optimizer state for `cfg`, before any training.
pub fn initial_checkpoint(cfg: &RunConfig) -> Checkpoint {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(INIT_STREAM);
    let net = ActorCritic::init(&mut rng, cfg.state_width(), cfg.n_actions());
    Checkpoint {
        fingerprint: cfg.fingerprint(),
        m: cfg.m as u32,
        n_actions: cfg.n_actions() as u32,
        in_width: cfg.state_width() as u32,
        epoch: 0,
        rng_seed: cfg.seed,
        rng_word_pos: 0,
        learner: Learner::new(net),
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
    pub logs: Vec<EpisodeLog>,
    /// Rollouts of the final epoch.
    pub last_trajectories: Vec<Trajectory>,
    pub checkpoints_written: usize,
}

/// Trains the policy for `cfg.epochs` epochs, one stochastic rollout per
/// training problem per epoch. Writes `checkpoints/epoch_NNNN.ckpt`,
/// `final.ckpt`, `train_log.jsonl` and `train_metrics.csv` under `out`.
pub fn train(cfg: &RunConfig, suite: &Suite, out: &OutDir) -> Result<TrainOutput, HarnessError> {
    cfg.validate()?;
    let problems: Vec<&Problem> = suite.train().collect();
    if problems.is_empty() {
        return Err(HarnessError::Config("suite has no training problems".into()));
    }
    let mut ckpt = initial_checkpoint(cfg);
    let mut seeder = ChaCha8Rng::seed_from_u64(cfg.seed);
    seeder.set_stream(SEED_STREAM);
    let ckpt_dir = out.subdir("checkpoints")?;
    out.reset("train_log.jsonl")?;

    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut logs = Vec::new();
    let mut last_trajectories = Vec::new();
    let mut written = 0;
    for epoch in 0..cfg.epochs {
        let mut trajectories = Vec::with_capacity(problems.len());
        let mut epoch_logs = Vec::with_capacity(problems.len());
        for p in &problems {
            let seed = seeder.next_u64();
            let controller = Controller::Policy {
                net: ckpt.net(),
                mode: PolicyMode::Stochastic,
            };
            let outcome = run_episode(p, controller, cfg, seed, Some(epoch as u64))?;
            trajectories.push(outcome.trajectory);
            epoch_logs.push(outcome.log);
        }
        let m = train_epoch(&mut ckpt.learner, &trajectories, &cfg.ppo)?;
        ckpt.epoch = epoch as u64 + 1;
        ckpt.rng_word_pos = seeder.get_word_pos();

        let steps: Vec<_> = epoch_logs.iter().flat_map(|l| l.steps.iter()).collect();
        out.append_jsonl("train_log.jsonl", &steps)?;
        if let Some(path) = ckpt_dir.path(&format!("epoch_{:04}.ckpt", epoch + 1)) {
            save_checkpoint(&ckpt, &path)?;
            written += 1;
        }
        metrics.push(m);
        logs.extend(epoch_logs);
        last_trajectories = trajectories;
    }
    if let Some(path) = out.path("final.ckpt") {
        save_checkpoint(&ckpt, &path)?;
    }
    let rows: Vec<Vec<String>> = metrics
        .iter()
        .enumerate()
        .map(|(e, m)| {
            vec![
                (e + 1).to_string(),
                m.actor_loss.to_string(),
                m.critic_loss.to_string(),
                m.mean_entropy.to_string(),
                m.mean_advantage.to_string(),
                m.steps.to_string(),
            ]
        })
        .collect();
    out.write_csv(
        "train_metrics.csv",
        &["epoch", "actor_loss", "critic_loss", "entropy", "mean_advantage", "steps"],
        &rows,
    )?;
    Ok(TrainOutput {
        checkpoint: ckpt,
        metrics,
        logs,
        last_trajectories,
        checkpoints_written: written,
    })
}

fn check_compatible(ckpt: &Checkpoint, cfg: &RunConfig) -> Result<(), HarnessError> {
    if ckpt.fingerprint != cfg.fingerprint() {
        return Err(HarnessError::ConfigMismatch(format!(
            "fingerprint {:016x} != {:016x}",
            ckpt.fingerprint,
            cfg.fingerprint()
        )));
    }
    if ckpt.m as usize != cfg.m
        || ckpt.n_actions as usize != cfg.n_actions()
        || ckpt.in_width as usize != cfg.state_width()
    {
        return Err(HarnessError::ConfigMismatch(format!(
            "shape m={} L={} in={} vs m={} L={} in={}",
            ckpt.m,
            ckpt.n_actions,
            ckpt.in_width,
            cfg.m,
            cfg.n_actions(),
            cfg.state_width()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub problem_id: String,
    pub runs: usize,
    pub mean_gap: f64,
    pub std_gap: f64,
    pub mean_fes: f64,
    pub early_stops: usize,
    /// Total picks per action.
    pub action_hist: Vec<u64>,
    /// Picks per action at each step index.
    pub step_action_hist: Vec<Vec<u64>>,
    pub final_gaps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub logs: Vec<EpisodeLog>,
}

impl EvalReport {
    pub fn row(&self, problem_id: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.problem_id == problem_id)
    }
}

fn summarize(problem_id: &str, logs: &[EpisodeLog], ns: usize, n_actions: usize) -> EvalRow {
    let gaps: Vec<f64> = logs.iter().map(|l| l.final_gap).collect();
    let (mean_gap, std_gap) = mean_std(&gaps);
    let mut action_hist = vec![0; n_actions];
    let mut step_action_hist = vec![vec![0; n_actions]; ns];
    for l in logs {
        for s in &l.steps {
            action_hist[s.action - 1] += 1;
            step_action_hist[s.step][s.action - 1] += 1;
        }
    }
    EvalRow {
        problem_id: problem_id.to_string(),
        runs: logs.len(),
        mean_gap,
        std_gap,
        mean_fes: logs.iter().map(|l| l.fes_used as f64).sum::<f64>() / logs.len().max(1) as f64,
        early_stops: logs.iter().filter(|l| l.early_stop).count(),
        action_hist,
        step_action_hist,
        final_gaps: gaps,
    }
}

/// Runs the checkpointed policy on every suite problem once per seed, in
/// `cfg.policy_mode`. Writes `eval_log.jsonl` and `eval_summary.csv`.
pub fn evaluate(
    ckpt: &Checkpoint,
    cfg: &RunConfig,
    suite: &Suite,
    seeds: &[u64],
    out: &OutDir,
) -> Result<EvalReport, HarnessError> {
    check_compatible(ckpt, cfg)?;
    let controller = Controller::Policy {
        net: ckpt.net(),
        mode: cfg.policy_mode,
    };
    let report = evaluate_controller(controller, cfg, suite, seeds)?;
    out.reset("eval_log.jsonl")?;
    for l in &report.logs {
        out.append_jsonl("eval_log.jsonl", &l.steps)?;
    }
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![
                r.problem_id.clone(),
                r.runs.to_string(),
                format!("{:e}", r.mean_gap),
                format!("{:e}", r.std_gap),
                r.mean_fes.to_string(),
                r.early_stops.to_string(),
            ];
            v.extend(r.action_hist.iter().map(|c| c.to_string()));
            v
        })
        .collect();
    let mut header = vec![
        "problem_id".to_string(),
        "runs".into(),
        "mean_gap".into(),
        "std_gap".into(),
        "mean_fes".into(),
        "early_stops".into(),
    ];
    header.extend(Strategy::POOL.iter().map(|s| format!("n_{}", s.short_name())));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.write_csv("eval_summary.csv", &header, &rows)?;
    Ok(report)
}

fn evaluate_controller(
    controller: Controller<'_>,
    cfg: &RunConfig,
    suite: &Suite,
    seeds: &[u64],
) -> Result<EvalReport, HarnessError> {
    let mut rows = Vec::with_capacity(suite.problems.len());
    let mut all = Vec::new();
    for p in &suite.problems {
        let mut logs = Vec::with_capacity(seeds.len());
        for &s in seeds {
            logs.push(run_episode(p, controller, cfg, s, None)?.log);
        }
        rows.push(summarize(&p.id, &logs, cfg.ns, cfg.n_actions()));
        all.extend(logs);
    }
    Ok(EvalReport { rows, logs: all })
}

/// A column of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arm {
    Lcc,
    RandomPolicy,
    Fixed(Strategy),
    Cmaes,
    SepCmaes,
}

impl Arm {
    pub const ALL: [Arm; 7] = [
        Arm::Lcc,
        Arm::RandomPolicy,
        Arm::Fixed(Strategy::MinVariance),
        Arm::Fixed(Strategy::Random),
        Arm::Fixed(Strategy::MaxVariance),
        Arm::Cmaes,
        Arm::SepCmaes,
    ];

    pub fn name(self) -> String {
        match self {
            Arm::Lcc => "lcc".into(),
            Arm::RandomPolicy => "random".into(),
            Arm::Fixed(s) => format!("fixed_{}", s.short_name()),
            Arm::Cmaes => "cmaes".into(),
            Arm::SepCmaes => "sep_cmaes".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub arms: Vec<Arm>,
    pub problems: Vec<String>,
    /// `[problem][arm][run]`
    pub gaps: Vec<Vec<Vec<f64>>>,
    /// `[problem][arm][run]`
    pub fes: Vec<Vec<Vec<u64>>>,
    /// `[problem][arm]`, min-max normalized mean gap (1 = best).
    pub scores: Vec<Vec<f64>>,
}

impl ComparisonTable {
    pub fn arm_index(&self, arm: Arm) -> Option<usize> {
        self.arms.iter().position(|a| *a == arm)
    }

    pub fn mean_std(&self, problem: usize, arm: usize) -> (f64, f64) {
        mean_std(&self.gaps[problem][arm])
    }

    /// Fraction of problems on which `a` scores strictly higher than `b`.
    pub fn win_rate(&self, a: Arm, b: Arm) -> f64 {
        let (ia, ib) = (self.arm_index(a).expect("arm a"), self.arm_index(b).expect("arm b"));
        let wins = self.scores.iter().filter(|s| s[ia] > s[ib]).count();
        wins as f64 / self.scores.len().max(1) as f64
    }

    pub fn mean_score(&self, arm: Arm) -> f64 {
        let i = self.arm_index(arm).expect("arm");
        self.scores.iter().map(|s| s[i]).sum::<f64>() / self.scores.len().max(1) as f64
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        for (p, pid) in self.problems.iter().enumerate() {
            for (a, arm) in self.arms.iter().enumerate() {
                let (m, s) = self.mean_std(p, a);
                let fes = self.fes[p][a].iter().sum::<u64>() as f64 / self.fes[p][a].len().max(1) as f64;
                rows.push(vec![
                    pid.clone(),
                    arm.name(),
                    format!("{m:e}"),
                    format!("{s:e}"),
                    fes.to_string(),
                    self.scores[p][a].to_string(),
                ]);
            }
        }
        rows
    }
}

/// Every comparison arm on every suite problem under the same budget and
/// the same run seeds. Writes `comparison.csv`.
pub fn compare_baselines(
    cfg: &RunConfig,
    suite: &Suite,
    trained: &Checkpoint,
    seeds: &[u64],
    out: &OutDir,
) -> Result<ComparisonTable, HarnessError> {
    check_compatible(trained, cfg)?;
    let arms = Arm::ALL.to_vec();
    let mut gaps = Vec::new();
    let mut fes = Vec::new();
    let mut scores = Vec::new();
    for p in &suite.problems {
        let mut pg = Vec::with_capacity(arms.len());
        let mut pf = Vec::with_capacity(arms.len());
        for arm in &arms {
            let mut g = Vec::with_capacity(seeds.len());
            let mut f = Vec::with_capacity(seeds.len());
            for &s in seeds {
                let (gap, used) = match arm {
                    Arm::Lcc | Arm::RandomPolicy | Arm::Fixed(_) => {
                        let controller = match arm {
                            Arm::Lcc => Controller::Policy {
                                net: trained.net(),
                                mode: cfg.policy_mode,
                            },
                            Arm::RandomPolicy => Controller::Uniform,
                            Arm::Fixed(st) => Controller::Fixed(*st),
                            _ => unreachable!(),
                        };
                        let log = run_episode(p, controller, cfg, s, None)?.log;
                        (log.final_gap, log.fes_used)
                    }
                    Arm::Cmaes | Arm::SepCmaes => {
                        let model = if *arm == Arm::Cmaes {
                            CovarianceModel::Full
                        } else {
                            CovarianceModel::Diagonal
                        };
                        let o = run_monolithic(p, model, cfg, s)?;
                        (o.final_gap, o.fes_used)
                    }
                };
                g.push(gap);
                f.push(used);
            }
            pg.push(g);
            pf.push(f);
        }
        let means: Vec<f64> = pg.iter().map(|g| mean_std(g).0).collect();
        scores.push(min_max_scores(&means));
        gaps.push(pg);
        fes.push(pf);
    }
    let table = ComparisonTable {
        arms,
        problems: suite.problems.iter().map(|p| p.id.clone()).collect(),
        gaps,
        fes,
        scores,
    };
    out.write_csv(
        "comparison.csv",
        &["problem_id", "arm", "mean_gap", "std_gap", "mean_fes", "score"],
        &table.csv_rows(),
    )?;
    Ok(table)
}

/// One ablation arm: which state block is removed and which reward trains it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationArmSpec {
    pub ablation: AblationArm,
    pub reward: RewardVariant,
}

impl AblationArmSpec {
    pub const FULL: AblationArmSpec = AblationArmSpec {
        ablation: AblationArm::None,
        reward: RewardVariant::Main,
    };

    /// Full state with each reward, plus each removed block with the main reward.
    pub fn standard() -> Vec<AblationArmSpec> {
        let main = |ablation| AblationArmSpec {
            ablation,
            reward: RewardVariant::Main,
        };
        vec![
            Self::FULL,
            main(AblationArm::Go),
            main(AblationArm::Sd),
            main(AblationArm::Ah),
            AblationArmSpec {
                ablation: AblationArm::None,
                reward: RewardVariant::R1,
            },
            AblationArmSpec {
                ablation: AblationArm::None,
                reward: RewardVariant::R2,
            },
        ]
    }

    pub fn name(&self) -> String {
        let state = match self.ablation {
            AblationArm::None => "full",
            AblationArm::Go => "wo_go",
            AblationArm::Sd => "wo_sd",
            AblationArm::Ah => "wo_ah",
        };
        let reward = match self.reward {
            RewardVariant::Main => "main",
            RewardVariant::R1 => "r1",
            RewardVariant::R2 => "r2",
        };
        format!("{state}/{reward}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub arms: Vec<AblationArmSpec>,
    pub problems: Vec<String>,
    pub train_seeds: Vec<u64>,
    /// `[arm][train seed][problem]`, mean final gap over evaluation runs.
    pub gaps: Vec<Vec<Vec<f64>>>,
    /// `[arm][problem]`, min-max normalized over arms of the seed-averaged gap.
    pub scores: Vec<Vec<f64>>,
    /// `[arm]`, average of `scores` over problems.
    pub mean_scores: Vec<f64>,
}

impl AblationReport {
    pub fn score_of(&self, arm: &AblationArmSpec) -> Option<f64> {
        self.arms.iter().position(|a| a == arm).map(|i| self.mean_scores[i])
    }
}

/// Trains and evaluates every arm once per training seed. Writes
/// `ablation.csv` with one row per arm.
pub fn ablate(
    cfg: &RunConfig,
    suite: &Suite,
    arms: &[AblationArmSpec],
    train_seeds: &[u64],
    eval_seeds: &[u64],
    out: &OutDir,
) -> Result<AblationReport, HarnessError> {
    let mut gaps = Vec::with_capacity(arms.len());
    for arm in arms {
        let mut per_seed = Vec::with_capacity(train_seeds.len());
        for &ts in train_seeds {
            let mut c = cfg.clone();
            c.ablation = arm.ablation;
            c.reward = arm.reward;
            c.seed = ts;
            let trained = train(&c, suite, &OutDir::none())?;
            let report = evaluate(&trained.checkpoint, &c, suite, eval_seeds, &OutDir::none())?;
            per_seed.push(report.rows.iter().map(|r| r.mean_gap).collect::<Vec<_>>());
        }
        gaps.push(per_seed);
    }
    let n_problems = suite.problems.len();
    let avg: Vec<Vec<f64>> = gaps
        .iter()
        .map(|per_seed| {
            (0..n_problems)
                .map(|p| per_seed.iter().map(|g| g[p]).sum::<f64>() / per_seed.len().max(1) as f64)
                .collect()
        })
        .collect();
    let mut scores = vec![vec![0.0; n_problems]; arms.len()];
    for p in 0..n_problems {
        let col: Vec<f64> = avg.iter().map(|a| a[p]).collect();
        for (a, s) in min_max_scores(&col).into_iter().enumerate() {
            scores[a][p] = s;
        }
    }
    let mean_scores: Vec<f64> = scores
        .iter()
        .map(|s| s.iter().sum::<f64>() / n_problems.max(1) as f64)
        .collect();
    let report = AblationReport {
        arms: arms.to_vec(),
        problems: suite.problems.iter().map(|p| p.id.clone()).collect(),
        train_seeds: train_seeds.to_vec(),
        gaps,
        scores,
        mean_scores,
    };
    let rows: Vec<Vec<String>> = report
        .arms
        .iter()
        .zip(&report.mean_scores)
        .map(|(a, s)| vec![a.name(), s.to_string()])
        .collect();
    out.write_csv("ablation.csv", &["arm", "mean_score"], &rows)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_suite, Category};

    fn tiny() -> (RunConfig, Suite) {
        let mut cfg = RunConfig::desk();
        cfg.dim = 20;
        cfg.m = 2;
        cfg.tg = 3;
        cfg.lambda = 6;
        cfg.ns = 3;
        cfg.epochs = 2;
        cfg.suite.dims = 20;
        cfg.suite.m = 2;
        cfg.suite.n_train = 2;
        cfg.suite.n_test = 1;
        cfg.suite.categories = vec![Category::FullySeparable, Category::Overlapping];
        let suite = make_suite(&cfg.suite).unwrap();
        (cfg, suite)
    }

    #[test]
    fn zero_epochs_gives_initial_params() {
        let (mut cfg, suite) = tiny();
        cfg.epochs = 0;
        let out = train(&cfg, &suite, &OutDir::none()).unwrap();
        assert_eq!(out.checkpoint, initial_checkpoint(&cfg));
    }

    #[test]
    fn evaluate_rejects_foreign_checkpoint() {
        let (cfg, suite) = tiny();
        let mut other = cfg.clone();
        other.ablation = AblationArm::Sd;
        let ckpt = initial_checkpoint(&other);
        assert!(matches!(
            evaluate(&ckpt, &cfg, &suite, &[1], &OutDir::none()),
            Err(HarnessError::ConfigMismatch(_))
        ));
    }

    #[test]
    fn eval_rows_and_histograms() {
        let (mut cfg, suite) = tiny();
        cfg.termination_error = f64::INFINITY;
        let ckpt = initial_checkpoint(&cfg);
        let r = evaluate(&ckpt, &cfg, &suite, &[4, 5], &OutDir::none()).unwrap();
        assert_eq!(r.rows.len(), suite.problems.len());
        for row in &r.rows {
            assert_eq!(row.action_hist.iter().sum::<u64>(), (cfg.ns * 2) as u64);
        }
    }

    #[test]
    fn arm_names_are_distinct() {
        let mut names: Vec<String> = Arm::ALL.iter().map(|a| a.name()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 7);
        let specs: Vec<String> = AblationArmSpec::standard().iter().map(|a| a.name()).collect();
        assert_eq!(specs[0], "full/main");
        assert_eq!(specs.len(), 6);
    }
}
