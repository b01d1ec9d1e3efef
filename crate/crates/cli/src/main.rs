use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lcc_core::features::RewardVariant;
use lcc_core::harness::{
    ablate, compare_baselines, eval_seeds, evaluate, load_checkpoint, train, AblationArm,
    AblationArmSpec, Arm, OutDir, Profile, RunConfig,
};
use lcc_core::policy::PolicyMode;
use lcc_core::problems::{make_suite, Suite};

#[derive(Parser)]
#[command(name = "lcc", version, about = "Learned cooperative-coevolution CMA-ES")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file layered over the profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "desk")]
    profile: ProfileArg,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Evaluate with the argmax action instead of sampling.
    #[arg(long, global = true)]
    greedy: bool,
    #[arg(long, global = true, value_enum)]
    ablation: Option<AblationArg>,
    #[arg(long, global = true, value_enum)]
    reward: Option<RewardArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblationArg {
    None,
    Go,
    Sd,
    Ah,
}

#[derive(Clone, Copy, ValueEnum)]
enum RewardArg {
    Main,
    R1,
    R2,
}

#[derive(Subcommand)]
enum Command {
    /// Problem suite operations.
    Suite {
        #[command(subcommand)]
        action: SuiteCmd,
    },
    /// Train the policy; writes checkpoints and logs under --out.
    Train,
    /// Evaluate a checkpoint on the whole suite.
    Evaluate {
        /// Defaults to <out>/final.ckpt.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compare the trained policy against the baseline arms.
    Compare {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and evaluate every ablation arm.
    Ablate {
        #[arg(long, default_value_t = 5)]
        train_seeds: u64,
    },
    /// Checkpoint operations.
    Ckpt {
        #[command(subcommand)]
        action: CkptCmd,
    },
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Subcommand)]
enum SuiteCmd {
    /// Write suite.json under --out.
    Gen,
}

#[derive(Subcommand)]
enum CkptCmd {
    /// Print header fields of a checkpoint.
    Inspect { path: PathBuf },
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let base = RunConfig::profile(match c.profile {
        ProfileArg::Desk => Profile::Desk,
        ProfileArg::Paper => Profile::Paper,
    });
    let mut cfg = match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::from_toml_with_base(&text, &base)?
        }
        None => base,
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if c.greedy {
        cfg.policy_mode = PolicyMode::Greedy;
    }
    if let Some(a) = c.ablation {
        cfg.ablation = match a {
            AblationArg::None => AblationArm::None,
            AblationArg::Go => AblationArm::Go,
            AblationArg::Sd => AblationArm::Sd,
            AblationArg::Ah => AblationArm::Ah,
        };
    }
    if let Some(r) = c.reward {
        cfg.reward = match r {
            RewardArg::Main => RewardVariant::Main,
            RewardArg::R1 => RewardVariant::R1,
            RewardArg::R2 => RewardVariant::R2,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn checkpoint_path(out: &Path, given: &Option<PathBuf>) -> PathBuf {
    given.clone().unwrap_or_else(|| out.join("final.ckpt"))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let c = &cli.common;
    match &cli.command {
        Command::Ckpt {
            action: CkptCmd::Inspect { path },
        } => {
            let ck = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
            println!("fingerprint  {:016x}", ck.fingerprint);
            println!("m            {}", ck.m);
            println!("actions      {}", ck.n_actions);
            println!("in_width     {}", ck.in_width);
            println!("epoch        {}", ck.epoch);
            println!("rng_seed     {}", ck.rng_seed);
            println!("rng_word_pos {}", ck.rng_word_pos);
            println!("actor_params {}", ck.net().actor.params().len());
            println!("critic_params {}", ck.net().critic.params().len());
            println!("adam_steps   {} / {}", ck.learner.actor_opt.t, ck.learner.critic_opt.t);
            return Ok(());
        }
        Command::Config => {
            print!("{}", load_config(c)?.to_toml());
            return Ok(());
        }
        _ => {}
    }

    let cfg = load_config(c)?;
    let suite: Suite = make_suite(&cfg.suite)?;
    let out = OutDir::at(&c.out)?;
    match &cli.command {
        Command::Suite {
            action: SuiteCmd::Gen,
        } => {
            let path = c.out.join("suite.json");
            fs::write(&path, suite.to_json())?;
            for p in &suite.problems {
                println!("{}\t{:?}\t{:?}", p.id, p.category, p.split);
            }
            println!("wrote {}", path.display());
        }
        Command::Train => {
            let t = train(&cfg, &suite, &out)?;
            for (e, m) in t.metrics.iter().enumerate() {
                println!(
                    "epoch {:>3}  actor {:+.4e}  critic {:.4e}  entropy {:.4}",
                    e + 1,
                    m.actor_loss,
                    m.critic_loss,
                    m.mean_entropy
                );
            }
            println!("wrote {} checkpoints under {}", t.checkpoints_written, c.out.display());
        }
        Command::Evaluate { checkpoint } => {
            let ck = load_checkpoint(&checkpoint_path(&c.out, checkpoint))?;
            let seeds = eval_seeds(cfg.seed, cfg.eval_runs);
            let r = evaluate(&ck, &cfg, &suite, &seeds, &out)?;
            println!("{:<24} {:>12} {:>12} {:>10}  actions", "problem", "mean_gap", "std_gap", "mean_fes");
            for row in &r.rows {
                println!(
                    "{:<24} {:>12.4e} {:>12.4e} {:>10.0}  {:?}",
                    row.problem_id, row.mean_gap, row.std_gap, row.mean_fes, row.action_hist
                );
            }
        }
        Command::Compare { checkpoint } => {
            let ck = load_checkpoint(&checkpoint_path(&c.out, checkpoint))?;
            let seeds = eval_seeds(cfg.seed, cfg.eval_runs);
            let t = compare_baselines(&cfg, &suite, &ck, &seeds, &out)?;
            print!("{:<24}", "problem");
            for a in &t.arms {
                print!(" {:>11}", a.name());
            }
            println!();
            for (p, pid) in t.problems.iter().enumerate() {
                print!("{pid:<24}");
                for a in 0..t.arms.len() {
                    print!(" {:>11.3e}", t.mean_std(p, a).0);
                }
                println!();
            }
            print!("{:<24}", "mean score");
            for a in &t.arms {
                print!(" {:>11.3}", t.mean_score(*a));
            }
            println!();
            println!("lcc beats random on {:.0}% of problems", 100.0 * t.win_rate(Arm::Lcc, Arm::RandomPolicy));
        }
        Command::Ablate { train_seeds } => {
            if *train_seeds == 0 {
                bail!("--train-seeds must be positive");
            }
            let ts: Vec<u64> = (0..*train_seeds).map(|i| cfg.seed + i).collect();
            let seeds = eval_seeds(cfg.seed, cfg.eval_runs);
            let r = ablate(&cfg, &suite, &AblationArmSpec::standard(), &ts, &seeds, &out)?;
            for (a, s) in r.arms.iter().zip(&r.mean_scores) {
                println!("{:<10} {:.4}", a.name(), s);
            }
        }
        Command::Ckpt { .. } | Command::Config => unreachable!(),
    }
    Ok(())
}
