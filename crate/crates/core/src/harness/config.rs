use serde::{Deserialize, Serialize};

use crate::decomposition::Strategy;
use crate::features::{state_len, Ablation, RewardVariant};
use crate::policy::PolicyMode;
use crate::ppo::TrainConfig;
use crate::problems::{Category, SuiteConfig};

use super::HarnessError;

/// Which state block an ablation run zero-fills.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationArm {
    #[default]
    None,
    Go,
    Sd,
    Ah,
}

impl AblationArm {
    pub fn flags(self) -> Ablation {
        Ablation {
            without_go: self == AblationArm::Go,
            without_sd: self == AblationArm::Sd,
            without_ah: self == AblationArm::Ah,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(AblationArm::None),
            "go" => Some(AblationArm::Go),
            "sd" => Some(AblationArm::Sd),
            "ah" => Some(AblationArm::Ah),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Paper,
}

/// Everything one experiment needs. Loaded from TOML layered over a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dim: usize,
    pub m: usize,
    /// Generations per subgroup run.
    pub tg: usize,
    pub lambda: usize,
    /// Decisions per episode.
    pub ns: usize,
    pub epochs: usize,
    pub termination_error: f64,
    pub seed: u64,
    pub eval_runs: usize,
    pub policy_mode: PolicyMode,
    pub ablation: AblationArm,
    pub reward: RewardVariant,
    /// Record wall-clock milliseconds in step logs. Off by default so logs
    /// are byte-reproducible.
    pub log_wall_time: bool,
    /// Optional explicit budgets; must agree with `tg·λ·m·ns` and `tg·λ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_fes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_max_fes: Option<u64>,
    pub ppo: TrainConfig,
    pub suite: SuiteConfig,
}

impl RunConfig {
    /// D=100, m=5, ns=10, TG=20, λ=10; 6 training and 4 test problems.
    pub fn desk() -> Self {
        RunConfig {
            dim: 100,
            m: 5,
            tg: 20,
            lambda: 10,
            ns: 10,
            epochs: 30,
            termination_error: 1e-8,
            seed: 1,
            eval_runs: 10,
            policy_mode: PolicyMode::Stochastic,
            ablation: AblationArm::None,
            reward: RewardVariant::Main,
            log_wall_time: false,
            max_fes: None,
            sub_max_fes: None,
            ppo: TrainConfig::default(),
            suite: SuiteConfig {
                dims: 100,
                m: 5,
                categories: Category::ALL.to_vec(),
                n_train: 6,
                n_test: 4,
                seed: 2024,
                bounds: [-100.0, 100.0],
            },
        }
    }

    /// D=1000, m=10, ns=20, TG=50, λ=20, 90 epochs: MaxFEs = 2·10⁵.
    pub fn paper() -> Self {
        RunConfig {
            dim: 1000,
            m: 10,
            tg: 50,
            lambda: 20,
            ns: 20,
            epochs: 90,
            eval_runs: 25,
            suite: SuiteConfig {
                dims: 1000,
                m: 10,
                categories: Category::ALL.to_vec(),
                n_train: 10,
                n_test: 5,
                seed: 2024,
                bounds: [-100.0, 100.0],
            },
            ..Self::desk()
        }
    }

    pub fn profile(p: Profile) -> Self {
        match p {
            Profile::Desk => Self::desk(),
            Profile::Paper => Self::paper(),
        }
    }

    /// Parses TOML, filling unspecified keys from `base`. Unknown keys fail.
    pub fn from_toml_with_base(text: &str, base: &RunConfig) -> Result<Self, HarnessError> {
        let overlay: toml::Table =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let mut merged = toml::Table::try_from(base).map_err(|e| HarnessError::Config(e.to_string()))?;
        merge(&mut merged, overlay);
        let cfg: RunConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn n_actions(&self) -> usize {
        Strategy::POOL.len()
    }

    pub fn state_width(&self) -> usize {
        state_len(self.m, self.n_actions())
    }

    pub fn sub_budget(&self) -> u64 {
        (self.tg * self.lambda) as u64
    }

    /// `TG · λ · m · ns`.
    pub fn total_budget(&self) -> u64 {
        self.sub_budget() * (self.m * self.ns) as u64
    }

    pub fn ablation_flags(&self) -> Ablation {
        self.ablation.flags()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.m == 0 || self.dim == 0 || !self.dim.is_multiple_of(self.m) {
            return bad(format!("dim {} not divisible by m {}", self.dim, self.m));
        }
        if self.lambda < 2 || self.tg == 0 || self.ns == 0 {
            return bad("lambda >= 2, tg >= 1 and ns >= 1 are required".into());
        }
        if self.suite.dims != self.dim || self.suite.m != self.m {
            return bad(format!(
                "suite ({}, m={}) disagrees with run ({}, m={})",
                self.suite.dims, self.suite.m, self.dim, self.m
            ));
        }
        if let Some(v) = self.max_fes {
            if v != self.total_budget() {
                return bad(format!("max_fes {} != tg*lambda*m*ns = {}", v, self.total_budget()));
            }
        }
        if let Some(v) = self.sub_max_fes {
            if v != self.sub_budget() {
                return bad(format!("sub_max_fes {} != tg*lambda = {}", v, self.sub_budget()));
            }
        }
        if self.termination_error.is_nan() {
            return bad("termination_error is NaN".into());
        }
        if !(self.ppo.gamma > 0.0 && self.ppo.gamma <= 1.0) || !(self.ppo.clip > 0.0) {
            return bad("ppo.gamma must be in (0, 1] and ppo.clip > 0".into());
        }
        Ok(())
    }

    /// Hash of every field that shapes the policy's input or meaning.
    pub fn fingerprint(&self) -> u64 {
        let key = format!(
            "dim={};m={};L={};tg={};lambda={};ns={};ablation={:?}",
            self.dim,
            self.m,
            self.n_actions(),
            self.tg,
            self.lambda,
            self.ns,
            self.ablation
        );
        crate::fnv1a(key.into_bytes())
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
