//! Observation features and step rewards for the decomposition agent.
//!
//! The state is the concatenation of three blocks:
//! global-optimization features (12 values), subgroup-decomposition features
//! (4 per subgroup, laid out block-major) and action-history features
//! (2 per strategy). Ablated blocks are zero-filled so the input width never
//! changes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GO_LEN: usize = 12;
const FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("subgroup record {0} is empty")]
    EmptyRecord(usize),
    #[error("expected {expected} {what}, got {got}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Correlation matrix of a covariance matrix, entries clamped to `[-1, 1]`.
pub fn corrcoef(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let n = cov.nrows();
    let sd: Vec<f64> = (0..n).map(|i| cov[(i, i)].max(FLOOR).sqrt()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            (cov[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
        }
    })
}

fn max_mean_min<'a>(values: impl Iterator<Item = &'a f64>, scale: f64) -> [f64; 3] {
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        let v = v / scale;
        hi = hi.max(v);
        lo = lo.min(v);
        sum += v;
        count += 1;
    }
    if count == 0 {
        return [0.0; 3];
    }
    [hi, sum / count as f64, lo]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoFeatures(pub [f64; GO_LEN]);

/// Inputs of the global-optimization block, all taken at the current step.
#[derive(Debug, Clone, Copy)]
pub struct GlobalSnapshot<'a> {
    pub mean: &'a DVector<f64>,
    pub cov: &'a DMatrix<f64>,
    pub sigma: f64,
    pub gbest: &'a [f64],
    pub gap: f64,
    pub prev_gap: f64,
    pub fes_remaining: u64,
    pub max_fes: u64,
    pub radius: f64,
}

pub fn go_features(s: &GlobalSnapshot<'_>) -> GoFeatures {
    let r = s.radius;
    let mut out = [0.0; GO_LEN];
    out[0..3].copy_from_slice(&max_mean_min(s.mean.iter(), r));
    let corr = corrcoef(s.cov);
    out[3..6].copy_from_slice(&max_mean_min(corr.iter(), 1.0));
    out[6] = s.sigma / r;
    out[7..10].copy_from_slice(&max_mean_min(s.gbest.iter(), r));
    out[10] = (s.gap / s.prev_gap.max(FLOOR)).clamp(0.0, 1.0);
    out[11] = s.fes_remaining as f64 / s.max_fes as f64;
    GoFeatures(out)
}

/// What one subgroup's CMA-ES run left behind.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupRecord {
    pub first_gen: Vec<DVector<f64>>,
    pub last_gen: Vec<DVector<f64>>,
    /// Every sampled point of every generation.
    pub all_points: Vec<DVector<f64>>,
    pub final_cov: DMatrix<f64>,
}

/// Subgroup features, block-major: `[corr_1..m, delta_1..m, var_1..m, dmax_1..m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdFeatures(pub Vec<f64>);

impl SdFeatures {
    pub fn zeros(m: usize) -> Self {
        SdFeatures(vec![0.0; 4 * m])
    }
}

pub fn sd_features(
    records: &[SubgroupRecord],
    lambda: usize,
    radius: f64,
    diameter: f64,
    m: usize,
) -> Result<SdFeatures, FeatureError> {
    if records.len() != m {
        return Err(FeatureError::SizeMismatch {
            what: "subgroup records",
            expected: m,
            got: records.len(),
        });
    }
    let mut out = vec![0.0; 4 * m];
    for (i, rec) in records.iter().enumerate() {
        if rec.first_gen.is_empty() || rec.last_gen.is_empty() || rec.all_points.is_empty() {
            return Err(FeatureError::EmptyRecord(i));
        }
        let n = rec.first_gen[0].len();
        if n == 0 {
            return Err(FeatureError::EmptyRecord(i));
        }

        let corr = corrcoef(&rec.final_cov);
        out[i] = corr.mean();

        let mut delta = DVector::zeros(n);
        for (last, first) in rec.last_gen.iter().zip(&rec.first_gen) {
            delta += last - first;
        }
        out[m + i] = delta.iter().sum::<f64>() / n as f64 / (lambda as f64 * radius);

        let count = rec.all_points.len() as f64;
        let mut var_sum = 0.0;
        for d in 0..n {
            let mean = rec.all_points.iter().map(|p| p[d]).sum::<f64>() / count;
            let var = rec
                .all_points
                .iter()
                .map(|p| (p[d] - mean).powi(2))
                .sum::<f64>()
                / count;
            var_sum += var;
        }
        out[2 * m + i] = var_sum / n as f64 / (radius * radius);

        let mut dmax = 0.0f64;
        for (a, pa) in rec.last_gen.iter().enumerate() {
            for pb in &rec.last_gen[a + 1..] {
                dmax = dmax.max((pa - pb).norm());
            }
        }
        out[3 * m + i] = (dmax / diameter).clamp(0.0, 1.0);
    }
    Ok(SdFeatures(out))
}

/// Per-strategy usage counters for the action-history block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionStats {
    pub count: Vec<u64>,
    pub reward_delta_sum: Vec<f64>,
    pub gbest_move_sum: Vec<f64>,
    last_reward: f64,
}

impl ActionStats {
    pub fn new(n_actions: usize) -> Self {
        ActionStats {
            count: vec![0; n_actions],
            reward_delta_sum: vec![0.0; n_actions],
            gbest_move_sum: vec![0.0; n_actions],
            last_reward: 0.0,
        }
    }

    /// Books step `t`: the reward change relative to step `t-1` (0 before
    /// the first step) and the distance gbest moved go to `action`'s bucket.
    pub fn record(&mut self, action: usize, reward: f64, gbest_move: f64) {
        self.count[action] += 1;
        self.reward_delta_sum[action] += reward - self.last_reward;
        self.gbest_move_sum[action] += gbest_move;
        self.last_reward = reward;
    }

    pub fn steps(&self) -> u64 {
        self.count.iter().sum()
    }
}

pub fn ah_features(stats: &ActionStats, radius: f64) -> Vec<f64> {
    let l = stats.count.len();
    let mut out = vec![0.0; 2 * l];
    for j in 0..l {
        let n = stats.count[j];
        if n == 0 {
            continue;
        }
        out[j] = stats.reward_delta_sum[j] / n as f64;
        out[l + j] = stats.gbest_move_sum[j] / (2.0 * radius * n as f64);
    }
    out
}

/// State blocks to zero out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ablation {
    pub without_go: bool,
    pub without_sd: bool,
    pub without_ah: bool,
}

impl Ablation {
    pub const NONE: Ablation = Ablation {
        without_go: false,
        without_sd: false,
        without_ah: false,
    };

    pub fn name(&self) -> &'static str {
        match (self.without_go, self.without_sd, self.without_ah) {
            (false, false, false) => "full",
            (true, false, false) => "wo_go",
            (false, true, false) => "wo_sd",
            (false, false, true) => "wo_ah",
            _ => "mixed",
        }
    }
}

pub fn state_len(m: usize, n_actions: usize) -> usize {
    GO_LEN + 4 * m + 2 * n_actions
}

/// Decision vector fed to both networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// FNV-1a over the little-endian bytes of every entry.
    pub fn digest(&self) -> u64 {
        crate::fnv1a(self.0.iter().flat_map(|v| v.to_le_bytes()))
    }
}

pub fn assemble_state(
    go: &GoFeatures,
    sd: &SdFeatures,
    ah: &[f64],
    m: usize,
    n_actions: usize,
    ablation: Ablation,
) -> Result<StateVector, FeatureError> {
    if sd.0.len() != 4 * m {
        return Err(FeatureError::SizeMismatch {
            what: "subgroup features",
            expected: 4 * m,
            got: sd.0.len(),
        });
    }
    if ah.len() != 2 * n_actions {
        return Err(FeatureError::SizeMismatch {
            what: "action-history features",
            expected: 2 * n_actions,
            got: ah.len(),
        });
    }
    let mut v = Vec::with_capacity(state_len(m, n_actions));
    let mut push = |block: &[f64], off: bool| {
        if off {
            v.extend(std::iter::repeat_n(0.0, block.len()));
        } else {
            v.extend_from_slice(block);
        }
    };
    push(&go.0, ablation.without_go);
    push(&sd.0, ablation.without_sd);
    push(ah, ablation.without_ah);
    Ok(StateVector(v))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardVariant {
    /// Step improvement normalized by the initial optimum gap.
    #[default]
    Main,
    /// Total improvement since the start, relative to the start.
    R1,
    /// Step improvement relative to the previous value.
    R2,
}

impl RewardVariant {
    pub fn name(self) -> &'static str {
        match self {
            RewardVariant::Main => "main",
            RewardVariant::R1 => "r1",
            RewardVariant::R2 => "r2",
        }
    }
}

pub fn reward(f_prev: f64, f_cur: f64, f0: f64, f_star: f64, variant: RewardVariant) -> f64 {
    match variant {
        RewardVariant::Main => (f_prev - f_cur) / (f0 - f_star).max(FLOOR),
        RewardVariant::R1 => (f0 - f_cur) / f0.max(FLOOR),
        RewardVariant::R2 => (f_prev - f_cur) / f_prev.max(FLOOR),
    }
}
