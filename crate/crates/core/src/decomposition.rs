//! Variance-ranked decomposition strategies.
//!
//! All three strategies look only at the diagonal of the global covariance
//! matrix and never evaluate the objective, so decomposition is free in terms
//! of function evaluations.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecompositionError {
    #[error("dimension {dim} is not divisible by subgroup count {m}")]
    Indivisible { dim: usize, m: usize },
    #[error("non-finite variance at index {0}")]
    NonFiniteVariance(usize),
    #[error("strategy index {0} outside the pool")]
    UnknownStrategy(usize),
}

/// The decomposition pool, in action order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    MinVariance,
    Random,
    MaxVariance,
}

impl Strategy {
    pub const POOL: [Strategy; 3] = [Strategy::MinVariance, Strategy::Random, Strategy::MaxVariance];

    pub fn id(self) -> StrategyId {
        StrategyId(match self {
            Strategy::MinVariance => 1,
            Strategy::Random => 2,
            Strategy::MaxVariance => 3,
        })
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Strategy::MinVariance => "mivd",
            Strategy::Random => "rd",
            Strategy::MaxVariance => "mavd",
        }
    }

    /// Runs the strategy on a covariance diagonal.
    pub fn partition<R: Rng + ?Sized>(
        self,
        diag: &[f64],
        m: usize,
        rng: &mut R,
    ) -> Result<Partition, DecompositionError> {
        match self {
            Strategy::MinVariance => mivd(diag, m),
            Strategy::Random => rd(diag.len(), m, rng),
            Strategy::MaxVariance => mavd(diag, m),
        }
    }
}

/// 1-based action index into [`Strategy::POOL`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StrategyId(pub usize);

impl StrategyId {
    pub fn from_index(index: usize) -> Self {
        StrategyId(index + 1)
    }

    pub fn index(self) -> usize {
        self.0 - 1
    }

    pub fn strategy(self) -> Result<Strategy, DecompositionError> {
        if self.0 == 0 || self.0 > Strategy::POOL.len() {
            return Err(DecompositionError::UnknownStrategy(self.0));
        }
        Ok(Strategy::POOL[self.0 - 1])
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `m` disjoint groups of `D / m` zero-based indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub groups: Vec<Vec<usize>>,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    GroupCount { expected: usize, got: usize },
    Size { group: usize, expected: usize, got: usize },
    OutOfRange { index: usize },
    Disjointness { index: usize },
    Coverage { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::GroupCount { expected, got } => {
                write!(f, "group count violated: expected {expected}, got {got}")
            }
            Violation::Size { group, expected, got } => {
                write!(f, "size violated: group {group} has {got} entries, expected {expected}")
            }
            Violation::OutOfRange { index } => write!(f, "range violated: index {index}"),
            Violation::Disjointness { index } => {
                write!(f, "disjointness violated: index {index} appears twice")
            }
            Violation::Coverage { index } => write!(f, "coverage violated: index {index} missing"),
        }
    }
}

fn check_divisible(dim: usize, m: usize) -> Result<usize, DecompositionError> {
    if m == 0 || dim == 0 || !dim.is_multiple_of(m) {
        return Err(DecompositionError::Indivisible { dim, m });
    }
    Ok(dim / m)
}

/// Indices sorted by ascending variance, ties by ascending index.
fn variance_ranking(diag: &[f64]) -> Result<Vec<usize>, DecompositionError> {
    if let Some(i) = diag.iter().position(|v| !v.is_finite()) {
        return Err(DecompositionError::NonFiniteVariance(i));
    }
    let mut order: Vec<usize> = (0..diag.len()).collect();
    order.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]).then(a.cmp(&b)));
    Ok(order)
}

/// Consecutive blocks of the variance ranking.
pub fn mivd(diag: &[f64], m: usize) -> Result<Partition, DecompositionError> {
    let size = check_divisible(diag.len(), m)?;
    let order = variance_ranking(diag)?;
    Ok(Partition {
        groups: order.chunks(size).map(<[usize]>::to_vec).collect(),
        strategy: Strategy::MinVariance,
    })
}

/// Stride-`m` picks over the variance ranking: group `k` takes ranks
/// `k, k + m, k + 2m, ...`.
pub fn mavd(diag: &[f64], m: usize) -> Result<Partition, DecompositionError> {
    check_divisible(diag.len(), m)?;
    let order = variance_ranking(diag)?;
    let groups = (0..m)
        .map(|k| order.iter().skip(k).step_by(m).copied().collect())
        .collect();
    Ok(Partition {
        groups,
        strategy: Strategy::MaxVariance,
    })
}

/// Uniformly random permutation chunked into `m` blocks.
pub fn rd<R: Rng + ?Sized>(dim: usize, m: usize, rng: &mut R) -> Result<Partition, DecompositionError> {
    let size = check_divisible(dim, m)?;
    let mut perm: Vec<usize> = (0..dim).collect();
    perm.shuffle(rng);
    Ok(Partition {
        groups: perm.chunks(size).map(<[usize]>::to_vec).collect(),
        strategy: Strategy::Random,
    })
}

/// Checks every partition invariant and reports the first violation.
pub fn validate(p: &Partition, dim: usize, m: usize) -> Result<(), Violation> {
    if p.groups.len() != m {
        return Err(Violation::GroupCount {
            expected: m,
            got: p.groups.len(),
        });
    }
    let size = dim.checked_div(m).unwrap_or(0);
    let mut seen = vec![false; dim];
    for (g, group) in p.groups.iter().enumerate() {
        if group.len() != size || size * m != dim {
            return Err(Violation::Size {
                group: g,
                expected: size,
                got: group.len(),
            });
        }
        for &i in group {
            if i >= dim {
                return Err(Violation::OutOfRange { index: i });
            }
            if seen[i] {
                return Err(Violation::Disjointness { index: i });
            }
            seen[i] = true;
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Violation::Coverage { index: i });
    }
    Ok(())
}
