//! Synthetic large-scale benchmark problems.
//!
//! Every problem is a weighted sum of base functions applied to (optionally
//! rotated) subsets of the shifted decision vector. The subset layout decides
//! the separability category, mirroring the five CEC-2013 LSGO families. All
//! base functions are non-negative and vanish at the origin, so each problem
//! attains `f_star = 0` exactly at its shift vector.

use std::f64::consts::{E, PI};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("evaluation budget exhausted ({max} evaluations)")]
    BudgetExhausted { max: u64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dimension {dim} is not divisible by subgroup count {m}")]
    Indivisible { dim: usize, m: usize },
    #[error("invalid suite config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaseFunction {
    Elliptic,
    Rastrigin,
    Ackley,
    Rosenbrock,
    Schwefel12,
    Sphere,
}

impl BaseFunction {
    /// Evaluates the unshifted base function. Minimum 0 at the zero vector.
    pub fn eval(self, z: &[f64]) -> f64 {
        let n = z.len();
        match self {
            BaseFunction::Sphere => z.iter().map(|v| v * v).sum(),
            BaseFunction::Elliptic => {
                if n == 1 {
                    return z[0] * z[0];
                }
                let denom = (n - 1) as f64;
                z.iter()
                    .enumerate()
                    .map(|(i, v)| 1e6f64.powf(i as f64 / denom) * v * v)
                    .sum()
            }
            BaseFunction::Rastrigin => z
                .iter()
                .map(|v| v * v + 10.0 * (1.0 - (2.0 * PI * v).cos()))
                .sum(),
            BaseFunction::Ackley => {
                let nf = n as f64;
                let sq = z.iter().map(|v| v * v).sum::<f64>() / nf;
                let cs = z.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / nf;
                // Written so that both terms are exactly zero at the origin.
                let t1 = 20.0 * (1.0 - (-0.2 * sq.sqrt()).exp());
                let t2 = E - cs.exp();
                (t1 + t2).max(0.0)
            }
            BaseFunction::Rosenbrock => z
                .windows(2)
                .map(|w| {
                    let a = w[0] + 1.0;
                    let b = w[1] + 1.0;
                    100.0 * (a * a - b).powi(2) + w[0] * w[0]
                })
                .sum(),
            BaseFunction::Schwefel12 => {
                let mut prefix = 0.0;
                let mut total = 0.0;
                for v in z {
                    prefix += v;
                    total += prefix * prefix;
                }
                total
            }
        }
    }

    /// True when the function is a sum of per-coordinate terms.
    pub fn is_additively_separable(self) -> bool {
        matches!(
            self,
            BaseFunction::Sphere | BaseFunction::Elliptic | BaseFunction::Rastrigin
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    FullySeparable,
    PartialWithSep,
    PartialNoSep,
    Overlapping,
    NonSeparable,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::FullySeparable,
        Category::PartialWithSep,
        Category::PartialNoSep,
        Category::Overlapping,
        Category::NonSeparable,
    ];

    fn kinds(self) -> &'static [BaseFunction] {
        use BaseFunction::*;
        match self {
            Category::FullySeparable => &[Elliptic, Rastrigin, Sphere],
            Category::PartialWithSep | Category::PartialNoSep => {
                &[Elliptic, Rastrigin, Ackley, Schwefel12]
            }
            Category::Overlapping => &[Schwefel12, Rosenbrock],
            Category::NonSeparable => &[Schwefel12, Rosenbrock],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

/// Row-major square orthogonal matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Rotation {
    /// Haar-distributed orthogonal matrix from the QR factorization of a
    /// Gaussian matrix, with column signs fixed by the diagonal of R.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
        let qr = g.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..dim {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(q[(i, j)]);
            }
        }
        Rotation { dim, data }
    }

    pub fn apply(&self, v: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for i in 0..self.dim {
            let row = &self.data[i * self.dim..(i + 1) * self.dim];
            out.push(row.iter().zip(v).map(|(a, b)| a * b).sum());
        }
    }

    /// `max |QᵀQ − I|` over all entries.
    pub fn orthogonality_error(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n)
                    .map(|k| self.data[k * n + i] * self.data[k * n + j])
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub base: BaseFunction,
    pub indices: Vec<usize>,
    pub weight: f64,
    pub rotation: Option<Rotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub dim: usize,
    pub category: Category,
    pub split: Split,
    pub components: Vec<Component>,
    pub shift: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub f_star: f64,
}

/// Which part of the optimizer an evaluation is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FePhase {
    InitialPopulation,
    Subgroup,
    Decomposition,
    Monolithic,
}

impl FePhase {
    fn slot(self) -> usize {
        match self {
            FePhase::InitialPopulation => 0,
            FePhase::Subgroup => 1,
            FePhase::Decomposition => 2,
            FePhase::Monolithic => 3,
        }
    }
}

/// Function-evaluation budget. Every successful [`Problem::evaluate`] call
/// increments `used` by exactly one and charges the active phase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalBudget {
    used: u64,
    max: u64,
    phase: FePhase,
    per_phase: [u64; 4],
}

impl EvalBudget {
    pub fn new(max: u64) -> Self {
        assert!(max > 0, "budget must be positive");
        EvalBudget {
            used: 0,
            max,
            phase: FePhase::InitialPopulation,
            per_phase: [0; 4],
        }
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn max(&self) -> u64 {
        self.max
    }

    pub fn remaining(&self) -> u64 {
        self.max - self.used
    }

    pub fn is_exhausted(&self) -> bool {
        self.used >= self.max
    }

    pub fn set_phase(&mut self, phase: FePhase) {
        self.phase = phase;
    }

    pub fn phase(&self) -> FePhase {
        self.phase
    }

    pub fn used_in(&self, phase: FePhase) -> u64 {
        self.per_phase[phase.slot()]
    }

    fn charge(&mut self) -> Result<(), ProblemError> {
        if self.used >= self.max {
            return Err(ProblemError::BudgetExhausted { max: self.max });
        }
        self.used += 1;
        self.per_phase[self.phase.slot()] += 1;
        Ok(())
    }
}

impl Problem {
    pub fn radius(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }

    /// Euclidean diagonal of the search box.
    pub fn diameter(&self) -> f64 {
        2.0 * self.radius() * (self.dim as f64).sqrt()
    }

    pub fn evaluate(&self, x: &[f64], budget: &mut EvalBudget) -> Result<f64, ProblemError> {
        if x.len() != self.dim {
            return Err(ProblemError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        budget.charge()?;
        Ok(self.raw_value(x))
    }

    /// Objective value without budget accounting. Diagnostic use only.
    pub fn raw_value(&self, x: &[f64]) -> f64 {
        let z: Vec<f64> = x.iter().zip(&self.shift).map(|(a, s)| a - s).collect();
        let mut sub = Vec::new();
        let mut rotated = Vec::new();
        let mut total = 0.0;
        for c in &self.components {
            sub.clear();
            sub.extend(c.indices.iter().map(|&i| z[i]));
            let v = match &c.rotation {
                Some(q) => {
                    q.apply(&sub, &mut rotated);
                    c.base.eval(&rotated)
                }
                None => c.base.eval(&sub),
            };
            total += c.weight * v;
        }
        total
    }

    /// Known global optimum. Never charges a budget.
    pub fn optimum(&self) -> (Vec<f64>, f64) {
        (self.shift.clone(), self.f_star)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for v in x {
            *v = v.clamp(self.lower, self.upper);
        }
    }
}

fn default_bounds() -> [f64; 2] {
    [-100.0, 100.0]
}

/// Suite description, usually read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub dims: usize,
    pub m: usize,
    pub categories: Vec<Category>,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    #[serde(default = "default_bounds")]
    pub bounds: [f64; 2],
}

impl SuiteConfig {
    pub fn from_toml(text: &str) -> Result<Self, ProblemError> {
        toml::from_str(text).map_err(|e| ProblemError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub problems: Vec<Problem>,
}

impl Suite {
    pub fn train(&self) -> impl Iterator<Item = &Problem> {
        self.problems.iter().filter(|p| p.split == Split::Train)
    }

    pub fn test(&self) -> impl Iterator<Item = &Problem> {
        self.problems.iter().filter(|p| p.split == Split::Test)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("suite serializes")
    }
}

/// Builds a deterministic suite. Problems cycle through `categories`; the
/// first `n_train` are labelled for training.
pub fn make_suite(cfg: &SuiteConfig) -> Result<Suite, ProblemError> {
    if cfg.m == 0 || cfg.dims == 0 {
        return Err(ProblemError::InvalidConfig(
            "dims and m must be positive".into(),
        ));
    }
    if !cfg.dims.is_multiple_of(cfg.m) {
        return Err(ProblemError::Indivisible {
            dim: cfg.dims,
            m: cfg.m,
        });
    }
    if cfg.categories.is_empty() {
        return Err(ProblemError::InvalidConfig("no categories".into()));
    }
    let total = cfg.n_train + cfg.n_test;
    if total < cfg.categories.len() {
        return Err(ProblemError::InvalidConfig(format!(
            "{} problems cannot cover {} categories",
            total,
            cfg.categories.len()
        )));
    }
    let [lower, upper] = cfg.bounds;
    if !(upper > lower) || !lower.is_finite() || !upper.is_finite() {
        return Err(ProblemError::InvalidConfig("bounds must satisfy lower < upper".into()));
    }

    let mut seen = std::collections::HashMap::new();
    let mut problems = Vec::with_capacity(total);
    for idx in 0..total {
        let category = cfg.categories[idx % cfg.categories.len()];
        let occurrence = seen.entry(category).or_insert(0usize);
        let kinds = category.kinds();
        let base = kinds[*occurrence % kinds.len()];
        *occurrence += 1;

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(idx as u64 + 1);
        let split = if idx < cfg.n_train { Split::Train } else { Split::Test };
        let mut p = build_problem(category, base, cfg.dims, lower, upper, &mut rng);
        p.split = split;
        p.id = format!("p{:02}-{:?}-{:?}", idx, category, base);
        problems.push(p);
    }
    Ok(Suite { problems })
}

/// Builds one problem of the given category on `dim` variables.
pub fn build_problem<R: Rng + ?Sized>(
    category: Category,
    base: BaseFunction,
    dim: usize,
    lower: f64,
    upper: f64,
    rng: &mut R,
) -> Problem {
    let span = 0.8 * (upper - lower) / 2.0;
    let centre = (upper + lower) / 2.0;
    let shift: Vec<f64> = (0..dim)
        .map(|_| centre + span * rng.random_range(-1.0..1.0))
        .collect();
    let mut perm: Vec<usize> = (0..dim).collect();
    perm.shuffle(rng);

    let group = (dim / 10).max(2).min(dim);
    let weight = |rng: &mut R| 10f64.powf(rng.random_range(-1.0..1.0));
    let mut components = Vec::new();

    match category {
        Category::FullySeparable => {
            // Only additively separable kinds keep the label honest.
            let base = if base.is_additively_separable() {
                base
            } else {
                BaseFunction::Sphere
            };
            components.push(Component {
                base,
                indices: (0..dim).collect(),
                weight: 1.0,
                rotation: None,
            });
        }
        Category::PartialWithSep => {
            let n_groups = ((dim / 2) / group).max(1);
            let n_groups = if n_groups * group >= dim {
                (dim - 1) / group
            } else {
                n_groups
            };
            for g in 0..n_groups {
                let indices = perm[g * group..(g + 1) * group].to_vec();
                components.push(Component {
                    base,
                    rotation: Some(Rotation::random(indices.len(), rng)),
                    weight: weight(rng),
                    indices,
                });
            }
            let rest = perm[n_groups * group..].to_vec();
            if !rest.is_empty() {
                components.push(Component {
                    base,
                    indices: rest,
                    weight: 1.0,
                    rotation: None,
                });
            }
        }
        Category::PartialNoSep => {
            let n_groups = (dim / group).max(1);
            for g in 0..n_groups {
                let end = if g + 1 == n_groups { dim } else { (g + 1) * group };
                let indices = perm[g * group..end].to_vec();
                components.push(Component {
                    base,
                    rotation: Some(Rotation::random(indices.len(), rng)),
                    weight: weight(rng),
                    indices,
                });
            }
        }
        Category::Overlapping => {
            let overlap = (group / 5).max(1).min(group - 1);
            let step = group - overlap;
            let mut start = 0;
            loop {
                let end = (start + group).min(dim);
                let indices = perm[start..end].to_vec();
                components.push(Component {
                    base,
                    rotation: Some(Rotation::random(indices.len(), rng)),
                    weight: weight(rng),
                    indices,
                });
                if end >= dim {
                    break;
                }
                start += step;
            }
        }
        Category::NonSeparable => {
            components.push(Component {
                base,
                indices: (0..dim).collect(),
                weight: 1.0,
                rotation: None,
            });
        }
    }

    Problem {
        id: String::new(),
        dim,
        category,
        split: Split::Train,
        components,
        shift,
        lower,
        upper,
        f_star: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(base: BaseFunction, dim: usize) -> Problem {
        Problem {
            id: "t".into(),
            dim,
            category: Category::FullySeparable,
            split: Split::Test,
            components: vec![Component {
                base,
                indices: (0..dim).collect(),
                weight: 1.0,
                rotation: None,
            }],
            shift: vec![0.0; dim],
            lower: -100.0,
            upper: 100.0,
            f_star: 0.0,
        }
    }

    #[test]
    fn base_functions_vanish_at_origin() {
        for kind in [
            BaseFunction::Elliptic,
            BaseFunction::Rastrigin,
            BaseFunction::Ackley,
            BaseFunction::Rosenbrock,
            BaseFunction::Schwefel12,
            BaseFunction::Sphere,
        ] {
            for n in [1, 2, 7] {
                assert_eq!(kind.eval(&vec![0.0; n]), 0.0, "{kind:?} n={n}");
            }
        }
    }

    #[test]
    fn elliptic_two_dims() {
        let p = single(BaseFunction::Elliptic, 2);
        let mut b = EvalBudget::new(10);
        assert_eq!(p.evaluate(&[1.0, 1.0], &mut b).unwrap(), 1_000_001.0);
    }

    #[test]
    fn sphere_origin_is_zero() {
        let p = single(BaseFunction::Sphere, 5);
        let mut b = EvalBudget::new(1);
        assert_eq!(p.evaluate(&[0.0; 5], &mut b).unwrap(), 0.0);
    }

    #[test]
    fn budget_boundary() {
        let p = single(BaseFunction::Sphere, 3);
        let mut b = EvalBudget::new(2);
        p.evaluate(&[1.0; 3], &mut b).unwrap();
        p.evaluate(&[1.0; 3], &mut b).unwrap();
        assert_eq!(
            p.evaluate(&[1.0; 3], &mut b),
            Err(ProblemError::BudgetExhausted { max: 2 })
        );
        assert_eq!(b.used(), 2);
    }

    #[test]
    fn wrong_length_is_rejected_without_charge() {
        let p = single(BaseFunction::Sphere, 3);
        let mut b = EvalBudget::new(2);
        assert!(matches!(
            p.evaluate(&[1.0; 4], &mut b),
            Err(ProblemError::DimensionMismatch { expected: 3, got: 4 })
        ));
        assert_eq!(b.used(), 0);
    }

    #[test]
    fn phases_are_charged_separately() {
        let p = single(BaseFunction::Sphere, 2);
        let mut b = EvalBudget::new(10);
        p.evaluate(&[0.0; 2], &mut b).unwrap();
        b.set_phase(FePhase::Subgroup);
        p.evaluate(&[0.0; 2], &mut b).unwrap();
        p.evaluate(&[0.0; 2], &mut b).unwrap();
        assert_eq!(b.used_in(FePhase::InitialPopulation), 1);
        assert_eq!(b.used_in(FePhase::Subgroup), 2);
        assert_eq!(b.used_in(FePhase::Decomposition), 0);
    }

    #[test]
    fn indivisible_dims_rejected() {
        let cfg = SuiteConfig {
            dims: 10,
            m: 4,
            categories: vec![Category::FullySeparable],
            n_train: 1,
            n_test: 0,
            seed: 0,
            bounds: default_bounds(),
        };
        assert_eq!(
            make_suite(&cfg),
            Err(ProblemError::Indivisible { dim: 10, m: 4 })
        );
    }

    #[test]
    fn unknown_suite_keys_rejected() {
        let text = "dims = 8\nm = 2\ncategories = [\"Overlapping\"]\nn_train = 1\nn_test = 0\nseed = 3\ncolour = 1\n";
        assert!(SuiteConfig::from_toml(text).is_err());
    }

    #[test]
    fn overlapping_components_share_indices() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = build_problem(
            Category::Overlapping,
            BaseFunction::Schwefel12,
            40,
            -100.0,
            100.0,
            &mut rng,
        );
        for pair in p.components.windows(2) {
            let shared = pair[0]
                .indices
                .iter()
                .filter(|i| pair[1].indices.contains(i))
                .count();
            assert!(shared >= 1);
        }
        let mut covered = [false; 40];
        for c in &p.components {
            for &i in &c.indices {
                covered[i] = true;
            }
        }
        assert!(covered.iter().all(|&c| c));
    }
}
