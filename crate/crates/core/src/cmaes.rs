//! CMA-ES with the subspace slicing operations used by the cooperative
//! coevolution layer.
//!
//! Learning rates and recombination weights are the usual defaults from
//! Hansen's tutorial. A diagonal-only model (separable CMA-ES) shares the
//! same code path with the off-diagonal terms pinned to zero and learning
//! rates scaled by `(n + 2) / 3`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub const SIGMA_FLOOR: f64 = 1e-12;
const PSD_JITTER: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CmaError {
    #[error("offspring size must be at least 2, got {0}")]
    InvalidLambda(usize),
    #[error("initial step size must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("covariance matrix is not positive semidefinite after jitter repair")]
    FactorizationFailure,
    #[error("non-finite fitness at offspring {0}")]
    NonFiniteFitness(usize),
    #[error("offspring count {got} does not match lambda {expected}")]
    OffspringMismatch { expected: usize, got: usize },
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("duplicate index {0} in subspace selection")]
    DuplicateIndex(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceModel {
    Full,
    Diagonal,
}

/// Strategy constants derived from `(dim, lambda)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CmaParams {
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mueff: f64,
    pub cs: f64,
    pub ds: f64,
    pub cc: f64,
    pub c1: f64,
    pub cmu: f64,
    pub chi_n: f64,
}

impl CmaParams {
    pub fn standard(dim: usize, lambda: usize) -> Self {
        let n = dim as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mueff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let cc = (4.0 + mueff / n) / (n + 4.0 + 2.0 * mueff / n);
        let cs = (mueff + 2.0) / (n + mueff + 5.0);
        let c1 = 2.0 / ((n + 1.3).powi(2) + mueff);
        let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((n + 2.0).powi(2) + mueff));
        let ds = 1.0 + 2.0 * (((mueff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + cs;
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        CmaParams {
            lambda,
            mu,
            weights,
            mueff,
            cs,
            ds,
            cc,
            c1,
            cmu,
            chi_n,
        }
    }

    /// Learning rates of separable CMA-ES (Ros & Hansen 2008).
    pub fn separable(dim: usize, lambda: usize) -> Self {
        let mut p = Self::standard(dim, lambda);
        let scale = (dim as f64 + 2.0) / 3.0;
        p.c1 *= scale;
        p.cmu = (1.0 - p.c1).min(p.cmu * scale);
        p
    }
}

/// Eigen factor `C = B diag(d²) Bᵀ`, cached between generations.
#[derive(Debug, Clone)]
struct Factor {
    basis: DMatrix<f64>,
    scales: DVector<f64>,
    generation: u64,
}

/// Sampled population. `fitness` is NaN until filled in by the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct Offspring {
    pub points: Vec<DVector<f64>>,
    pub fitness: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CmaState {
    params: CmaParams,
    model: CovarianceModel,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    sigma: f64,
    sigma_ceiling: f64,
    ps: DVector<f64>,
    pc: DVector<f64>,
    generation: u64,
    factor: Option<Factor>,
}

impl CmaState {
    /// Fresh state with `C = I` and zero evolution paths.
    pub fn new(mean: DVector<f64>, sigma0: f64, lambda: usize) -> Result<Self, CmaError> {
        let dim = mean.len();
        Self::with_covariance(mean, DMatrix::identity(dim, dim), sigma0, lambda)
    }

    /// Separable (diagonal-only) variant with `C = I`.
    pub fn new_diagonal(mean: DVector<f64>, sigma0: f64, lambda: usize) -> Result<Self, CmaError> {
        let mut s = Self::new(mean, sigma0, lambda)?;
        s.params = CmaParams::separable(s.dim(), lambda);
        s.model = CovarianceModel::Diagonal;
        Ok(s)
    }

    /// Starts from an existing distribution, e.g. a slice of the global one.
    pub fn with_covariance(
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        sigma0: f64,
        lambda: usize,
    ) -> Result<Self, CmaError> {
        if lambda < 2 {
            return Err(CmaError::InvalidLambda(lambda));
        }
        if !(sigma0 > 0.0) || !sigma0.is_finite() {
            return Err(CmaError::InvalidSigma(sigma0));
        }
        let dim = mean.len();
        if dim == 0 || cov.nrows() != dim || cov.ncols() != dim {
            return Err(CmaError::ShapeMismatch(format!(
                "mean has {} entries, covariance is {}x{}",
                dim,
                cov.nrows(),
                cov.ncols()
            )));
        }
        Ok(CmaState {
            params: CmaParams::standard(dim, lambda),
            model: CovarianceModel::Full,
            mean,
            cov,
            sigma: sigma0,
            sigma_ceiling: f64::INFINITY,
            ps: DVector::zeros(dim),
            pc: DVector::zeros(dim),
            generation: 0,
            factor: None,
        })
    }

    /// Upper clamp for the step size (the search radius in practice).
    pub fn with_sigma_ceiling(mut self, ceiling: f64) -> Self {
        self.sigma_ceiling = ceiling;
        self.sigma = self.sigma.clamp(SIGMA_FLOOR, ceiling.max(SIGMA_FLOOR));
        self
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
    pub fn lambda(&self) -> usize {
        self.params.lambda
    }
    pub fn params(&self) -> &CmaParams {
        &self.params
    }
    pub fn model(&self) -> CovarianceModel {
        self.model
    }
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn generation(&self) -> u64 {
        self.generation
    }
    pub fn paths(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.ps, &self.pc)
    }

    /// Sets σ without clamping. Test hook for degenerate sampling.
    #[doc(hidden)]
    pub fn force_sigma(&mut self, sigma: f64) {
        self.sigma = sigma;
    }

    /// Consumes the state, returning `(mean, cov, sigma)`.
    pub fn into_parts(self) -> (DVector<f64>, DMatrix<f64>, f64) {
        (self.mean, self.cov, self.sigma)
    }

    fn eigen_interval(&self) -> u64 {
        let n = self.dim() as f64;
        let rate = (self.params.c1 + self.params.cmu) * n * 10.0;
        ((1.0 / rate).floor() as u64).max(1)
    }

    fn refresh_factor(&mut self) -> Result<(), CmaError> {
        let stale = match &self.factor {
            None => true,
            Some(f) => self.generation - f.generation >= self.eigen_interval(),
        };
        if !stale {
            return Ok(());
        }
        let (basis, scales) = match self.model {
            CovarianceModel::Diagonal => {
                let n = self.dim();
                let mut d = DVector::zeros(n);
                for i in 0..n {
                    let mut c = self.cov[(i, i)];
                    if !(c > 0.0) {
                        c += PSD_JITTER;
                    }
                    if !(c > 0.0) || !c.is_finite() {
                        return Err(CmaError::FactorizationFailure);
                    }
                    d[i] = c.sqrt();
                }
                (DMatrix::identity(n, n), d)
            }
            CovarianceModel::Full => match eigen_factor(&self.cov) {
                Some(f) => f,
                None => {
                    let n = self.dim();
                    let jittered = &self.cov + DMatrix::identity(n, n) * PSD_JITTER;
                    eigen_factor(&jittered).ok_or(CmaError::FactorizationFailure)?
                }
            },
        };
        self.factor = Some(Factor {
            basis,
            scales,
            generation: self.generation,
        });
        Ok(())
    }

    /// Draws λ points from `N(mean, σ² C)`.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Offspring, CmaError> {
        self.refresh_factor()?;
        let f = self.factor.as_ref().expect("factor refreshed");
        let n = self.dim();
        let mut points = Vec::with_capacity(self.params.lambda);
        let mut scaled = vec![0.0; n];
        for _ in 0..self.params.lambda {
            for (j, s) in scaled.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *s = f.scales[j] * z;
            }
            let mut x = DVector::zeros(n);
            for i in 0..n {
                let y = match self.model {
                    CovarianceModel::Diagonal => scaled[i],
                    CovarianceModel::Full => {
                        let mut acc = 0.0;
                        for (j, s) in scaled.iter().enumerate() {
                            acc += f.basis[(i, j)] * s;
                        }
                        acc
                    }
                };
                x[i] = self.mean[i] + self.sigma * y;
            }
            points.push(x);
        }
        Ok(Offspring {
            fitness: vec![f64::NAN; points.len()],
            points,
        })
    }

    /// `C^{-1/2} v` under the cached factor.
    fn inv_sqrt_times(&self, v: &DVector<f64>) -> DVector<f64> {
        let f = self.factor.as_ref().expect("factor present");
        let n = self.dim();
        match self.model {
            CovarianceModel::Diagonal => DVector::from_fn(n, |i, _| v[i] / f.scales[i]),
            CovarianceModel::Full => {
                let mut t = vec![0.0; n];
                for (j, tj) in t.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for i in 0..n {
                        acc += f.basis[(i, j)] * v[i];
                    }
                    *tj = acc / f.scales[j];
                }
                DVector::from_fn(n, |i, _| {
                    let mut acc = 0.0;
                    for (j, tj) in t.iter().enumerate() {
                        acc += f.basis[(i, j)] * tj;
                    }
                    acc
                })
            }
        }
    }

    /// One generation of mean, path, covariance and step-size adaptation.
    /// Diagonal-model states keep every off-diagonal entry at exactly 0.
    pub fn update(&mut self, offspring: &Offspring) -> Result<(), CmaError> {
        let lambda = self.params.lambda;
        if offspring.points.len() != lambda || offspring.fitness.len() != lambda {
            return Err(CmaError::OffspringMismatch {
                expected: lambda,
                got: offspring.points.len().min(offspring.fitness.len()),
            });
        }
        if let Some(i) = offspring.fitness.iter().position(|f| !f.is_finite()) {
            return Err(CmaError::NonFiniteFitness(i));
        }
        self.refresh_factor()?;

        let n = self.dim();
        let p = &self.params;
        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| {
            offspring.fitness[a]
                .partial_cmp(&offspring.fitness[b])
                .expect("finite")
                .then(a.cmp(&b))
        });

        let ys: Vec<DVector<f64>> = order[..p.mu]
            .iter()
            .map(|&k| (&offspring.points[k] - &self.mean) / self.sigma)
            .collect();
        let mut y_w = DVector::zeros(n);
        for (w, y) in p.weights.iter().zip(&ys) {
            y_w.axpy(*w, y, 1.0);
        }
        let new_mean = &self.mean + &y_w * self.sigma;

        let cs = p.cs;
        let whitened = self.inv_sqrt_times(&y_w);
        let ps_coef = (cs * (2.0 - cs) * p.mueff).sqrt();
        self.ps = &self.ps * (1.0 - cs) + whitened * ps_coef;

        let ps_norm = self.ps.norm();
        let gen = (self.generation + 1) as f64;
        let denom = (1.0 - (1.0 - cs).powf(2.0 * gen)).sqrt();
        let hsig = ps_norm / denom / p.chi_n < 1.4 + 2.0 / (n as f64 + 1.0);
        let hsig_f = if hsig { 1.0 } else { 0.0 };
        let cc = p.cc;
        let pc_coef = hsig_f * (cc * (2.0 - cc) * p.mueff).sqrt();
        self.pc = &self.pc * (1.0 - cc) + &y_w * pc_coef;

        let decay = 1.0 - p.c1 - p.cmu + (1.0 - hsig_f) * p.c1 * cc * (2.0 - cc);
        let entry = |cov: &DMatrix<f64>, pc: &DVector<f64>, i: usize, j: usize| {
            let mut rank_mu = 0.0;
            for (w, y) in p.weights.iter().zip(&ys) {
                rank_mu += w * y[i] * y[j];
            }
            decay * cov[(i, j)] + p.c1 * pc[i] * pc[j] + p.cmu * rank_mu
        };
        match self.model {
            CovarianceModel::Diagonal => {
                for i in 0..n {
                    self.cov[(i, i)] = entry(&self.cov, &self.pc, i, i);
                }
            }
            CovarianceModel::Full => {
                let mut next = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..=i {
                        let v = if i == j {
                            entry(&self.cov, &self.pc, i, i)
                        } else {
                            0.5 * (entry(&self.cov, &self.pc, i, j)
                                + entry(&self.cov, &self.pc, j, i))
                        };
                        next[(i, j)] = v;
                        next[(j, i)] = v;
                    }
                }
                self.cov = next;
            }
        }

        let sigma = self.sigma * ((cs / p.ds) * (ps_norm / p.chi_n - 1.0)).exp();
        self.sigma = sigma.clamp(SIGMA_FLOOR, self.sigma_ceiling.max(SIGMA_FLOOR));
        self.mean = new_mean;
        self.generation += 1;
        Ok(())
    }
}

/// Eigen factor with deterministic column signs; `None` if C is not PSD.
fn eigen_factor(cov: &DMatrix<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
    if cov.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let n = cov.nrows();
    if n == 1 {
        let c = cov[(0, 0)];
        return (c > 0.0).then(|| (DMatrix::identity(1, 1), DVector::from_element(1, c.sqrt())));
    }
    let eig = SymmetricEigen::new(cov.clone());
    let mut basis = eig.eigenvectors;
    let mut scales = DVector::zeros(n);
    for j in 0..n {
        let lam = eig.eigenvalues[j];
        if !(lam > 0.0) {
            return None;
        }
        scales[j] = lam.sqrt();
        let pivot = (0..n)
            .max_by(|&a, &b| basis[(a, j)].abs().total_cmp(&basis[(b, j)].abs()))
            .unwrap_or(0);
        if basis[(pivot, j)] < 0.0 {
            basis.column_mut(j).neg_mut();
        }
    }
    Some((basis, scales))
}

fn check_indices(subdims: &[usize], dim: usize) -> Result<(), CmaError> {
    let mut seen = vec![false; dim];
    for &i in subdims {
        if i >= dim {
            return Err(CmaError::IndexOutOfRange { index: i, dim });
        }
        if seen[i] {
            return Err(CmaError::DuplicateIndex(i));
        }
        seen[i] = true;
    }
    Ok(())
}

/// `C[subdims, subdims]` and `ω[subdims]`.
pub fn extract_sub(
    cov: &DMatrix<f64>,
    mean: &DVector<f64>,
    subdims: &[usize],
) -> Result<(DMatrix<f64>, DVector<f64>), CmaError> {
    let dim = mean.len();
    if cov.nrows() != dim || cov.ncols() != dim {
        return Err(CmaError::ShapeMismatch("covariance does not match mean".into()));
    }
    check_indices(subdims, dim)?;
    let k = subdims.len();
    let sub_cov = DMatrix::from_fn(k, k, |a, b| cov[(subdims[a], subdims[b])]);
    let sub_mean = DVector::from_fn(k, |a, _| mean[subdims[a]]);
    Ok((sub_cov, sub_mean))
}

/// Inverse of [`extract_sub`]: overwrites the `subdims × subdims` block and
/// the `subdims` entries of the mean. Cross terms are left untouched.
pub fn writeback_sub(
    cov: &mut DMatrix<f64>,
    mean: &mut DVector<f64>,
    subdims: &[usize],
    sub_cov: &DMatrix<f64>,
    sub_mean: &DVector<f64>,
) -> Result<(), CmaError> {
    let dim = mean.len();
    let k = subdims.len();
    if cov.nrows() != dim || cov.ncols() != dim {
        return Err(CmaError::ShapeMismatch("covariance does not match mean".into()));
    }
    if sub_cov.nrows() != k || sub_cov.ncols() != k || sub_mean.len() != k {
        return Err(CmaError::ShapeMismatch(format!(
            "{} indices but sub-block is {}x{} with {} mean entries",
            k,
            sub_cov.nrows(),
            sub_cov.ncols(),
            sub_mean.len()
        )));
    }
    check_indices(subdims, dim)?;
    for (a, &i) in subdims.iter().enumerate() {
        mean[i] = sub_mean[a];
        for (b, &j) in subdims.iter().enumerate() {
            cov[(i, j)] = sub_cov[(a, b)];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sphere(x: &DVector<f64>) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn init_defaults() {
        let s = CmaState::new(DVector::zeros(3), 100.0, 20).unwrap();
        assert_eq!(s.cov(), &DMatrix::<f64>::identity(3, 3));
        assert_eq!(s.generation(), 0);
        assert_eq!(s.params().mu, 10);
        let wsum: f64 = s.params().weights.iter().sum();
        assert!((wsum - 1.0).abs() < 1e-12);

        let s = CmaState::new(DVector::from_element(1, 5.0), 1.0, 4).unwrap();
        assert_eq!(s.mean()[0], 5.0);
        assert_eq!(s.paths().0[0], 0.0);
        assert_eq!(s.paths().1[0], 0.0);
    }

    #[test]
    fn lambda_below_two_rejected() {
        assert_eq!(
            CmaState::new(DVector::zeros(2), 1.0, 1).unwrap_err(),
            CmaError::InvalidLambda(1)
        );
    }

    #[test]
    fn zero_sigma_collapses_samples() {
        let mut s = CmaState::new(DVector::from_vec(vec![1.0, -2.0]), 1.0, 6).unwrap();
        s.force_sigma(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let off = s.sample(&mut rng).unwrap();
        for p in &off.points {
            assert_eq!(p, s.mean());
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let mut a = CmaState::new(DVector::zeros(4), 2.0, 8).unwrap();
        let mut b = a.clone();
        let oa = a.sample(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let ob = b.sample(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(oa.points, ob.points);
    }

    #[test]
    fn identical_offspring_keep_mean() {
        let mean = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let mut s = CmaState::new(mean.clone(), 1.0, 6).unwrap();
        let off = Offspring {
            points: vec![mean.clone(); 6],
            fitness: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        };
        s.update(&off).unwrap();
        assert!((s.mean() - &mean).amax() < 1e-12);
        assert_eq!(s.generation(), 1);
    }

    #[test]
    fn non_finite_fitness_rejected() {
        let mut s = CmaState::new(DVector::zeros(2), 1.0, 4).unwrap();
        let mut off = s.sample(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        off.fitness = vec![1.0, f64::NAN, 0.0, 2.0];
        assert_eq!(s.update(&off), Err(CmaError::NonFiniteFitness(1)));
        assert_eq!(s.generation(), 0);
    }

    #[test]
    fn sigma_respects_ceiling() {
        let mut s = CmaState::new(DVector::zeros(3), 1.0, 6)
            .unwrap()
            .with_sigma_ceiling(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // Rewarding far-away points inflates σ; the ceiling must hold.
        for _ in 0..30 {
            let mut off = s.sample(&mut rng).unwrap();
            off.fitness = off.points.iter().map(|p| -sphere(p)).collect();
            s.update(&off).unwrap();
            assert!(s.sigma() <= 1.0 && s.sigma() >= SIGMA_FLOOR);
        }
    }

    #[test]
    fn diagonal_update_keeps_off_diagonal_zero() {
        let mut s = CmaState::new_diagonal(DVector::from_element(5, 3.0), 2.0, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mut off = s.sample(&mut rng).unwrap();
            off.fitness = off
                .points
                .iter()
                .map(|p| p.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v * v).sum())
                .collect();
            s.update(&off).unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    if i != j {
                        assert_eq!(s.cov()[(i, j)], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn one_dimensional_models_agree() {
        let mut full = CmaState::new(DVector::from_element(1, 4.0), 1.5, 6).unwrap();
        let mut diag = CmaState::new_diagonal(DVector::from_element(1, 4.0), 1.5, 6).unwrap();
        let mut ra = ChaCha8Rng::seed_from_u64(11);
        let mut rb = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let mut oa = full.sample(&mut ra).unwrap();
            let mut ob = diag.sample(&mut rb).unwrap();
            assert_eq!(oa.points, ob.points);
            oa.fitness = oa.points.iter().map(sphere).collect();
            ob.fitness = ob.points.iter().map(sphere).collect();
            full.update(&oa).unwrap();
            diag.update(&ob).unwrap();
            assert_eq!(full.mean(), diag.mean());
            assert_eq!(full.cov(), diag.cov());
            assert_eq!(full.sigma(), diag.sigma());
        }
    }

    #[test]
    fn extract_identity_and_permutation() {
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let mean = DVector::from_vec(vec![10.0, 20.0, 30.0]);
        let (c, m) = extract_sub(&cov, &mean, &[0, 1, 2]).unwrap();
        assert_eq!((c, m), (cov.clone(), mean.clone()));

        let (c, m) = extract_sub(&cov, &mean, &[2, 0]).unwrap();
        assert_eq!(c, DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0])));
        assert_eq!(m, DVector::from_vec(vec![30.0, 10.0]));
    }

    #[test]
    fn extract_rejects_bad_indices() {
        let cov = DMatrix::<f64>::identity(3, 3);
        let mean = DVector::zeros(3);
        assert_eq!(
            extract_sub(&cov, &mean, &[0, 3]).unwrap_err(),
            CmaError::IndexOutOfRange { index: 3, dim: 3 }
        );
        assert_eq!(
            extract_sub(&cov, &mean, &[1, 1]).unwrap_err(),
            CmaError::DuplicateIndex(1)
        );
    }

    #[test]
    fn writeback_shape_mismatch() {
        let mut cov = DMatrix::<f64>::identity(3, 3);
        let mut mean = DVector::zeros(3);
        let err = writeback_sub(
            &mut cov,
            &mut mean,
            &[0, 1],
            &DMatrix::identity(3, 3),
            &DVector::zeros(2),
        );
        assert!(matches!(err, Err(CmaError::ShapeMismatch(_))));
    }

    #[test]
    fn indefinite_matrix_fails_factorization() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let mut s = CmaState::with_covariance(DVector::zeros(2), cov, 1.0, 4).unwrap();
        assert_eq!(
            s.sample(&mut ChaCha8Rng::seed_from_u64(0)).unwrap_err(),
            CmaError::FactorizationFailure
        );
    }

    #[test]
    fn marginally_singular_matrix_is_repaired() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let mut s = CmaState::with_covariance(DVector::zeros(2), cov, 1.0, 4).unwrap();
        assert!(s.sample(&mut ChaCha8Rng::seed_from_u64(0)).is_ok());
    }
}
