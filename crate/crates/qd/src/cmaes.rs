//! Covariance matrix adaptation: sampling, rank-based recombination,
//! covariance and step-size adaptation, and restart detection.
//!
//! This is the strategy core shared by the plain optimizer baseline and by
//! every emitter. Callers own the selection policy: they pass `update` a list
//! of parents already ranked best-first, which is what lets archive-driven
//! rankings reuse the same adaptation machinery unchanged. Parent lists
//! shorter than `mu` truncate the weight vector and renormalize it; lists
//! longer than `mu` use only the leading `mu` entries (standard truncation
//! selection).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{QdError, SearchPoint};

/// Step sizes below this are treated as converged.
pub const SIGMA_FLOOR: f64 = 1e-12;
/// Covariance condition numbers above this trigger a restart.
pub const CONDITION_CEILING: f64 = 1e14;
/// Eigenvalues are floored here to keep the covariance positive-definite.
pub const EIGEN_FLOOR: f64 = 1e-20;
/// Generations without improvement before a restart is requested.
pub const DEFAULT_RESTART_PATIENCE: usize = 50;

/// Fixed strategy parameters derived from the dimension and population size.
#[derive(Debug, Clone)]
pub struct CmaParams {
    pub lambda: usize,
    pub mu: usize,
    /// Recombination weights, length `mu`, descending, summing to 1.
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    /// Expected norm of an n-dimensional standard normal vector.
    pub chi_n: f64,
    /// Updates between eigendecomposition refreshes.
    pub eigen_interval: usize,
}

impl CmaParams {
    /// Standard parameterization: `mu = lambda / 2`, log-decreasing weights,
    /// and the usual cumulation/learning-rate expressions in `mu_eff` and `n`.
    pub fn new(dim: usize, lambda: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        assert!(lambda >= 1, "population size must be positive");
        let n = dim as f64;
        let mu = (lambda / 2).max(1);

        let raw: Vec<f64> = (0..mu)
            .map(|i| (mu as f64 + 0.5).ln() - ((i + 1) as f64).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu = (2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff))
            .min(1.0 - c_1);
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        let eigen_interval = ((1.0 / (10.0 * n * (c_1 + c_mu))).floor() as usize).max(1);

        Self {
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_mu,
            c_1,
            chi_n,
            eigen_interval,
        }
    }

    /// Cumulative step-size adaptation factor for a given step-size path norm.
    /// Equals exactly 1 when the path norm matches its expectation.
    pub fn step_size_multiplier(&self, p_sigma_norm: f64) -> f64 {
        ((self.c_sigma / self.d_sigma) * (p_sigma_norm / self.chi_n - 1.0)).exp()
    }
}

/// Cached eigendecomposition of the covariance: `C = B diag(scales^2) B^T`.
#[derive(Debug, Clone)]
struct EigenCache {
    /// Eigenvector matrix B.
    vectors: DMatrix<f64>,
    /// Square roots of the eigenvalues.
    scales: DVector<f64>,
    /// Updates applied to C since this decomposition was computed.
    stale_updates: usize,
}

/// Distribution state of one CMA-ES instance.
#[derive(Debug, Clone)]
pub struct CmaState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    sigma: f64,
    path_sigma: DVector<f64>,
    path_c: DVector<f64>,
    /// Generations since the last reset.
    generation: u64,
    eigen: EigenCache,
    /// Times eigenvalue flooring had to repair the covariance.
    repairs: u64,
    /// Cleared when an update produces non-finite state; sampling then fails
    /// until the caller resets.
    healthy: bool,
}

impl CmaState {
    pub fn new(mean: SearchPoint, sigma0: f64) -> Self {
        let dim = mean.len();
        assert!(dim >= 1, "mean must be non-empty");
        Self {
            mean: DVector::from_vec(mean),
            cov: DMatrix::identity(dim, dim),
            sigma: sigma0,
            path_sigma: DVector::zeros(dim),
            path_c: DVector::zeros(dim),
            generation: 0,
            eigen: EigenCache {
                vectors: DMatrix::identity(dim, dim),
                scales: DVector::from_element(dim, 1.0),
                stale_updates: 0,
            },
            repairs: 0,
            healthy: true,
        }
    }

    /// Starts from an explicit covariance (refreshes the eigen cache).
    pub fn with_covariance(mean: SearchPoint, sigma0: f64, cov: Vec<Vec<f64>>) -> Self {
        let mut state = Self::new(mean, sigma0);
        let n = state.dim();
        assert_eq!(cov.len(), n);
        state.cov = DMatrix::from_fn(n, n, |r, c| cov[r][c]);
        state.refresh_eigen();
        state
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn repairs(&self) -> u64 {
        self.repairs
    }

    pub fn covariance(&self, row: usize, col: usize) -> f64 {
        self.cov[(row, col)]
    }

    /// Condition number of C from the cached eigenvalues.
    pub fn condition_number(&self) -> f64 {
        let max = self.eigen.scales.max();
        let min = self.eigen.scales.min();
        if min <= 0.0 {
            f64::INFINITY
        } else {
            (max / min).powi(2)
        }
    }

    /// Frobenius-relative reconstruction error of the eigen cache against C.
    /// Zero-staleness caches reconstruct to numerical precision.
    pub fn eigen_residual(&self) -> f64 {
        let d2 = DMatrix::from_diagonal(&self.eigen.scales.map(|s| s * s));
        let rebuilt = &self.eigen.vectors * d2 * self.eigen.vectors.transpose();
        (&rebuilt - &self.cov).norm() / self.cov.norm().max(f64::MIN_POSITIVE)
    }

    /// Draws one point from `N(mean, sigma^2 C)` using the cached
    /// decomposition (maintained by `update` and `reset`).
    pub fn sample_one<R: Rng>(&self, rng: &mut R) -> Result<SearchPoint, QdError> {
        if !self.healthy || !self.sigma.is_finite() || self.mean.iter().any(|v| !v.is_finite()) {
            return Err(QdError::RestartRequired(
                "sampling distribution is non-finite".into(),
            ));
        }
        let n = self.dim();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &self.eigen.vectors * z.component_mul(&self.eigen.scales);
        Ok((&self.mean + self.sigma * y).as_slice().to_vec())
    }

    /// Draws `count` independent points; identical seeds give identical lists.
    pub fn sample<R: Rng>(&self, count: usize, rng: &mut R) -> Result<Vec<SearchPoint>, QdError> {
        (0..count).map(|_| self.sample_one(rng)).collect()
    }

    /// One adaptation step from parents ranked best-first: weighted
    /// recombination of the mean, cumulation of both evolution paths, rank-1
    /// plus rank-mu covariance update, and CSA step-size control.
    pub fn update(&mut self, params: &CmaParams, ranked_parents: &[SearchPoint]) -> Result<(), QdError> {
        if ranked_parents.is_empty() {
            return Err(QdError::NoParents);
        }
        let n = self.dim();
        let k = ranked_parents.len().min(params.mu);

        // Truncate the weight vector to the parents supplied and renormalize;
        // the effective selection mass follows the weights actually used.
        let wsum: f64 = params.weights[..k].iter().sum();
        let weights: Vec<f64> = params.weights[..k].iter().map(|w| w / wsum).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let old_mean = self.mean.clone();
        let mut new_mean = DVector::zeros(n);
        for (w, parent) in weights.iter().zip(ranked_parents) {
            debug_assert_eq!(parent.len(), n);
            for (acc, &x) in new_mean.iter_mut().zip(parent.iter()) {
                *acc += w * x;
            }
        }

        let y_w = (&new_mean - &old_mean) / self.sigma;

        // C^{-1/2} y_w via the cached decomposition.
        let whitened = {
            let projected = self.eigen.vectors.transpose() * &y_w;
            &self.eigen.vectors * projected.component_div(&self.eigen.scales)
        };

        let c_sigma = params.c_sigma;
        self.path_sigma = (1.0 - c_sigma) * &self.path_sigma
            + (c_sigma * (2.0 - c_sigma) * mu_eff).sqrt() * whitened;

        let p_sigma_norm = self.path_sigma.norm();
        let decay = 1.0 - (1.0 - c_sigma).powf(2.0 * (self.generation + 1) as f64);
        let h_sigma = if p_sigma_norm / decay.sqrt()
            < (1.4 + 2.0 / (n as f64 + 1.0)) * params.chi_n
        {
            1.0
        } else {
            0.0
        };

        let c_c = params.c_c;
        self.path_c =
            (1.0 - c_c) * &self.path_c + h_sigma * (c_c * (2.0 - c_c) * mu_eff).sqrt() * &y_w;

        let mut rank_mu = DMatrix::zeros(n, n);
        for (w, parent) in weights.iter().zip(ranked_parents) {
            let y = (DVector::from_column_slice(parent) - &old_mean) / self.sigma;
            rank_mu.ger(*w, &y, &y, 1.0);
        }

        let delta_h = (1.0 - h_sigma) * c_c * (2.0 - c_c);
        let base = 1.0 - params.c_1 - params.c_mu + params.c_1 * delta_h;
        self.cov *= base;
        self.cov.ger(params.c_1, &self.path_c, &self.path_c, 1.0);
        self.cov.zip_apply(&rank_mu, |c, r| *c += params.c_mu * r);

        // Symmetrize away floating-point drift.
        let transposed = self.cov.transpose();
        self.cov += transposed;
        self.cov *= 0.5;

        self.sigma *= params.step_size_multiplier(p_sigma_norm);
        self.mean = new_mean;
        self.generation += 1;

        let finite = self.sigma.is_finite()
            && self.mean.iter().all(|v| v.is_finite())
            && self.cov.iter().all(|v| v.is_finite());
        if !finite {
            self.healthy = false;
            return Ok(());
        }

        self.eigen.stale_updates += 1;
        if self.eigen.stale_updates >= params.eigen_interval {
            self.refresh_eigen();
        }
        Ok(())
    }

    /// True when the search should be abandoned and re-seeded: stalled for the
    /// whole patience window, step size collapsed, covariance degenerate, or
    /// non-finite state.
    pub fn should_restart(&self, recent_improvement: &[bool], patience: usize) -> bool {
        if !self.healthy
            || !self.sigma.is_finite()
            || self.mean.iter().any(|v| !v.is_finite())
            || self.path_sigma.iter().any(|v| !v.is_finite())
        {
            return true;
        }
        if self.sigma < SIGMA_FLOOR {
            return true;
        }
        if self.condition_number() > CONDITION_CEILING {
            return true;
        }
        recent_improvement.len() >= patience
            && recent_improvement[recent_improvement.len() - patience..]
                .iter()
                .all(|improved| !improved)
    }

    /// Re-seeds the distribution at a new mean: identity covariance, zeroed
    /// evolution paths, fresh eigen cache, generation counter rewound.
    pub fn reset(&mut self, new_mean: &[f64], sigma0: f64) {
        let n = self.dim();
        assert_eq!(new_mean.len(), n, "reset must preserve the dimension");
        self.mean = DVector::from_column_slice(new_mean);
        self.cov = DMatrix::identity(n, n);
        self.sigma = sigma0;
        self.path_sigma = DVector::zeros(n);
        self.path_c = DVector::zeros(n);
        self.generation = 0;
        self.eigen = EigenCache {
            vectors: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
            stale_updates: 0,
        };
        self.healthy = true;
    }

    fn refresh_eigen(&mut self) {
        let eigen = self.cov.clone().symmetric_eigen();
        let mut repaired = false;
        let scales = eigen.eigenvalues.map(|v| {
            if v < EIGEN_FLOOR {
                repaired = true;
                EIGEN_FLOOR.sqrt()
            } else {
                v.sqrt()
            }
        });
        if repaired {
            self.repairs += 1;
            // Write the floored spectrum back so C matches the cache.
            let d2 = DMatrix::from_diagonal(&scales.map(|s| s * s));
            self.cov = &eigen.eigenvectors * d2 * eigen.eigenvectors.transpose();
        }
        self.eigen = EigenCache {
            vectors: eigen.eigenvectors,
            scales,
            stale_updates: 0,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{sphere_raw, OPTIMUM_OFFSET};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn params_satisfy_standard_constraints() {
        for (dim, lambda) in [(2, 4), (10, 10), (20, 37), (100, 37), (20, 500)] {
            let p = CmaParams::new(dim, lambda);
            assert_eq!(p.mu, (lambda / 2).max(1));
            assert_relative_eq!(p.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            for pair in p.weights.windows(2) {
                assert!(pair[0] >= pair[1]);
            }
            assert!(p.weights.iter().all(|w| *w > 0.0));
            assert!(p.c_sigma > 0.0 && p.c_sigma <= 1.0);
            assert!(p.c_c > 0.0 && p.c_c <= 1.0);
            assert!(p.c_1 + p.c_mu <= 1.0);
            assert!(p.mu_eff >= 1.0 && p.mu_eff <= p.mu as f64);
        }
    }

    #[test]
    fn zero_step_size_samples_collapse_to_mean() {
        let state = CmaState::new(vec![1.0, -2.0, 3.0], 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            assert_eq!(state.sample_one(&mut rng).unwrap(), vec![1.0, -2.0, 3.0]);
        }
    }

    #[test]
    fn identity_sampling_moments() {
        let n = 4;
        let state = CmaState::new(vec![0.0; n], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let count = 100_000;
        let samples = state.sample(count, &mut rng).unwrap();
        for d in 0..n {
            let mean: f64 = samples.iter().map(|s| s[d]).sum::<f64>() / count as f64;
            let var: f64 =
                samples.iter().map(|s| (s[d] - mean).powi(2)).sum::<f64>() / count as f64;
            assert!(mean.abs() < 0.02, "dim {d} mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "dim {d} var {var}");
        }
    }

    #[test]
    fn anisotropic_sampling_covariance() {
        let state = CmaState::with_covariance(
            vec![0.0, 0.0],
            1.0,
            vec![vec![4.0, 0.0], vec![0.0, 1.0]],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let count = 100_000;
        let samples = state.sample(count, &mut rng).unwrap();
        let mut cov = [[0.0f64; 2]; 2];
        for s in &samples {
            for r in 0..2 {
                for c in 0..2 {
                    cov[r][c] += s[r] * s[c];
                }
            }
        }
        for row in cov.iter_mut() {
            for v in row.iter_mut() {
                *v /= count as f64;
            }
        }
        assert!((cov[0][0] - 4.0).abs() / 4.0 < 0.05, "var0 {}", cov[0][0]);
        assert!((cov[1][1] - 1.0).abs() < 0.05, "var1 {}", cov[1][1]);
        assert!(cov[0][1].abs() < 0.05, "cross {}", cov[0][1]);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let state = CmaState::new(vec![0.5; 6], 0.7);
        let a = state
            .sample(20, &mut ChaCha8Rng::seed_from_u64(99))
            .unwrap();
        let b = state
            .sample(20, &mut ChaCha8Rng::seed_from_u64(99))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn equal_weights_average_two_parents() {
        let mut params = CmaParams::new(2, 4);
        params.weights = vec![0.5, 0.5];
        let mut state = CmaState::new(vec![0.0, 0.0], 1.0);
        let a = vec![1.0, 3.0];
        let b = vec![3.0, -1.0];
        state.update(&params, &[a, b]).unwrap();
        assert_eq!(state.mean(), &[2.0, 1.0]);
    }

    #[test]
    fn single_parent_with_unit_weight_moves_mean_exactly() {
        let params = CmaParams::new(3, 8);
        let mut state = CmaState::new(vec![0.0; 3], 0.5);
        let parent = vec![0.25, -1.5, 2.0];
        state.update(&params, &[parent.clone()]).unwrap();
        assert_eq!(state.mean(), parent.as_slice());
    }

    #[test]
    fn csa_is_neutral_at_expected_path_norm() {
        let params = CmaParams::new(10, 10);
        assert_eq!(params.step_size_multiplier(params.chi_n), 1.0);
        assert!(params.step_size_multiplier(params.chi_n * 2.0) > 1.0);
        assert!(params.step_size_multiplier(params.chi_n * 0.5) < 1.0);
    }

    #[test]
    fn update_rejects_empty_parent_list() {
        let params = CmaParams::new(2, 4);
        let mut state = CmaState::new(vec![0.0, 0.0], 1.0);
        assert!(matches!(state.update(&params, &[]), Err(QdError::NoParents)));
    }

    #[test]
    fn converges_on_offset_sphere() {
        let n = 10;
        let lambda = 10;
        let params = CmaParams::new(n, lambda);
        let mut state = CmaState::new(vec![0.0; n], 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let target = vec![OPTIMUM_OFFSET; n];
        let mut converged_at = None;
        for gen in 0..2000 {
            let mut scored: Vec<(f64, SearchPoint)> = state
                .sample(lambda, &mut rng)
                .unwrap()
                .into_iter()
                .map(|x| (sphere_raw(&x, OPTIMUM_OFFSET), x))
                .collect();
            scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let parents: Vec<SearchPoint> = scored
                .into_iter()
                .take(params.mu)
                .map(|(_, x)| x)
                .collect();
            state.update(&params, &parents).unwrap();
            let dist: f64 = state
                .mean()
                .iter()
                .zip(&target)
                .map(|(m, t)| (m - t).powi(2))
                .sum::<f64>()
                .sqrt();
            if dist < 1e-6 {
                converged_at = Some(gen);
                break;
            }
        }
        assert!(converged_at.is_some(), "did not reach the optimum in 2000 generations");
    }

    #[test]
    fn covariance_stays_positive_definite_through_updates() {
        let n = 6;
        let params = CmaParams::new(n, 12);
        let mut state = CmaState::new(vec![0.0; n], 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..500 {
            let mut samples = state.sample(params.lambda, &mut rng).unwrap();
            // Arbitrary but deterministic ranking pressure.
            samples.sort_by(|a, b| {
                sphere_raw(a, 1.0)
                    .partial_cmp(&sphere_raw(b, 1.0))
                    .unwrap()
            });
            samples.truncate(params.mu);
            state.update(&params, &samples).unwrap();
            let eig = state.cov.clone().symmetric_eigen();
            assert!(
                eig.eigenvalues.iter().all(|v| *v > 0.0),
                "covariance lost positive definiteness"
            );
        }
        assert_eq!(state.repairs(), 0);
    }

    #[test]
    fn fresh_eigen_cache_reconstructs_covariance() {
        let n = 5;
        let params = CmaParams::new(n, 10);
        let mut state = CmaState::new(vec![0.0; n], 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let samples = state.sample(params.mu, &mut rng).unwrap();
            state.update(&params, &samples).unwrap();
        }
        // Interval is 1 at this size, so the cache is fresh after update.
        assert_eq!(params.eigen_interval, 1);
        assert!(state.eigen_residual() < 1e-8, "residual {}", state.eigen_residual());
    }

    #[test]
    fn restart_triggers() {
        let state = CmaState::new(vec![0.0; 4], 0.5);
        assert!(!state.should_restart(&[true], DEFAULT_RESTART_PATIENCE));

        let tiny = CmaState::new(vec![0.0; 4], 1e-15);
        assert!(tiny.should_restart(&[true], DEFAULT_RESTART_PATIENCE));

        let skewed = CmaState::with_covariance(
            vec![0.0, 0.0],
            0.5,
            vec![vec![1e15, 0.0], vec![0.0, 1.0]],
        );
        assert!(skewed.should_restart(&[true], DEFAULT_RESTART_PATIENCE));

        let stalled = CmaState::new(vec![0.0; 4], 0.5);
        let history = vec![false; DEFAULT_RESTART_PATIENCE];
        assert!(stalled.should_restart(&history, DEFAULT_RESTART_PATIENCE));
        let mut mixed = history.clone();
        mixed[DEFAULT_RESTART_PATIENCE - 1] = true;
        assert!(!stalled.should_restart(&mixed, DEFAULT_RESTART_PATIENCE));
    }

    #[test]
    fn reset_restores_identity_distribution() {
        let n = 4;
        let params = CmaParams::new(n, 8);
        let mut state = CmaState::new(vec![0.0; n], 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let samples = state.sample(params.mu, &mut rng).unwrap();
            state.update(&params, &samples).unwrap();
        }
        state.reset(&[0.0; 4], 0.5);
        assert_eq!(state.sigma(), 0.5);
        assert_eq!(state.mean(), &[0.0; 4]);
        assert_eq!(state.generation(), 0);
        assert_eq!(state.dim(), n);
        for r in 0..n {
            for c in 0..n {
                assert_eq!(state.covariance(r, c), if r == c { 1.0 } else { 0.0 });
            }
        }
        // Post-reset sampling is N(mean, sigma0^2 I).
        let count = 50_000;
        let samples = state.sample(count, &mut rng).unwrap();
        for d in 0..n {
            let mean: f64 = samples.iter().map(|s| s[d]).sum::<f64>() / count as f64;
            let var: f64 =
                samples.iter().map(|s| (s[d] - mean).powi(2)).sum::<f64>() / count as f64;
            assert!(mean.abs() < 0.02);
            assert!((var - 0.25).abs() < 0.02);
        }
    }
}
