use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::OptimError;

const EIGEN_FLOOR: f64 = 1e-14;
const MAX_RESAMPLES: usize = 100;

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, OptimError> {
        if lower.len() != upper.len() {
            return Err(OptimError::Dimension {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(OptimError::InvalidConfig("lower bound exceeds upper bound"));
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmaesConfig {
    pub sigma0: f64,
    /// Population size; `None` uses `4 + floor(3 ln n)`.
    pub population: Option<usize>,
    pub seed: u64,
    pub bounds: Option<Bounds>,
}

impl Default for CmaesConfig {
    fn default() -> Self {
        Self {
            sigma0: 0.3,
            population: None,
            seed: 0,
            bounds: None,
        }
    }
}

/// (mu/mu_w, lambda)-CMA-ES with cumulative step-size adaptation.
#[derive(Debug, Clone)]
pub struct CmaesState {
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    pub generation: usize,
    /// Fitness evaluations requested so far.
    pub evaluations: usize,
    lambda: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_c: f64,
    c_s: f64,
    c_1: f64,
    c_mu: f64,
    damps: f64,
    chi_n: f64,
    p_c: DVector<f64>,
    p_s: DVector<f64>,
    basis: DMatrix<f64>,
    scales: DVector<f64>,
    bounds: Option<Bounds>,
    rng: ChaCha8Rng,
}

impl CmaesState {
    pub fn new(mean: &[f64], config: &CmaesConfig) -> Result<Self, OptimError> {
        let n = mean.len();
        if n == 0 {
            return Err(OptimError::InvalidConfig("empty search space"));
        }
        if !(config.sigma0 > 0.0) {
            return Err(OptimError::InvalidConfig("sigma0 must be positive"));
        }
        if let Some(b) = &config.bounds {
            if b.lower.len() != n {
                return Err(OptimError::Dimension {
                    expected: n,
                    got: b.lower.len(),
                });
            }
        }
        let nf = n as f64;
        let lambda = config
            .population
            .unwrap_or(4 + (3.0 * nf.ln()).floor() as usize);
        if lambda < 2 {
            return Err(OptimError::InvalidConfig("population must be at least 2"));
        }
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_s = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let damps = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_s;
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

        Ok(Self {
            mean: DVector::from_column_slice(mean),
            sigma: config.sigma0,
            cov: DMatrix::identity(n, n),
            generation: 0,
            evaluations: 0,
            lambda,
            weights,
            mu_eff,
            c_c,
            c_s,
            c_1,
            c_mu,
            damps,
            chi_n,
            p_c: DVector::zeros(n),
            p_s: DVector::zeros(n),
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
            bounds: config.bounds.clone(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        })
    }

    pub fn population_size(&self) -> usize {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample_one(&mut self) -> DVector<f64> {
        let n = self.dim();
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut self.rng));
        let y = &self.basis * z.component_mul(&self.scales);
        &self.mean + y * self.sigma
    }

    /// Draw the next population. Candidates respect the bounds: each is
    /// resampled up to 100 times and then clamped.
    pub fn ask(&mut self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.lambda);
        for _ in 0..self.lambda {
            let mut x = self.sample_one();
            if let Some(b) = self.bounds.clone() {
                let mut tries = 1;
                while !b.contains(x.as_slice()) && tries < MAX_RESAMPLES {
                    x = self.sample_one();
                    tries += 1;
                }
                b.clamp(x.as_mut_slice());
            }
            out.push(x.as_slice().to_vec());
        }
        self.evaluations += self.lambda;
        out
    }

    /// Update from evaluated candidates. Non-finite fitness ranks last; a
    /// generation with no finite fitness leaves the distribution unchanged.
    pub fn tell(&mut self, candidates: &[Vec<f64>], fitness: &[f64]) -> Result<(), OptimError> {
        let n = self.dim();
        for got in [candidates.len(), fitness.len()] {
            if got != self.lambda {
                return Err(OptimError::Dimension {
                    expected: self.lambda,
                    got,
                });
            }
        }
        if let Some(c) = candidates.iter().find(|c| c.len() != n) {
            return Err(OptimError::Dimension {
                expected: n,
                got: c.len(),
            });
        }
        if fitness.iter().all(|f| !f.is_finite()) {
            return Ok(());
        }
        let key = |i: usize| {
            if fitness[i].is_finite() {
                fitness[i]
            } else {
                f64::INFINITY
            }
        };
        let mut order: Vec<usize> = (0..self.lambda).collect();
        order.sort_by(|&a, &b| key(a).total_cmp(&key(b)));

        let steps: Vec<DVector<f64>> = order[..self.weights.len()]
            .iter()
            .map(|&i| (DVector::from_column_slice(&candidates[i]) - &self.mean) / self.sigma)
            .collect();
        let y_w = steps
            .iter()
            .zip(&self.weights)
            .fold(DVector::zeros(n), |acc, (y, w)| acc + y * *w);
        self.mean += &y_w * self.sigma;

        // C^{-1/2} y_w through the cached eigendecomposition.
        let inv_sqrt = &self.basis
            * DMatrix::from_diagonal(&self.scales.map(|d| 1.0 / d))
            * self.basis.transpose();
        let cs = self.c_s;
        self.p_s = &self.p_s * (1.0 - cs) + inv_sqrt * &y_w * (cs * (2.0 - cs) * self.mu_eff).sqrt();
        let gen = (self.generation + 1) as i32;
        let ps_norm = self.p_s.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - cs).powi(2 * gen)).sqrt()
            < (1.4 + 2.0 / (n as f64 + 1.0)) * self.chi_n;
        let hs = if h_sigma { 1.0 } else { 0.0 };
        let cc = self.c_c;
        self.p_c = &self.p_c * (1.0 - cc) + &y_w * (hs * (cc * (2.0 - cc) * self.mu_eff).sqrt());

        let rank_mu = steps
            .iter()
            .zip(&self.weights)
            .fold(DMatrix::zeros(n, n), |acc, (y, w)| acc + y * y.transpose() * *w);
        let decay = 1.0 - self.c_1 - self.c_mu + (1.0 - hs) * self.c_1 * cc * (2.0 - cc);
        self.cov = &self.cov * decay + &self.p_c * self.p_c.transpose() * self.c_1 + rank_mu * self.c_mu;

        self.sigma *= ((cs / self.damps) * (ps_norm / self.chi_n - 1.0)).exp();
        self.generation += 1;
        self.refresh_eigen();
        Ok(())
    }

    /// Symmetrize, floor eigenvalues and cache `B`, `sqrt(D)`.
    fn refresh_eigen(&mut self) {
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let vals = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
        self.cov = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        self.basis = eig.eigenvectors;
        self.scales = vals.map(f64::sqrt);
    }

    /// Smallest eigenvalue of the current covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        self.scales.iter().map(|s| s * s).fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn solves_five_dimensional_sphere() {
        let cfg = CmaesConfig {
            sigma0: 1.0,
            seed: 1,
            ..Default::default()
        };
        let mut es = CmaesState::new(&[3.0; 5], &cfg).unwrap();
        assert_eq!(es.population_size(), 8);
        let mut best = f64::INFINITY;
        while es.evaluations < 5000 && best >= 1e-10 {
            let pop = es.ask();
            let fit: Vec<f64> = pop.iter().map(|x| sphere(x)).collect();
            best = fit.iter().copied().fold(best, f64::min);
            es.tell(&pop, &fit).unwrap();
            assert!(es.min_eigenvalue() >= EIGEN_FLOOR * 0.999);
            assert!(es.sigma > 0.0);
        }
        assert!(best < 1e-10, "best {best} after {} evals", es.evaluations);
    }

    #[test]
    fn nan_equals_worst_rank() {
        let cfg = CmaesConfig {
            sigma0: 0.5,
            seed: 3,
            ..Default::default()
        };
        let mut a = CmaesState::new(&[1.0, 2.0, 3.0], &cfg).unwrap();
        let mut b = a.clone();
        let pop = a.ask();
        let _ = b.ask();
        let mut fit: Vec<f64> = pop.iter().map(|x| sphere(x)).collect();
        let worst = fit.iter().copied().fold(f64::MIN, f64::max);
        let mut fit_nan = fit.clone();
        fit_nan[2] = f64::NAN;
        fit[2] = worst + 1.0;
        a.tell(&pop, &fit_nan).unwrap();
        b.tell(&pop, &fit).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.cov, b.cov);
        assert_eq!(a.sigma, b.sigma);
    }

    #[test]
    fn all_nan_generation_keeps_distribution() {
        let mut es = CmaesState::new(&[0.0; 4], &CmaesConfig::default()).unwrap();
        let before = (es.mean.clone(), es.sigma, es.cov.clone());
        let pop = es.ask();
        es.tell(&pop, &vec![f64::NAN; pop.len()]).unwrap();
        assert_eq!((es.mean.clone(), es.sigma, es.cov.clone()), before);
        assert_eq!(es.evaluations, pop.len());
    }

    #[test]
    fn candidates_stay_in_box() {
        let bounds = Bounds::new(vec![-2.5; 4], vec![2.5; 4]).unwrap();
        let cfg = CmaesConfig {
            sigma0: 3.0,
            seed: 11,
            bounds: Some(bounds.clone()),
            ..Default::default()
        };
        let mut es = CmaesState::new(&[2.0, -2.0, 0.0, 2.4], &cfg).unwrap();
        for _ in 0..30 {
            let pop = es.ask();
            assert!(pop.iter().all(|x| bounds.contains(x)));
            let fit: Vec<f64> = pop.iter().map(|x| sphere(x)).collect();
            es.tell(&pop, &fit).unwrap();
        }
    }

    #[test]
    fn same_seed_same_candidates() {
        let cfg = CmaesConfig {
            seed: 42,
            ..Default::default()
        };
        let mut a = CmaesState::new(&[1.0; 3], &cfg).unwrap();
        let mut b = CmaesState::new(&[1.0; 3], &cfg).unwrap();
        for _ in 0..5 {
            let (pa, pb) = (a.ask(), b.ask());
            assert_eq!(pa, pb);
            let f: Vec<f64> = pa.iter().map(|x| sphere(x)).collect();
            a.tell(&pa, &f).unwrap();
            b.tell(&pb, &f).unwrap();
        }
    }

    #[test]
    fn rejects_wrong_fitness_length() {
        let mut es = CmaesState::new(&[0.0; 2], &CmaesConfig::default()).unwrap();
        let pop = es.ask();
        assert!(matches!(es.tell(&pop, &[1.0]), Err(OptimError::Dimension { .. })));
    }
}
