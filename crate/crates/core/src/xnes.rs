//! Exponential natural evolution strategy (xNES).
//!
//! The search distribution is `N(mu, sigma² B Bᵀ)` with `det(B) = 1`. Each
//! iteration draws `lambda` standard-normal vectors `z_k`, evaluates
//! `mu + sigma B z_k`, ranks the costs and follows the natural gradient:
//!
//! ```text
//! G_delta = Σ u_k z_k
//! G_M     = Σ u_k (z_k z_kᵀ - I)
//! G_sigma = tr(G_M) / d,   G_B = G_M - G_sigma I
//! mu    <- mu + eta_mu sigma B G_delta
//! sigma <- sigma exp(eta_sigma / 2 · G_sigma)
//! B     <- B expm(eta_B / 2 · G_B)
//! ```
//!
//! Costs are minimised. Utilities depend only on ranks; tied costs share the
//! mean utility of their rank block, so a generation of identical costs
//! leaves the distribution untouched.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expm::expm;

/// Optional overrides of the standard xNES hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XnesConfig {
    pub population: Option<usize>,
    pub sigma0: f64,
    pub eta_mu: Option<f64>,
    pub eta_sigma: Option<f64>,
    pub eta_b: Option<f64>,
}

impl Default for XnesConfig {
    fn default() -> Self {
        Self {
            population: None,
            sigma0: 1.0,
            eta_mu: None,
            eta_sigma: None,
            eta_b: None,
        }
    }
}

impl XnesConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0.is_finite() && self.sigma0 > 0.0) {
            return Err(Error::config("xnes.sigma0", "must be positive"));
        }
        if let Some(p) = self.population {
            if p < 2 {
                return Err(Error::config("xnes.population", "must be at least 2"));
            }
        }
        for (key, v) in [
            ("xnes.eta_mu", self.eta_mu),
            ("xnes.eta_sigma", self.eta_sigma),
            ("xnes.eta_b", self.eta_b),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::config(key, "must be non-negative"));
                }
            }
        }
        Ok(())
    }
}

/// `4 + floor(3 ln d)`.
pub fn default_population(dim: usize) -> usize {
    4 + (3.0 * (dim as f64).ln()).floor() as usize
}

/// `(9 + 3 ln d) / (5 d sqrt d)`, shared by the step-size and shape updates.
pub fn default_eta_shape(dim: usize) -> f64 {
    let d = dim as f64;
    (9.0 + 3.0 * d.ln()) / (5.0 * d * d.sqrt())
}

/// Rank-shaped utilities for ranks `1..=lambda`; they sum to zero.
pub fn utility_weights(lambda: usize) -> Vec<f64> {
    let l = lambda as f64;
    let raw: Vec<f64> = (1..=lambda)
        .map(|k| ((l / 2.0 + 1.0).ln() - (k as f64).ln()).max(0.0))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total - 1.0 / l).collect()
}

/// NaN ranks as +∞.
fn rank_key(cost: f64) -> f64 {
    if cost.is_nan() {
        f64::INFINITY
    } else {
        cost
    }
}

/// One sample drawn by [`Xnes::ask`].
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub z: DVector<f64>,
    pub genome: Vec<f64>,
}

/// A candidate with its cost.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedSample {
    pub z: DVector<f64>,
    pub genome: Vec<f64>,
    pub cost: f64,
}

impl Candidate {
    pub fn evaluated(self, cost: f64) -> EvaluatedSample {
        EvaluatedSample {
            z: self.z,
            genome: self.genome,
            cost,
        }
    }
}

/// Index of the minimum-cost sample (NaN ranks as +∞, ties go to the lowest
/// index).
pub fn best_of(samples: &[EvaluatedSample]) -> Result<usize> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("best_of on an empty sample set".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in samples.iter().enumerate() {
        let c = rank_key(s.cost);
        if !c.is_finite() {
            continue;
        }
        if best.is_none_or(|(_, b)| c < b) {
            best = Some((i, c));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidInput("every sample cost is non-finite".into()))
}

/// Optimiser state.
#[derive(Debug, Clone)]
pub struct Xnes {
    mu: DVector<f64>,
    sigma: f64,
    b: DMatrix<f64>,
    lambda: usize,
    eta_mu: f64,
    eta_sigma: f64,
    eta_b: f64,
    utilities: Vec<f64>,
    rng: ChaCha8Rng,
}

impl Xnes {
    /// Starts at `mu0` with `B = I`.
    pub fn new(mu0: Vec<f64>, config: &XnesConfig, rng: ChaCha8Rng) -> Result<Self> {
        let d = mu0.len();
        Self::with_state(mu0, config.sigma0, DMatrix::identity(d, d), config, rng)
    }

    pub fn with_state(
        mu0: Vec<f64>,
        sigma0: f64,
        b0: DMatrix<f64>,
        config: &XnesConfig,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        let d = mu0.len();
        if d == 0 {
            return Err(Error::InvalidInput("xNES needs at least one dimension".into()));
        }
        if b0.nrows() != d || b0.ncols() != d {
            return Err(Error::Dimension {
                context: "xNES shape matrix",
                expected: d,
                actual: b0.nrows(),
            });
        }
        if !(sigma0.is_finite() && sigma0 >= 0.0) {
            return Err(Error::config("xnes.sigma0", "must be non-negative"));
        }
        let lambda = config.population.unwrap_or_else(|| default_population(d));
        let eta = default_eta_shape(d);
        Ok(Self {
            mu: DVector::from_vec(mu0),
            sigma: sigma0,
            b: b0,
            lambda,
            eta_mu: config.eta_mu.unwrap_or(1.0),
            eta_sigma: config.eta_sigma.unwrap_or(eta),
            eta_b: config.eta_b.unwrap_or(eta),
            utilities: utility_weights(lambda),
            rng,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn learning_rates(&self) -> (f64, f64, f64) {
        (self.eta_mu, self.eta_sigma, self.eta_b)
    }

    pub fn utilities(&self) -> &[f64] {
        &self.utilities
    }

    /// Draws `lambda` candidates `mu + sigma B z`.
    pub fn ask(&mut self) -> Vec<Candidate> {
        let d = self.dim();
        (0..self.lambda)
            .map(|_| {
                let z = DVector::from_fn(d, |_, _| self.rng.sample::<f64, _>(StandardNormal));
                let x = &self.mu + (&self.b * &z) * self.sigma;
                Candidate {
                    z,
                    genome: x.as_slice().to_vec(),
                }
            })
            .collect()
    }

    /// Per-sample utilities for the given costs, tie blocks averaged.
    pub fn sample_utilities(&self, costs: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..costs.len()).collect();
        order.sort_by(|&i, &j| rank_key(costs[i]).total_cmp(&rank_key(costs[j])));
        let mut out = vec![0.0; costs.len()];
        if costs.iter().all(|&c| rank_key(c) == rank_key(costs[0])) {
            return out;
        }
        let mut start = 0;
        while start < order.len() {
            let key = rank_key(costs[order[start]]);
            let mut end = start + 1;
            while end < order.len() && rank_key(costs[order[end]]) == key {
                end += 1;
            }
            let mean = self.utilities[start..end].iter().sum::<f64>() / (end - start) as f64;
            for &idx in &order[start..end] {
                out[idx] = mean;
            }
            start = end;
        }
        out
    }

    /// Natural-gradient update from a full evaluated population.
    pub fn tell(&mut self, samples: &[EvaluatedSample]) -> Result<()> {
        if samples.len() != self.lambda {
            return Err(Error::Dimension {
                context: "xNES population",
                expected: self.lambda,
                actual: samples.len(),
            });
        }
        let d = self.dim();
        let costs: Vec<f64> = samples.iter().map(|s| s.cost).collect();
        let u = self.sample_utilities(&costs);
        if u.iter().all(|&v| v == 0.0) {
            return Ok(());
        }

        let mut g_delta = DVector::<f64>::zeros(d);
        let mut g_m = DMatrix::<f64>::zeros(d, d);
        for (s, &uk) in samples.iter().zip(&u) {
            if s.z.len() != d {
                return Err(Error::Dimension {
                    context: "xNES sample",
                    expected: d,
                    actual: s.z.len(),
                });
            }
            if uk == 0.0 {
                continue;
            }
            g_delta.axpy(uk, &s.z, 1.0);
            g_m.ger(uk, &s.z, &s.z, 1.0);
        }
        let u_sum: f64 = u.iter().sum();
        for i in 0..d {
            g_m[(i, i)] -= u_sum;
        }
        let g_sigma = g_m.trace() / d as f64;
        let mut g_b = g_m;
        for i in 0..d {
            g_b[(i, i)] -= g_sigma;
        }

        let step = (&self.b * g_delta) * (self.eta_mu * self.sigma);
        self.mu += step;
        self.sigma *= (0.5 * self.eta_sigma * g_sigma).exp();
        self.b = &self.b * expm(&(g_b * (0.5 * self.eta_b)));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn sample(cost: f64) -> EvaluatedSample {
        EvaluatedSample {
            z: DVector::zeros(1),
            genome: vec![],
            cost,
        }
    }

    #[test]
    fn defaults() {
        assert_eq!(default_population(96), 17);
        assert_eq!(default_population(2), 6);
        let u = utility_weights(17);
        assert!(u.iter().sum::<f64>().abs() < 1e-15);
        assert!(u.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn best_of_rules() {
        let s: Vec<_> = [3.0, 1.0, 2.0].into_iter().map(sample).collect();
        assert_eq!(best_of(&s).unwrap(), 1);
        assert_eq!(best_of(&[sample(4.0)]).unwrap(), 0);
        assert_eq!(best_of(&[sample(f64::NAN), sample(5.0)]).unwrap(), 1);
        assert_eq!(best_of(&[sample(1.0), sample(1.0)]).unwrap(), 0);
        assert!(best_of(&[sample(f64::NAN), sample(f64::INFINITY)]).is_err());
        assert!(best_of(&[]).is_err());
    }

    #[test]
    fn tied_costs_leave_state_unchanged() {
        let mut es = Xnes::new(vec![1.0, -2.0, 0.5], &XnesConfig::default(), seed::stream(&[1])).unwrap();
        let before = (es.mu().clone(), es.sigma(), es.shape().clone());
        let pop: Vec<_> = es.ask().into_iter().map(|c| c.evaluated(7.0)).collect();
        es.tell(&pop).unwrap();
        assert_eq!(before, (es.mu().clone(), es.sigma(), es.shape().clone()));
    }

    #[test]
    fn zero_sigma_samples_equal_mean() {
        let mut es = Xnes::with_state(
            vec![0.3, 0.4],
            0.0,
            DMatrix::identity(2, 2),
            &XnesConfig::default(),
            seed::stream(&[2]),
        )
        .unwrap();
        for c in es.ask() {
            assert_eq!(c.genome, vec![0.3, 0.4]);
        }
    }

    #[test]
    fn nan_cost_ranks_last() {
        let es = Xnes::new(vec![0.0; 2], &XnesConfig::default(), seed::stream(&[3])).unwrap();
        let mut costs = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let clean = es.sample_utilities(&costs);
        costs[5] = f64::NAN;
        assert_eq!(es.sample_utilities(&costs), clean);
    }

    #[test]
    fn wrong_population_size_is_rejected() {
        let mut es = Xnes::new(vec![0.0; 2], &XnesConfig::default(), seed::stream(&[4])).unwrap();
        assert!(es.tell(&[sample(1.0)]).is_err());
    }

    #[test]
    fn sample_covariance_is_identity() {
        let mut es = Xnes::new(
            vec![0.0; 2],
            &XnesConfig {
                population: Some(1000),
                ..Default::default()
            },
            seed::stream(&[5]),
        )
        .unwrap();
        let mut c = [[0.0; 2]; 2];
        let mut n = 0.0;
        for _ in 0..100 {
            for s in es.ask() {
                for i in 0..2 {
                    for j in 0..2 {
                        c[i][j] += s.genome[i] * s.genome[j];
                    }
                }
                n += 1.0;
            }
        }
        for (i, row) in c.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((v / n - expected).abs() < 0.05, "({i},{j}) = {}", v / n);
            }
        }
    }
}
