//! Thompson-sampling bandit over training morphologies.
//!
//! Each arm holds a Beta posterior over its utility. Every generation one arm
//! is drawn by Thompson sampling, the controller is validated, and the arm is
//! rewarded when the validation cost beats the moving average of the last
//! `window` validation costs. Before the conjugate update all posteriors decay
//! toward the prior:
//!
//! ```text
//! alpha_k <- (1 - gamma) alpha_k + gamma alpha_0
//! beta_k  <- (1 - gamma) beta_k  + gamma beta_0
//! (alpha_x, beta_x) += (r, 1 - r)        for the chosen arm x
//! ```
//!
//! The framework minimises cost, so "improvement" means the new cost is
//! strictly *lower* than the moving average. With an empty history the reward
//! is 0.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphospace::{Morphology, MorphologyGrid};

/// Bandit hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BanditParams {
    pub alpha0: f64,
    pub beta0: f64,
    pub gamma: f64,
    pub window: usize,
}

impl Default for BanditParams {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            beta0: 1.0,
            gamma: 0.1,
            window: 10,
        }
    }
}

impl BanditParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0.is_finite() && self.alpha0 > 0.0) {
            return Err(Error::config("schedule.alpha0", "must be positive"));
        }
        if !(self.beta0.is_finite() && self.beta0 > 0.0) {
            return Err(Error::config("schedule.beta0", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("schedule.gamma", "must lie in [0, 1]"));
        }
        if self.window == 0 {
            return Err(Error::config("schedule.window", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub alpha: f64,
    pub beta: f64,
    pub morphology: Morphology,
}

impl Arm {
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditState {
    arms: Vec<Arm>,
    params: BanditParams,
    history: VecDeque<f64>,
    last_choice: Option<usize>,
}

impl BanditState {
    /// One arm per grid point, all at the prior.
    pub fn new(grid: &MorphologyGrid, params: BanditParams) -> Result<Self> {
        Self::from_morphologies(grid.morphologies(), params)
    }

    pub fn from_morphologies(
        morphologies: impl IntoIterator<Item = Morphology>,
        params: BanditParams,
    ) -> Result<Self> {
        params.validate()?;
        let arms: Vec<Arm> = morphologies
            .into_iter()
            .map(|morphology| Arm {
                alpha: params.alpha0,
                beta: params.beta0,
                morphology,
            })
            .collect();
        if arms.is_empty() {
            return Err(Error::InvalidInput("bandit needs at least one arm".into()));
        }
        Ok(Self {
            arms,
            params,
            history: VecDeque::with_capacity(params.window),
            last_choice: None,
        })
    }

    /// Arms without morphologies, for synthetic bandit problems.
    pub fn with_arms(n: usize, params: BanditParams) -> Result<Self> {
        Self::from_morphologies((0..n).map(|i| Morphology::new(i as f64, 0.0)), params)
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn arms_mut(&mut self) -> &mut [Arm] {
        &mut self.arms
    }

    pub fn params(&self) -> &BanditParams {
        &self.params
    }

    pub fn history(&self) -> impl Iterator<Item = f64> + '_ {
        self.history.iter().copied()
    }

    pub fn last_choice(&self) -> Option<usize> {
        self.last_choice
    }

    /// Draws `theta_k ~ Beta(alpha_k, beta_k)` per arm and picks the argmax
    /// (lowest index on ties).
    pub fn thompson_select<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let mut best = 0;
        let mut best_theta = f64::NEG_INFINITY;
        for (k, arm) in self.arms.iter().enumerate() {
            // Parameters stay positive and finite by construction.
            let theta = Beta::new(arm.alpha, arm.beta)
                .expect("Beta parameters are positive")
                .sample(rng);
            if theta > best_theta {
                best = k;
                best_theta = theta;
            }
        }
        self.last_choice = Some(best);
        best
    }

    /// Mean of the history buffer, if it has any entries.
    pub fn moving_average(&self) -> Option<f64> {
        if self.history.is_empty() {
            None
        } else {
            Some(self.history.iter().sum::<f64>() / self.history.len() as f64)
        }
    }

    /// Binary reward for validation cost `cost`; the cost is then pushed into
    /// the history window.
    pub fn compute_reward(&mut self, cost: f64) -> u8 {
        let reward = match self.moving_average() {
            Some(avg) if cost < avg => 1,
            _ => 0,
        };
        if self.history.len() == self.params.window {
            self.history.pop_front();
        }
        self.history.push_back(cost);
        reward
    }

    /// Decays every posterior toward the prior, then credits the last chosen
    /// arm with `(reward, 1 - reward)`.
    pub fn update_posteriors(&mut self, reward: u8) -> Result<()> {
        let chosen = self
            .last_choice
            .ok_or_else(|| Error::InvalidInput("posterior update before any selection".into()))?;
        self.update_arm(chosen, reward)
    }

    /// Same as [`update_posteriors`](Self::update_posteriors) for an explicit arm.
    pub fn update_arm(&mut self, chosen: usize, reward: u8) -> Result<()> {
        if chosen >= self.arms.len() {
            return Err(Error::InvalidInput(format!("arm {chosen} out of range")));
        }
        if reward > 1 {
            return Err(Error::InvalidInput(format!("reward must be 0 or 1, got {reward}")));
        }
        let BanditParams {
            alpha0,
            beta0,
            gamma,
            ..
        } = self.params;
        for arm in &mut self.arms {
            arm.alpha = (1.0 - gamma) * arm.alpha + gamma * alpha0;
            arm.beta = (1.0 - gamma) * arm.beta + gamma * beta0;
        }
        let r = f64::from(reward);
        self.arms[chosen].alpha += r;
        self.arms[chosen].beta += 1.0 - r;
        Ok(())
    }
}

/// Per-cell selection counts on a `rows × cols` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `values[row * cols + col]`.
    pub values: Vec<f64>,
}

impl CountMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Counts how often each grid cell was chosen, given per-generation arm
/// indices into the (dense, x-major) training grid.
pub fn count_choices(choices: &[Option<usize>], grid: &MorphologyGrid) -> Result<CountMatrix> {
    let mut m = CountMatrix::zeros(grid.rows(), grid.cols());
    for (g, c) in choices.iter().enumerate() {
        let idx = c.ok_or_else(|| {
            Error::InvalidInput(format!(
                "generation {g} has no discrete choice; continuous schedules have no arms"
            ))
        })?;
        let p = grid
            .points
            .get(idx)
            .ok_or_else(|| Error::InvalidInput(format!("arm {idx} outside the grid")))?;
        m.values[p.row * grid.cols() + p.col] += 1.0;
    }
    Ok(m)
}

/// Per-cell selection counts of one run.
pub fn selection_frequencies(
    record: &crate::engine::RunRecord,
    grid: &MorphologyGrid,
) -> Result<CountMatrix> {
    if !record.config.schedule.is_discrete() {
        return Err(Error::InvalidInput(format!(
            "schedule `{}` has no arms",
            record.config.schedule.kind_name()
        )));
    }
    count_choices(&record.arm_choices(), grid)
}

/// Per-cell mean selection count across runs.
pub fn mean_selection_frequencies(
    records: &[crate::engine::RunRecord],
    grid: &MorphologyGrid,
) -> Result<CountMatrix> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no run records".into()));
    }
    let mut acc = CountMatrix::zeros(grid.rows(), grid.cols());
    for r in records {
        let m = selection_frequencies(r, grid)?;
        for (a, v) in acc.values.iter_mut().zip(&m.values) {
            *a += v;
        }
    }
    let n = records.len() as f64;
    for v in &mut acc.values {
        *v /= n;
    }
    Ok(acc)
}
