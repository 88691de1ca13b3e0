//! Training schedules: which morphology the population meets at each
//! generation.
//!
//! Discrete schedules pick from the training grid; continuous schedules sample
//! the training box axis by axis. Gaussian and Cauchy draws outside the box
//! are rejected and redrawn up to [`MAX_REJECTIONS`] times, then clamped.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bandit::{BanditParams, BanditState};
use crate::error::{Error, Result};
use crate::morphospace::{build_training_grid, Interval, Morphology, MorphologyGrid, MorphologySpace};

pub const MAX_REJECTIONS: usize = 100;

fn default_sigma_frac() -> f64 {
    1.0 / 3.0
}

fn default_scale_frac() -> f64 {
    1.0 / 6.0
}

fn default_beta_param() -> f64 {
    0.1
}

/// Schedule kind and its parameters, as written in run configs.
///
/// Gaussian `sigma_frac` and Cauchy `scale_frac` are fractions of each axis'
/// half-range.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec {
    #[default]
    DiscreteRandom,
    DiscreteIncremental,
    Uniform,
    Gaussian {
        #[serde(default = "default_sigma_frac")]
        sigma_frac: f64,
    },
    Cauchy {
        #[serde(default = "default_scale_frac")]
        scale_frac: f64,
    },
    Beta {
        #[serde(default = "default_beta_param")]
        alpha: f64,
        #[serde(default = "default_beta_param")]
        beta: f64,
    },
    Bandit(BanditParams),
    /// A single morphology every generation; defaults to the box centre.
    Fixed {
        #[serde(default)]
        x: Option<f64>,
        #[serde(default)]
        y: Option<f64>,
    },
}

/// Names accepted for `schedule.kind`, with their parameter summary.
pub const SCHEDULE_KINDS: &[(&str, &str)] = &[
    ("discrete_random", "uniform draw from the training grid"),
    ("discrete_incremental", "x-major sweep of the training grid, cycling"),
    ("uniform", "i.i.d. uniform on the training box"),
    ("gaussian", "centred Gaussian; sigma_frac = 1/3 of half-range"),
    ("cauchy", "centred Cauchy; scale_frac = 1/6 of half-range"),
    ("beta", "per-axis Beta(alpha, beta); alpha = beta = 0.1"),
    ("bandit", "Thompson sampling; alpha0 = beta0 = 1, gamma = 0.1, window = 10"),
    ("fixed", "constant morphology (x, y); defaults to the box centre"),
];

impl ScheduleSpec {
    pub fn gaussian() -> Self {
        ScheduleSpec::Gaussian {
            sigma_frac: default_sigma_frac(),
        }
    }

    pub fn cauchy() -> Self {
        ScheduleSpec::Cauchy {
            scale_frac: default_scale_frac(),
        }
    }

    pub fn beta() -> Self {
        ScheduleSpec::Beta {
            alpha: default_beta_param(),
            beta: default_beta_param(),
        }
    }

    pub fn bandit() -> Self {
        ScheduleSpec::Bandit(BanditParams::default())
    }

    pub fn center() -> Self {
        ScheduleSpec::Fixed { x: None, y: None }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ScheduleSpec::DiscreteRandom => "discrete_random",
            ScheduleSpec::DiscreteIncremental => "discrete_incremental",
            ScheduleSpec::Uniform => "uniform",
            ScheduleSpec::Gaussian { .. } => "gaussian",
            ScheduleSpec::Cauchy { .. } => "cauchy",
            ScheduleSpec::Beta { .. } => "beta",
            ScheduleSpec::Bandit(_) => "bandit",
            ScheduleSpec::Fixed { .. } => "fixed",
        }
    }

    /// Schedules whose choices are training-grid cells.
    pub fn is_discrete(&self) -> bool {
        matches!(
            self,
            ScheduleSpec::DiscreteRandom | ScheduleSpec::DiscreteIncremental | ScheduleSpec::Bandit(_)
        )
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(key, "must be non-negative and finite"))
            }
        };
        match *self {
            ScheduleSpec::Gaussian { sigma_frac } => positive("schedule.sigma_frac", sigma_frac),
            ScheduleSpec::Cauchy { scale_frac } => positive("schedule.scale_frac", scale_frac),
            ScheduleSpec::Beta { alpha, beta } => {
                for (k, v) in [("schedule.alpha", alpha), ("schedule.beta", beta)] {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(Error::config(k, "must be positive"));
                    }
                }
                Ok(())
            }
            ScheduleSpec::Bandit(p) => p.validate(),
            _ => Ok(()),
        }
    }
}

/// The morphology chosen for one generation; `arm` indexes the training grid
/// for discrete schedules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice {
    pub morphology: Morphology,
    pub arm: Option<usize>,
}

/// A schedule with its own random stream and, for the bandit, its posterior
/// state.
#[derive(Debug, Clone)]
pub struct Schedule {
    spec: ScheduleSpec,
    rng: ChaCha8Rng,
    bandit: Option<BanditState>,
    clamped: u64,
}

impl Schedule {
    pub fn new(spec: ScheduleSpec, grid: &MorphologyGrid, rng: ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        let bandit = match &spec {
            ScheduleSpec::Bandit(p) => Some(BanditState::new(grid, *p)?),
            _ => None,
        };
        Ok(Self {
            spec,
            rng,
            bandit,
            clamped: 0,
        })
    }

    pub fn spec(&self) -> &ScheduleSpec {
        &self.spec
    }

    pub fn bandit(&self) -> Option<&BanditState> {
        self.bandit.as_ref()
    }

    /// Number of draws that hit the rejection cap and were clamped.
    pub fn clamp_count(&self) -> u64 {
        self.clamped
    }

    pub fn next_morphology(
        &mut self,
        space: &MorphologySpace,
        grid: &MorphologyGrid,
        generation: usize,
    ) -> Choice {
        let (xi, yi) = (space.x_train, space.y_train);
        let discrete = |arm: usize| Choice {
            morphology: grid.points[arm].morphology,
            arm: Some(arm),
        };
        let continuous = |x, y| Choice {
            morphology: Morphology::new(x, y),
            arm: None,
        };
        match self.spec.clone() {
            ScheduleSpec::DiscreteRandom => discrete(self.rng.random_range(0..grid.len())),
            ScheduleSpec::DiscreteIncremental => discrete(generation % grid.len()),
            ScheduleSpec::Bandit(_) => {
                let bandit = self.bandit.as_mut().expect("bandit state exists");
                discrete(bandit.thompson_select(&mut self.rng))
            }
            ScheduleSpec::Uniform => {
                let x = xi.lo + self.rng.random::<f64>() * xi.width();
                let y = yi.lo + self.rng.random::<f64>() * yi.width();
                continuous(x, y)
            }
            ScheduleSpec::Gaussian { sigma_frac } => {
                let x = self.centred(xi, sigma_frac, sample_gauss);
                let y = self.centred(yi, sigma_frac, sample_gauss);
                continuous(x, y)
            }
            ScheduleSpec::Cauchy { scale_frac } => {
                let x = self.centred(xi, scale_frac, sample_cauchy);
                let y = self.centred(yi, scale_frac, sample_cauchy);
                continuous(x, y)
            }
            ScheduleSpec::Beta { alpha, beta } => {
                let dist = Beta::new(alpha, beta).expect("validated Beta parameters");
                let ux = dist.sample(&mut self.rng);
                let uy = dist.sample(&mut self.rng);
                Choice {
                    morphology: map_unit(space, ux, uy),
                    arm: None,
                }
            }
            ScheduleSpec::Fixed { x, y } => {
                let c = space.center();
                continuous(x.unwrap_or(c.x), y.unwrap_or(c.y))
            }
        }
    }

    /// Feeds the generation's validation cost back to the bandit. Returns the
    /// reward, or `None` for non-adaptive schedules.
    pub fn feedback(&mut self, validation_cost: f64) -> Result<Option<u8>> {
        match self.bandit.as_mut() {
            Some(b) => {
                let r = b.compute_reward(validation_cost);
                b.update_posteriors(r)?;
                Ok(Some(r))
            }
            None => Ok(None),
        }
    }

    fn centred(
        &mut self,
        iv: Interval,
        frac: f64,
        draw: fn(&mut ChaCha8Rng) -> f64,
    ) -> f64 {
        let c = iv.center();
        let scale = frac * 0.5 * iv.width();
        if scale == 0.0 {
            return c;
        }
        for _ in 0..MAX_REJECTIONS {
            let v = c + scale * draw(&mut self.rng);
            if v >= iv.lo && v <= iv.hi {
                return v;
            }
        }
        self.clamped += 1;
        (c + scale * draw(&mut self.rng)).clamp(iv.lo, iv.hi)
    }
}

fn sample_gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn sample_cauchy(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random();
    (std::f64::consts::PI * (u - 0.5)).tan()
}

/// Maps unit coordinates affinely onto the training box.
pub fn map_unit(space: &MorphologySpace, ux: f64, uy: f64) -> Morphology {
    Morphology::new(
        space.x_train.lo + ux * space.x_train.width(),
        space.y_train.lo + uy * space.y_train.width(),
    )
}

/// Empirical moments of one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisStats {
    pub mean: f64,
    pub variance: f64,
    /// Fraction of draws in the outer 10% at either end of the axis.
    pub edge_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionStats {
    pub x: AxisStats,
    pub y: AxisStats,
    pub samples: usize,
    pub clamped: u64,
    /// True when the statistics are those of one exact deterministic cycle.
    pub exact_cycle: bool,
}

fn axis_stats(values: &[f64], iv: Interval) -> AxisStats {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let edge = values
        .iter()
        .filter(|&&v| {
            let u = (v - iv.lo) / iv.width();
            !(0.1..=0.9).contains(&u)
        })
        .count() as f64;
    AxisStats {
        mean,
        variance,
        edge_mass: edge / n,
    }
}

/// Draws `n` morphologies and summarises them per axis. The incremental
/// schedule is deterministic, so its statistics cover exactly one cycle.
pub fn sample_distribution_check(
    spec: &ScheduleSpec,
    space: &MorphologySpace,
    n: usize,
    rng: ChaCha8Rng,
) -> Result<DistributionStats> {
    if n < 1000 {
        return Err(Error::InvalidInput(format!(
            "distribution check needs at least 1000 draws, got {n}"
        )));
    }
    let grid = build_training_grid(space);
    let mut schedule = Schedule::new(spec.clone(), &grid, rng)?;
    let exact_cycle = matches!(spec, ScheduleSpec::DiscreteIncremental);
    let draws = if exact_cycle { grid.len() } else { n };
    let (mut xs, mut ys) = (Vec::with_capacity(draws), Vec::with_capacity(draws));
    for g in 0..draws {
        let m = schedule.next_morphology(space, &grid, g).morphology;
        xs.push(m.x);
        ys.push(m.y);
    }
    Ok(DistributionStats {
        x: axis_stats(&xs, space.x_train),
        y: axis_stats(&ys, space.y_train),
        samples: draws,
        clamped: schedule.clamp_count(),
        exact_cycle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphospace::bipedal;
    use crate::seed;

    fn schedule(spec: ScheduleSpec) -> (MorphologySpace, MorphologyGrid, Schedule) {
        let space = bipedal();
        let grid = build_training_grid(&space);
        let s = Schedule::new(spec, &grid, seed::stream(&[42])).unwrap();
        (space, grid, s)
    }

    #[test]
    fn incremental_sweeps_x_first_and_cycles() {
        let (space, grid, mut s) = schedule(ScheduleSpec::DiscreteIncremental);
        let at = |s: &mut Schedule, g| s.next_morphology(&space, &grid, g).morphology;
        assert_eq!(at(&mut s, 0), Morphology::new(7.0, 24.0));
        assert_eq!(at(&mut s, 5), Morphology::new(17.0, 24.0));
        assert_eq!(at(&mut s, 6), Morphology::new(7.0, 28.0));
        assert_eq!(at(&mut s, 36), Morphology::new(7.0, 24.0));
        let mut seen = vec![0; 36];
        for g in 0..36 {
            seen[s.next_morphology(&space, &grid, g).arm.unwrap()] += 1;
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn beta_endpoints_map_to_corners() {
        assert_eq!(map_unit(&bipedal(), 0.0, 1.0), Morphology::new(7.0, 44.0));
    }

    #[test]
    fn degenerate_gaussian_is_the_centre() {
        let (space, grid, mut s) = schedule(ScheduleSpec::Gaussian { sigma_frac: 0.0 });
        for g in 0..50 {
            assert_eq!(s.next_morphology(&space, &grid, g).morphology, Morphology::new(12.0, 34.0));
        }
    }

    #[test]
    fn fixed_defaults_to_centre() {
        let (space, grid, mut s) = schedule(ScheduleSpec::center());
        assert_eq!(s.next_morphology(&space, &grid, 3).morphology, space.center());
    }

    #[test]
    fn every_kind_stays_in_the_box() {
        let kinds = [
            ScheduleSpec::DiscreteRandom,
            ScheduleSpec::DiscreteIncremental,
            ScheduleSpec::Uniform,
            ScheduleSpec::gaussian(),
            ScheduleSpec::Gaussian { sigma_frac: 50.0 },
            ScheduleSpec::cauchy(),
            ScheduleSpec::Cauchy { scale_frac: 100.0 },
            ScheduleSpec::beta(),
            ScheduleSpec::bandit(),
            ScheduleSpec::center(),
        ];
        for spec in kinds {
            let (space, grid, mut s) = schedule(spec.clone());
            for g in 0..5000 {
                let m = s.next_morphology(&space, &grid, g).morphology;
                assert!(space.in_train(m), "{spec:?} produced {m:?}");
            }
        }
    }

    #[test]
    fn wide_gaussian_hits_the_clamp_counter() {
        let (space, grid, mut s) = schedule(ScheduleSpec::Gaussian { sigma_frac: 1e4 });
        for g in 0..200 {
            s.next_morphology(&space, &grid, g);
        }
        assert!(s.clamp_count() > 0);
    }

    #[test]
    fn random_grid_frequencies_within_four_sigma() {
        let (space, grid, mut s) = schedule(ScheduleSpec::DiscreteRandom);
        let n = 72_000;
        let mut counts = vec![0usize; 36];
        for g in 0..n {
            counts[s.next_morphology(&space, &grid, g).arm.unwrap()] += 1;
        }
        let p = 1.0 / 36.0;
        let bound = 4.0 * (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() <= bound);
        }
    }

    #[test]
    fn seeded_sequences_repeat() {
        let run = || {
            let (space, grid, mut s) = schedule(ScheduleSpec::beta());
            (0..100)
                .map(|g| s.next_morphology(&space, &grid, g).morphology)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn uniform_mean_near_centre() {
        let stats = sample_distribution_check(
            &ScheduleSpec::Uniform,
            &bipedal(),
            100_000,
            seed::stream(&[7]),
        )
        .unwrap();
        assert!((stats.x.mean - 12.0).abs() < 0.1);
        assert!((stats.y.mean - 34.0).abs() < 0.2);
    }

    #[test]
    fn gaussian_mean_is_unbiased() {
        let n = 100_000;
        let stats =
            sample_distribution_check(&ScheduleSpec::gaussian(), &bipedal(), n, seed::stream(&[8]))
                .unwrap();
        // sigma = half-range / 3
        let sx = 5.0 / 3.0;
        let sy = 10.0 / 3.0;
        assert!((stats.x.mean - 12.0).abs() < 3.0 * sx / (n as f64).sqrt());
        assert!((stats.y.mean - 34.0).abs() < 3.0 * sy / (n as f64).sqrt());
    }

    #[test]
    fn incremental_reports_exact_cycle() {
        let stats = sample_distribution_check(
            &ScheduleSpec::DiscreteIncremental,
            &bipedal(),
            1000,
            seed::stream(&[9]),
        )
        .unwrap();
        assert!(stats.exact_cycle);
        assert_eq!(stats.samples, 36);
        assert_eq!(stats.x.mean, 12.0);
        // Two of six columns sit on the edges.
        assert!((stats.x.edge_mass - 2.0 / 6.0).abs() < 1e-12);
        assert!(sample_distribution_check(&ScheduleSpec::Uniform, &bipedal(), 10, seed::stream(&[0])).is_err());
    }

    #[test]
    fn config_round_trip_and_validation() {
        let spec: ScheduleSpec = toml::from_str("kind = \"beta\"").unwrap();
        assert_eq!(spec, ScheduleSpec::beta());
        let spec: ScheduleSpec = toml::from_str("kind = \"bandit\"\ngamma = 0.05").unwrap();
        assert!(matches!(spec, ScheduleSpec::Bandit(p) if p.gamma == 0.05 && p.window == 10));
        assert!(ScheduleSpec::Beta { alpha: 0.0, beta: 1.0 }.validate().is_err());
        assert!(toml::from_str::<ScheduleSpec>("kind = \"nope\"").is_err());
    }
}
