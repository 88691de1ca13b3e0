//! Morphology parameter spaces and the grids enumerated from them.
//!
//! A [`MorphologySpace`] is a training box flanked on each axis by a low and a
//! high testing interval. Grids are always enumerated x-major (x varies
//! fastest); the same convention indexes heatmap cells and bandit arms.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for interval membership and step-count checks.
pub const GRID_TOL: f64 = 1e-9;

/// Closed real interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo - GRID_TOL && v <= self.hi + GRID_TOL
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// `lo + j*step` for every `j` keeping the value inside the interval.
    pub fn stepped_values(&self, step: f64) -> Vec<f64> {
        if self.width() <= GRID_TOL {
            return vec![self.lo];
        }
        let n = (self.width() / step + 1e-6).floor() as usize;
        (0..=n).map(|j| self.lo + j as f64 * step).collect()
    }
}

/// One point of a morphology space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Morphology {
    pub x: f64,
    pub y: f64,
}

impl Morphology {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Two-parameter morphology box with flanking test intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphologySpace {
    pub x_name: String,
    pub y_name: String,
    pub x_train: Interval,
    pub y_train: Interval,
    pub x_test_low: Interval,
    pub x_test_high: Interval,
    pub y_test_low: Interval,
    pub y_test_high: Interval,
    pub x_step: f64,
    pub y_step: f64,
}

/// Which evaluation set a grid enumerates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetKind {
    Train,
    Test,
    All,
}

impl SetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SetKind::Train => "train",
            SetKind::Test => "test",
            SetKind::All => "all",
        }
    }
}

impl std::str::FromStr for SetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SetKind::Train),
            "test" => Ok(SetKind::Test),
            "all" => Ok(SetKind::All),
            other => Err(Error::InvalidInput(format!(
                "unknown set `{other}` (expected train, test or all)"
            ))),
        }
    }
}

/// A grid point together with its (column, row) cell in the enclosing
/// rectangular lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub morphology: Morphology,
    pub col: usize,
    pub row: usize,
}

/// An ordered set of morphologies laid out on a rectangular lattice.
///
/// Dense grids (training, validation, full) contain every lattice cell in
/// x-major order, so enumeration index `i` sits at
/// `(col, row) = (i % cols, i / cols)`. The testing grid is a masked subset of
/// the full lattice and keeps the same order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphologyGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub points: Vec<GridPoint>,
    pub kind: SetKind,
}

impl MorphologyGrid {
    fn dense(xs: Vec<f64>, ys: Vec<f64>, kind: SetKind) -> Self {
        let mut points = Vec::with_capacity(xs.len() * ys.len());
        for (row, &y) in ys.iter().enumerate() {
            for (col, &x) in xs.iter().enumerate() {
                points.push(GridPoint {
                    morphology: Morphology::new(x, y),
                    col,
                    row,
                });
            }
        }
        Self {
            xs,
            ys,
            points,
            kind,
        }
    }

    pub fn cols(&self) -> usize {
        self.xs.len()
    }

    pub fn rows(&self) -> usize {
        self.ys.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_dense(&self) -> bool {
        self.points.len() == self.rows() * self.cols()
    }

    pub fn morphologies(&self) -> impl Iterator<Item = Morphology> + '_ {
        self.points.iter().map(|p| p.morphology)
    }

    pub fn get(&self, index: usize) -> Option<Morphology> {
        self.points.get(index).map(|p| p.morphology)
    }

    /// Index of the point closest to `m` within [`GRID_TOL`], if any.
    pub fn index_of(&self, m: Morphology) -> Option<usize> {
        self.points.iter().position(|p| {
            (p.morphology.x - m.x).abs() <= GRID_TOL && (p.morphology.y - m.y).abs() <= GRID_TOL
        })
    }

    /// CSV with columns `index,x,y,set`.
    pub fn to_csv(&self, space: &MorphologySpace) -> String {
        let mut out = String::from("index,x,y,set\n");
        for (i, p) in self.points.iter().enumerate() {
            let set = if space.in_train(p.morphology) {
                "train"
            } else {
                "test"
            };
            let _ = writeln!(out, "{i},{},{},{set}", p.morphology.x, p.morphology.y);
        }
        out
    }
}

impl MorphologySpace {
    /// Checks the structural invariants of the space.
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("x_train", self.x_train),
            ("y_train", self.y_train),
            ("x_test_low", self.x_test_low),
            ("x_test_high", self.x_test_high),
            ("y_test_low", self.y_test_low),
            ("y_test_high", self.y_test_high),
        ];
        for (name, iv) in named {
            if !(iv.lo.is_finite() && iv.hi.is_finite()) || iv.lo > iv.hi {
                return Err(Error::Space(format!(
                    "{name} [{}, {}] is empty or not finite",
                    iv.lo, iv.hi
                )));
            }
        }
        for (name, step) in [("x_step", self.x_step), ("y_step", self.y_step)] {
            if !(step.is_finite() && step > 0.0) {
                return Err(Error::Space(format!("{name} must be positive, got {step}")));
            }
        }
        for (axis, low, train, high) in [
            ("x", self.x_test_low, self.x_train, self.x_test_high),
            ("y", self.y_test_low, self.y_train, self.y_test_high),
        ] {
            if !(low.hi < train.lo && train.hi < high.lo) {
                return Err(Error::Space(format!(
                    "{axis} test intervals must flank the training interval"
                )));
            }
        }
        for (axis, iv, step) in [
            ("x", self.x_train, self.x_step),
            ("y", self.y_train, self.y_step),
        ] {
            let n = iv.width() / step;
            if iv.width() > GRID_TOL && (n - n.round()).abs() > 1e-6 {
                return Err(Error::Space(format!(
                    "{axis} training width {} is not a multiple of step {step}",
                    iv.width()
                )));
            }
        }
        Ok(())
    }

    pub fn center(&self) -> Morphology {
        Morphology::new(self.x_train.center(), self.y_train.center())
    }

    pub fn in_train(&self, m: Morphology) -> bool {
        self.x_train.contains(m.x) && self.y_train.contains(m.y)
    }

    /// Clamps a morphology into the training box.
    pub fn clamp_train(&self, m: Morphology) -> Morphology {
        Morphology::new(
            m.x.clamp(self.x_train.lo, self.x_train.hi),
            m.y.clamp(self.y_train.lo, self.y_train.hi),
        )
    }

    /// Bounding box of the full (train + test) lattice: `(x, y)` intervals.
    pub fn full_box(&self) -> (Interval, Interval) {
        (
            Interval::new(self.x_test_low.lo, self.x_test_high.hi),
            Interval::new(self.y_test_low.lo, self.y_test_high.hi),
        )
    }

    fn train_xs(&self) -> Vec<f64> {
        self.x_train.stepped_values(self.x_step)
    }

    fn train_ys(&self) -> Vec<f64> {
        self.y_train.stepped_values(self.y_step)
    }

    fn full_xs(&self) -> Vec<f64> {
        let mut v = self.x_test_low.stepped_values(self.x_step);
        v.extend(self.train_xs());
        v.extend(self.x_test_high.stepped_values(self.x_step));
        v
    }

    fn full_ys(&self) -> Vec<f64> {
        let mut v = self.y_test_low.stepped_values(self.y_step);
        v.extend(self.train_ys());
        v.extend(self.y_test_high.stepped_values(self.y_step));
        v
    }
}

/// All `(x, y)` on the training lattice, x-major.
pub fn build_training_grid(space: &MorphologySpace) -> MorphologyGrid {
    MorphologyGrid::dense(space.train_xs(), space.train_ys(), SetKind::Train)
}

/// The validation set coincides with the training lattice.
pub fn build_validation_grid(space: &MorphologySpace) -> MorphologyGrid {
    build_training_grid(space)
}

/// The full lattice over test-low, train and test-high values on both axes.
pub fn build_full_grid(space: &MorphologySpace) -> MorphologyGrid {
    MorphologyGrid::dense(space.full_xs(), space.full_ys(), SetKind::All)
}

/// Points of the full lattice with at least one coordinate outside training.
pub fn build_testing_grid(space: &MorphologySpace) -> MorphologyGrid {
    let mut grid = build_full_grid(space);
    grid.points.retain(|p| !space.in_train(p.morphology));
    grid.kind = SetKind::Test;
    grid
}

pub fn build_grid(space: &MorphologySpace, kind: SetKind) -> MorphologyGrid {
    match kind {
        SetKind::Train => build_training_grid(space),
        SetKind::Test => build_testing_grid(space),
        SetKind::All => build_full_grid(space),
    }
}

#[allow(clippy::too_many_arguments)]
fn space(
    x_name: &str,
    y_name: &str,
    x_train: (f64, f64),
    x_low: (f64, f64),
    x_high: (f64, f64),
    x_step: f64,
    y_train: (f64, f64),
    y_low: (f64, f64),
    y_high: (f64, f64),
    y_step: f64,
) -> MorphologySpace {
    MorphologySpace {
        x_name: x_name.into(),
        y_name: y_name.into(),
        x_train: Interval::new(x_train.0, x_train.1),
        y_train: Interval::new(y_train.0, y_train.1),
        x_test_low: Interval::new(x_low.0, x_low.1),
        x_test_high: Interval::new(x_high.0, x_high.1),
        y_test_low: Interval::new(y_low.0, y_low.1),
        y_test_high: Interval::new(y_high.0, y_high.1),
        x_step,
        y_step,
    }
}

pub fn bipedal() -> MorphologySpace {
    space(
        "leg_length",
        "leg_width",
        (7.0, 17.0),
        (3.0, 6.0),
        (18.0, 21.0),
        2.0,
        (24.0, 44.0),
        (16.0, 23.0),
        (45.0, 52.0),
        4.0,
    )
}

pub fn walker2d() -> MorphologySpace {
    space(
        "lower_leg_length",
        "upper_leg_length",
        (0.3, 0.425),
        (0.225, 0.25),
        (0.45, 0.5),
        0.025,
        (0.4, 0.65),
        (0.25, 0.35),
        (0.7, 0.8),
        0.05,
    )
}

pub fn ant() -> MorphologySpace {
    space(
        "lower_leg_length",
        "upper_leg_length",
        (0.5, 1.5),
        (0.2, 0.4),
        (1.6, 1.9),
        0.1,
        (0.7, 1.7),
        (0.4, 0.6),
        (1.8, 2.1),
        0.1,
    )
}

/// Pole length (m) × pole mass (kg).
pub fn cartpole() -> MorphologySpace {
    space(
        "pole_length",
        "pole_mass",
        (0.4, 1.2),
        (0.24, 0.24),
        (1.36, 1.68),
        0.16,
        (0.05, 0.5),
        (0.02, 0.04),
        (0.59, 0.77),
        0.09,
    )
}

/// Link lengths (m) of the planar reacher.
pub fn reacher() -> MorphologySpace {
    space(
        "link1_length",
        "link2_length",
        (0.5, 1.0),
        (0.3, 0.4),
        (1.1, 1.2),
        0.1,
        (0.5, 1.0),
        (0.3, 0.4),
        (1.1, 1.2),
        0.1,
    )
}

/// Link lengths (m) of the acrobot.
pub fn acrobot() -> MorphologySpace {
    space(
        "link1_length",
        "link2_length",
        (0.6, 1.1),
        (0.4, 0.5),
        (1.2, 1.3),
        0.1,
        (0.6, 1.1),
        (0.4, 0.5),
        (1.2, 1.3),
        0.1,
    )
}

/// Every named preset: the three locomotion tasks' ranges followed by the
/// spaces of the built-in environments.
pub fn builtin_presets() -> Vec<(&'static str, MorphologySpace)> {
    vec![
        ("bipedal", bipedal()),
        ("walker2d", walker2d()),
        ("ant", ant()),
        ("cartpole_vary", cartpole()),
        ("reacher_vary", reacher()),
        ("acrobot_vary", acrobot()),
    ]
}

pub fn preset(name: &str) -> Option<MorphologySpace> {
    builtin_presets()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| s)
}
