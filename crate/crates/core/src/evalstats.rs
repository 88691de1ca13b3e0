//! Post-training evaluation: grid scores, Mann-Whitney U comparisons, and
//! heatmap/report emission.
//!
//! Robustness is the mean cost over the training grid, generalisation the
//! mean cost over the testing grid. Every grid cell has one fixed episode
//! seed, shared by all genomes, so comparisons are paired per episode.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::bandit::mean_selection_frequencies;
use crate::engine::RunRecord;
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::morphospace::{build_full_grid, GridPoint, Morphology, MorphologyGrid, MorphologySpace, SetKind};
use crate::neuro::{Controller, ControllerSpec, Genome};
use crate::seed;

/// Seed base used by the CLI and the batch helpers.
pub const DEFAULT_EVAL_SEED: u64 = 0x5EED_0E7A;

pub fn cell_seed(seed_base: u64, m: Morphology) -> u64 {
    seed::derive(&[seed_base, seed::ROLE_EVALUATE, m.x.to_bits(), m.y.to_bits()])
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridEvaluation {
    pub kind: SetKind,
    pub rows: usize,
    pub cols: usize,
    pub points: Vec<GridPoint>,
    /// Cost per point, in grid order.
    pub costs: Vec<f64>,
    pub mean_cost: f64,
}

impl GridEvaluation {
    /// Row-major `rows × cols` matrix; cells outside a masked grid are `None`.
    pub fn matrix(&self) -> Vec<Option<f64>> {
        let mut m = vec![None; self.rows * self.cols];
        for (p, &c) in self.points.iter().zip(&self.costs) {
            m[p.row * self.cols + p.col] = Some(c);
        }
        m
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// One seeded episode per grid point.
pub fn evaluate_on_grid(
    genome: &Genome,
    spec: ControllerSpec,
    grid: &MorphologyGrid,
    env: &dyn Environment,
    seed_base: u64,
) -> Result<GridEvaluation> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate on an empty grid".into()));
    }
    env.contract().check_controller(&spec)?;
    let costs: Vec<f64> = grid
        .points
        .par_iter()
        .map(|p| {
            let mut ctl = Controller::new(spec, genome.clone())?;
            Ok(env
                .run_episode(p.morphology, &mut ctl, cell_seed(seed_base, p.morphology))?
                .cost)
        })
        .collect::<Result<_>>()?;
    Ok(GridEvaluation {
        kind: grid.kind,
        rows: grid.rows(),
        cols: grid.cols(),
        points: grid.points.clone(),
        mean_cost: mean(&costs),
        costs,
    })
}

// ---------------------------------------------------------------------------
// Mann-Whitney U

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    /// Group a tends to be smaller than group b.
    Less,
    /// Group a tends to be larger than group b.
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Exact,
    Normal,
}

/// Largest combined sample size that uses the exact null distribution.
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonResult {
    pub group_a: Vec<f64>,
    pub group_b: Vec<f64>,
    /// `#(a > b) + 0.5 #(a == b)`.
    pub u_a: f64,
    pub u_b: f64,
    pub p_value: f64,
    pub significant: bool,
    pub median_a: f64,
    pub median_b: f64,
    pub method: PMethod,
    pub alternative: Alternative,
}

impl ComparisonResult {
    pub fn u_statistic(&self) -> f64 {
        self.u_a
    }

    pub fn stars(&self) -> &'static str {
        stars(self.p_value)
    }
}

/// `"**"` below 0.01, `"*"` below 0.05, empty otherwise.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `(U_a, U_b)` by pair counting.
pub fn u_statistics(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut ua = 0.0;
    for &x in a {
        for &y in b {
            if x > y {
                ua += 1.0;
            } else if x == y {
                ua += 0.5;
            }
        }
    }
    (ua, (a.len() * b.len()) as f64 - ua)
}

/// Doubled mid-ranks of the pooled sample `a ++ b` (integers even with ties).
pub fn doubled_midranks(pooled: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share (i+1 + j+1) / 2; doubled: i + j + 2.
        for &k in &order[i..=j] {
            ranks[k] = (i + j + 2) as u64;
        }
        i = j + 1;
    }
    ranks
}

/// Exact p-value by counting, over all `C(n_a+n_b, n_a)` equally likely
/// labelings, those at least as extreme as the observed one.
pub fn exact_p(a: &[f64], b: &[f64], alternative: Alternative) -> f64 {
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = doubled_midranks(&pooled);
    let observed: u64 = ranks[..na].iter().sum();
    let max_sum: u64 = ranks.iter().sum();
    // ways[k][s]: subsets of size k with doubled rank sum s.
    let mut ways = vec![vec![0u64; max_sum as usize + 1]; na + 1];
    ways[0][0] = 1;
    for &r in &ranks {
        let r = r as usize;
        for k in (1..=na).rev() {
            for s in (r..=max_sum as usize).rev() {
                let add = ways[k - 1][s - r];
                if add > 0 {
                    ways[k][s] += add;
                }
            }
        }
    }
    // Doubled expected rank sum of group a.
    let centre = (na * (na + nb + 1)) as i64;
    let dev = |s: i64| (s - centre).abs();
    let obs = observed as i64;
    let (mut hits, mut total) = (0u64, 0u64);
    for (s, &w) in ways[na].iter().enumerate() {
        if w == 0 {
            continue;
        }
        total += w;
        let s = s as i64;
        let extreme = match alternative {
            Alternative::TwoSided => dev(s) >= dev(obs),
            Alternative::Less => s <= obs,
            Alternative::Greater => s >= obs,
        };
        if extreme {
            hits += w;
        }
    }
    (hits as f64 / total as f64).min(1.0)
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Normal approximation with tie-corrected variance and continuity correction.
pub fn normal_p(a: &[f64], b: &[f64], alternative: Alternative) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let (ua, _) = u_statistics(a, b);
    let mu = na * nb / 2.0;
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1] == pooled[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if !(var > 0.0) {
        return 1.0;
    }
    let sd = var.sqrt();
    let p = match alternative {
        Alternative::TwoSided => {
            let z = ((ua - mu).abs() - 0.5).max(0.0) / sd;
            2.0 * (1.0 - normal_cdf(z))
        }
        Alternative::Less => normal_cdf((ua - mu + 0.5) / sd),
        Alternative::Greater => 1.0 - normal_cdf((ua - mu - 0.5) / sd),
    };
    p.clamp(0.0, 1.0)
}

/// Two-sided Mann-Whitney U test.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<ComparisonResult> {
    mann_whitney_u_with(a, b, Alternative::TwoSided)
}

pub fn mann_whitney_u_with(a: &[f64], b: &[f64], alternative: Alternative) -> Result<ComparisonResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("Mann-Whitney U needs two non-empty groups".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::NonFinite("Mann-Whitney U input"));
    }
    let (u_a, u_b) = u_statistics(a, b);
    let (method, p_value) = if a.len() + b.len() <= EXACT_MAX_N {
        (PMethod::Exact, exact_p(a, b, alternative))
    } else {
        (PMethod::Normal, normal_p(a, b, alternative))
    };
    Ok(ComparisonResult {
        group_a: a.to_vec(),
        group_b: b.to_vec(),
        u_a,
        u_b,
        p_value,
        significant: p_value < 0.05,
        median_a: median(a),
        median_b: median(b),
        method,
        alternative,
    })
}

/// Pearson chi-squared test of `counts` against equal expected counts.
/// Returns `(statistic, p)`.
pub fn chi_squared_uniform(counts: &[f64]) -> Result<(f64, f64)> {
    if counts.len() < 2 {
        return Err(Error::InvalidInput("chi-squared test needs at least two cells".into()));
    }
    let total: f64 = counts.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput("chi-squared test needs positive counts".into()));
    }
    let expected = total / counts.len() as f64;
    let stat: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok((stat, 1.0 - dist.cdf(stat)))
}

// ---------------------------------------------------------------------------
// Batch scores and comparisons

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    TrainMean,
    TestMean,
    AllMean,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::TrainMean => "train_mean",
            Metric::TestMean => "test_mean",
            Metric::AllMean => "all_mean",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train_mean" | "train" => Ok(Metric::TrainMean),
            "test_mean" | "test" => Ok(Metric::TestMean),
            "all_mean" | "all" => Ok(Metric::AllMean),
            other => Err(Error::config(
                "metric",
                format!("unknown metric `{other}` (train_mean, test_mean, all_mean)"),
            )),
        }
    }
}

/// Scores of one run's final generalist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScores {
    pub run: usize,
    pub train_mean: Option<f64>,
    pub test_mean: Option<f64>,
    pub all_mean: Option<f64>,
}

impl RunScores {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::TrainMean => self.train_mean,
            Metric::TestMean => self.test_mean,
            Metric::AllMean => self.all_mean,
        }
    }
}

/// Per-run scores of one batch, labelled for reports.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchScores {
    pub label: String,
    pub env: String,
    pub runs: Vec<RunScores>,
}

impl BatchScores {
    pub fn metric(&self, metric: Metric) -> Result<Vec<f64>> {
        self.runs
            .iter()
            .map(|r| {
                r.get(metric).ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "batch `{}` run {} has no {} score",
                        self.label,
                        r.run,
                        metric.as_str()
                    ))
                })
            })
            .collect()
    }
}

/// Scores a genome on the full grid and splits the cells into training and
/// testing means, so `all` is exactly the cell-weighted mix of the two.
pub fn score_genome(
    genome: &Genome,
    spec: ControllerSpec,
    space: &MorphologySpace,
    env: &dyn Environment,
    seed_base: u64,
) -> Result<(GridEvaluation, RunScores)> {
    let full = evaluate_on_grid(genome, spec, &build_full_grid(space), env, seed_base)?;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (p, &c) in full.points.iter().zip(&full.costs) {
        if space.in_train(p.morphology) {
            train.push(c);
        } else {
            test.push(c);
        }
    }
    let scores = RunScores {
        run: 0,
        train_mean: (!train.is_empty()).then(|| mean(&train)),
        test_mean: (!test.is_empty()).then(|| mean(&test)),
        all_mean: Some(full.mean_cost),
    };
    Ok((full, scores))
}

/// Scores the final generalist of every record.
pub fn score_batch(
    label: &str,
    records: &[RunRecord],
    env: &dyn Environment,
    seed_base: u64,
) -> Result<BatchScores> {
    let space = env.contract().morph_space.clone();
    let runs = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let g = r.generalist().ok_or_else(|| {
                Error::InvalidInput(format!("run {} has an empty archive", r.config.run_index))
            })?;
            let (_, mut s) = score_genome(&g.genome, r.archive.spec, &space, env, seed_base)?;
            s.run = i;
            Ok(s)
        })
        .collect::<Result<_>>()?;
    Ok(BatchScores {
        label: label.to_string(),
        env: env.contract().name.clone(),
        runs,
    })
}

/// One line of `report.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub schedule_a: String,
    pub schedule_b: String,
    pub metric: String,
    pub median_a: f64,
    pub median_b: f64,
    pub u: f64,
    pub p: f64,
    pub stars: String,
}

/// Two-sided comparison of two batches on one metric.
pub fn compare_schedules(
    a: &BatchScores,
    b: &BatchScores,
    metric: Metric,
) -> Result<(ComparisonResult, ReportRow)> {
    if a.env != b.env {
        return Err(Error::InvalidInput(format!(
            "batches were evaluated on different environments (`{}` vs `{}`)",
            a.env, b.env
        )));
    }
    let res = mann_whitney_u(&a.metric(metric)?, &b.metric(metric)?)?;
    let row = ReportRow {
        schedule_a: a.label.clone(),
        schedule_b: b.label.clone(),
        metric: metric.as_str().to_string(),
        median_a: res.median_a,
        median_b: res.median_b,
        u: res.u_a,
        p: res.p_value,
        stars: res.stars().to_string(),
    };
    Ok((res, row))
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Heatmaps

/// Which end of the value range is drawn dark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shade {
    DarkHigh,
    DarkLow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major values; `values[row * cols + col]`.
    pub values: Vec<Option<f64>>,
    /// Cells to outline as the training region.
    pub train_cells: Vec<bool>,
    pub shade: Shade,
}

impl Heatmap {
    pub fn cols(&self) -> usize {
        self.xs.len()
    }

    pub fn rows(&self) -> usize {
        self.ys.len()
    }

    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.cols() + col]
    }

    /// Columns `col,row,x,y,value,train`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("col,row,x,y,value,train\n");
        for row in 0..self.rows() {
            for col in 0..self.cols() {
                let i = row * self.cols() + col;
                let v = self.values[i].map(|v| v.to_string()).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{col},{row},{},{},{v},{}",
                    self.xs[col], self.ys[row], self.train_cells[i]
                );
            }
        }
        out
    }

    /// Plain SVG: one `rect` per cell carrying `data-value` (same text as the
    /// CSV), a rounded label, and a red outline around the training cells.
    pub fn to_svg(&self) -> String {
        const CELL: usize = 56;
        const LEFT: usize = 70;
        const TOP: usize = 30;
        const BOTTOM: usize = 50;
        let (cols, rows) = (self.cols(), self.rows());
        let width = LEFT + cols * CELL + 20;
        let height = TOP + rows * CELL + BOTTOM;
        let present: Vec<f64> = self.values.iter().flatten().copied().filter(|v| v.is_finite()).collect();
        let lo = present.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let darkness = |v: f64| {
            let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            match self.shade {
                Shade::DarkHigh => t,
                Shade::DarkLow => 1.0 - t,
            }
        };
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<title>{}</title>"#, xml_escape(&self.name));
        let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
        // Row 0 (smallest y) at the bottom.
        let cell_xy = |row: usize, col: usize| (LEFT + col * CELL, TOP + (rows - 1 - row) * CELL);
        for row in 0..rows {
            for col in 0..cols {
                let (px, py) = cell_xy(row, col);
                match self.value(row, col) {
                    Some(v) => {
                        let d = if v.is_finite() { darkness(v) } else { 1.0 };
                        let level = (255.0 * (1.0 - 0.85 * d)).round() as u8;
                        let ink = if d > 0.55 { "white" } else { "black" };
                        let _ = writeln!(
                            s,
                            r##"<rect class="cell" x="{px}" y="{py}" width="{CELL}" height="{CELL}" fill="rgb({level},{level},{})" stroke="#999" data-col="{col}" data-row="{row}" data-value="{v}"/>"##,
                            level.saturating_add(20)
                        );
                        let _ = writeln!(
                            s,
                            r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{}</text>"#,
                            px + CELL / 2,
                            py + CELL / 2 + 4,
                            label(v)
                        );
                    }
                    None => {
                        let _ = writeln!(
                            s,
                            r##"<rect class="empty" x="{px}" y="{py}" width="{CELL}" height="{CELL}" fill="#eee" stroke="#ccc"/>"##
                        );
                    }
                }
            }
        }
        if let Some((c0, c1, r0, r1)) = self.train_bounds() {
            let (x0, _) = cell_xy(r0, c0);
            let (_, y0) = cell_xy(r1, c0);
            let w = (c1 - c0 + 1) * CELL;
            let h = (r1 - r0 + 1) * CELL;
            let _ = writeln!(
                s,
                r#"<rect class="train-border" x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="red" stroke-width="3"/>"#
            );
        }
        for (col, x) in self.xs.iter().enumerate() {
            let (px, _) = cell_xy(0, col);
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                px + CELL / 2,
                TOP + rows * CELL + 15,
                label(*x)
            );
        }
        for (row, y) in self.ys.iter().enumerate() {
            let (_, py) = cell_xy(row, 0);
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                LEFT - 6,
                py + CELL / 2 + 4,
                label(*y)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + cols * CELL / 2,
            height - 10,
            xml_escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            TOP + rows * CELL / 2,
            TOP + rows * CELL / 2,
            xml_escape(&self.y_label)
        );
        s.push_str("</svg>\n");
        s
    }

    /// `(col_min, col_max, row_min, row_max)` of the training cells.
    pub fn train_bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let cols = self.cols();
        let cells: Vec<(usize, usize)> = self
            .train_cells
            .iter()
            .enumerate()
            .filter(|(_, &t)| t)
            .map(|(i, _)| (i % cols, i / cols))
            .collect();
        if cells.is_empty() {
            return None;
        }
        let c0 = cells.iter().map(|c| c.0).min()?;
        let c1 = cells.iter().map(|c| c.0).max()?;
        let r0 = cells.iter().map(|c| c.1).min()?;
        let r1 = cells.iter().map(|c| c.1).max()?;
        Some((c0, c1, r0, r1))
    }

    /// Writes `heatmap_<name>.csv` and `heatmap_<name>.svg` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (ext, body) in [("csv", self.to_csv()), ("svg", self.to_svg())] {
            let p = dir.join(format!("heatmap_{}.{ext}", self.name));
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

fn label(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e5).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Mean selection count per training-grid cell across runs of a discrete or
/// bandit schedule.
pub fn frequency_heatmap(
    name: &str,
    records: &[RunRecord],
    grid: &MorphologyGrid,
    space: &MorphologySpace,
) -> Result<Heatmap> {
    let counts = mean_selection_frequencies(records, grid)?;
    Ok(Heatmap {
        name: name.to_string(),
        x_label: space.x_name.clone(),
        y_label: space.y_name.clone(),
        xs: grid.xs.clone(),
        ys: grid.ys.clone(),
        values: counts.values.iter().map(|&v| Some(v)).collect(),
        train_cells: vec![true; counts.values.len()],
        shade: Shade::DarkHigh,
    })
}

/// Mean cost per full-grid cell across `genomes`; darker is better.
pub fn performance_heatmap(
    name: &str,
    genomes: &[(ControllerSpec, Genome)],
    space: &MorphologySpace,
    env: &dyn Environment,
    seed_base: u64,
) -> Result<Heatmap> {
    if genomes.is_empty() {
        return Err(Error::InvalidInput("performance heatmap needs at least one genome".into()));
    }
    let grid = build_full_grid(space);
    let mut sums = vec![0.0; grid.len()];
    for (spec, g) in genomes {
        let e = evaluate_on_grid(g, *spec, &grid, env, seed_base)?;
        for (s, c) in sums.iter_mut().zip(&e.costs) {
            *s += c;
        }
    }
    let n = genomes.len() as f64;
    let mut values = vec![None; grid.rows() * grid.cols()];
    let mut train_cells = vec![false; values.len()];
    for (p, s) in grid.points.iter().zip(&sums) {
        let i = p.row * grid.cols() + p.col;
        values[i] = Some(s / n);
        train_cells[i] = space.in_train(p.morphology);
    }
    Ok(Heatmap {
        name: name.to_string(),
        x_label: space.x_name.clone(),
        y_label: space.y_name.clone(),
        xs: grid.xs.clone(),
        ys: grid.ys.clone(),
        values,
        train_cells,
        shade: Shade::DarkLow,
    })
}
