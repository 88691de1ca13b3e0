//! The evolutionary training loop and run persistence.
//!
//! Per generation `i`:
//!
//! 1. the schedule picks `m_i`;
//! 2. xNES proposes `lambda` genomes, each evaluated for one episode on `m_i`
//!    (all with the same generation seed);
//! 3. the best sample `I_best` is found and the optimiser is told the costs;
//! 4. `I_best` is validated on every validation morphology and `f_best` is
//!    the mean cost;
//! 5. `I_best` joins the generalist archive if `f_best` is strictly lower than
//!    every earlier entry;
//! 6. the bandit schedule (if any) is rewarded from `f_best`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::envs::{make_env, Environment};
use crate::error::{Error, Result};
use crate::morphospace::{build_training_grid, build_validation_grid, Morphology, MorphologyGrid};
use crate::neuro::{Controller, ControllerSpec, Genome};
use crate::schedules::Schedule;
use crate::seed;
use crate::xnes::{best_of, Xnes};

/// One generation of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub generation: usize,
    pub x: f64,
    pub y: f64,
    /// Training-grid index for discrete schedules.
    pub arm: Option<usize>,
    /// Cost of the best sample on this generation's morphology.
    pub train_cost: f64,
    /// Validation mean of the best sample; empty on skipped validations.
    pub f_best: Option<f64>,
    pub reward: Option<u8>,
    pub archived: bool,
    /// Episodes run during this generation.
    pub episodes: u64,
}

impl GenerationRow {
    pub fn morphology(&self) -> Morphology {
        Morphology::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveEntry {
    pub generation: usize,
    pub genome: Genome,
    pub f_best: f64,
}

/// Generalists in order of discovery; validation costs strictly decrease.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralistArchive {
    pub spec: ControllerSpec,
    pub entries: Vec<ArchiveEntry>,
}

impl GeneralistArchive {
    pub fn new(spec: ControllerSpec) -> Self {
        Self {
            spec,
            entries: Vec::new(),
        }
    }

    pub fn best(&self) -> Option<&ArchiveEntry> {
        self.entries.last()
    }

    /// Appends when `f_best` beats the current best (or the archive is empty).
    pub fn offer(&mut self, generation: usize, genome: &Genome, f_best: f64) -> bool {
        let improves = f_best.is_finite() && self.best().is_none_or(|b| f_best < b.f_best);
        if improves {
            self.entries.push(ArchiveEntry {
                generation,
                genome: genome.clone(),
                f_best,
            });
        }
        improves
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub iteration: usize,
    pub best_cost: f64,
    pub sigma: f64,
    pub mu_norm: f64,
}

/// Bandit posteriors after the update of `generation`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSnapshot {
    pub generation: usize,
    pub params: Vec<(f64, f64)>,
}

/// Complete trace of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: RunConfig,
    pub rows: Vec<GenerationRow>,
    pub archive: GeneralistArchive,
    pub telemetry: Vec<TelemetryRow>,
    pub posteriors: Vec<PosteriorSnapshot>,
    pub total_episodes: u64,
    /// Continuous-schedule draws that hit the rejection cap.
    pub clamp_count: u64,
}

impl RunRecord {
    pub fn choices(&self) -> Vec<Morphology> {
        self.rows.iter().map(GenerationRow::morphology).collect()
    }

    pub fn arm_choices(&self) -> Vec<Option<usize>> {
        self.rows.iter().map(|r| r.arm).collect()
    }

    /// The run's final generalist.
    pub fn generalist(&self) -> Option<&ArchiveEntry> {
        self.archive.best()
    }
}

/// Episode seed shared by every sample of a generation.
pub fn training_seed(config: &RunConfig, generation: usize) -> u64 {
    seed::derive(&[
        config.master_seed,
        config.run_index,
        generation as u64,
        seed::ROLE_TRAIN,
        0,
    ])
}

/// Fixed per-run seeds, one per validation morphology.
pub fn validation_seeds(config: &RunConfig, n: usize) -> Vec<u64> {
    (0..n as u64)
        .map(|j| seed::derive(&[config.master_seed, config.run_index, 0, seed::ROLE_VALIDATE, j]))
        .collect()
}

fn episode_cost(
    env: &dyn Environment,
    spec: ControllerSpec,
    genome: &[f64],
    m: Morphology,
    seed: u64,
) -> Result<f64> {
    let mut ctl = Controller::new(spec, Genome(genome.to_vec()))?;
    Ok(env.run_episode(m, &mut ctl, seed)?.cost)
}

/// Mean episode cost of `genome` over `validation`, one seed per point.
/// Episodes run in parallel; the sum is taken in grid order.
pub fn validate(
    genome: &Genome,
    spec: ControllerSpec,
    validation: &MorphologyGrid,
    env: &dyn Environment,
    seeds: &[u64],
) -> Result<f64> {
    if validation.is_empty() {
        return Err(Error::InvalidInput("empty validation set".into()));
    }
    if seeds.len() != validation.len() {
        return Err(Error::Dimension {
            context: "validation seeds",
            expected: validation.len(),
            actual: seeds.len(),
        });
    }
    let costs: Vec<f64> = validation
        .points
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(p, &s)| episode_cost(env, spec, &genome.0, p.morphology, s))
        .collect::<Result<_>>()?;
    Ok(costs.iter().sum::<f64>() / costs.len() as f64)
}

/// Runs one training run to completion.
pub fn train(config: &RunConfig) -> Result<RunRecord> {
    train_observed(config, |_| {})
}

/// As [`train`], calling `observe` after every generation.
pub fn train_observed<F: FnMut(&GenerationRow)>(config: &RunConfig, mut observe: F) -> Result<RunRecord> {
    config.validate()?;
    let env = make_env(&config.env, &config.env_options)?;
    train_in(config, env, &mut observe)
}

/// As [`train`], on an already constructed environment.
pub fn train_with_env(config: &RunConfig, env: Arc<dyn Environment>) -> Result<RunRecord> {
    config.validate()?;
    train_in(config, env, &mut |_| {})
}

fn train_in(
    config: &RunConfig,
    env: Arc<dyn Environment>,
    observe: &mut dyn FnMut(&GenerationRow),
) -> Result<RunRecord> {
    let contract = env.contract().clone();
    let spec = ControllerSpec::with_hidden(contract.obs_dim, config.hidden, contract.act_dim);
    spec.validate()?;
    contract.check_controller(&spec)?;
    let space = &contract.morph_space;
    let grid = build_training_grid(space);
    let vgrid = build_validation_grid(space);
    let vseeds = validation_seeds(config, vgrid.len());

    let (master, run) = (config.master_seed, config.run_index);
    let mut schedule = Schedule::new(
        config.schedule.clone(),
        &grid,
        seed::stream(&[master, run, seed::ROLE_SCHEDULE]),
    )?;
    let mut opt = Xnes::new(
        vec![0.0; spec.genome_length()],
        &config.xnes,
        seed::stream(&[master, run, seed::ROLE_OPTIMIZER]),
    )?;

    let mut rows = Vec::with_capacity(config.max_generations);
    let mut archive = GeneralistArchive::new(spec);
    let mut telemetry = Vec::new();
    let mut posteriors = Vec::new();
    let mut total_episodes = 0u64;
    let last = config.max_generations - 1;

    for g in 0..config.max_generations {
        let choice = schedule.next_morphology(space, &grid, g);
        let m = choice.morphology;
        let tseed = training_seed(config, g);
        let candidates = opt.ask();
        let costs: Vec<f64> = candidates
            .par_iter()
            .map(|c| episode_cost(env.as_ref(), spec, &c.genome, m, tseed))
            .collect::<Result<_>>()?;
        let mut episodes = candidates.len() as u64;
        let samples: Vec<_> = candidates
            .into_iter()
            .zip(&costs)
            .map(|(c, &cost)| c.evaluated(cost))
            .collect();
        let bi = best_of(&samples)?;
        let best_genome = Genome(samples[bi].genome.clone());
        let best_cost = samples[bi].cost;
        opt.tell(&samples)?;
        drop(samples);

        let (mut f_best, mut reward, mut archived) = (None, None, false);
        if g % config.validation_cadence == 0 || g == last {
            let f = validate(&best_genome, spec, &vgrid, env.as_ref(), &vseeds)?;
            episodes += vgrid.len() as u64;
            archived = archive.offer(g, &best_genome, f);
            reward = schedule.feedback(f)?;
            f_best = Some(f);
        }
        if let Some(b) = schedule.bandit() {
            if config.posterior_every > 0 && (g % config.posterior_every == 0 || g == last) {
                posteriors.push(PosteriorSnapshot {
                    generation: g,
                    params: b.arms().iter().map(|a| (a.alpha, a.beta)).collect(),
                });
            }
        }
        if config.telemetry {
            telemetry.push(TelemetryRow {
                iteration: g,
                best_cost,
                sigma: opt.sigma(),
                mu_norm: opt.mu().norm(),
            });
        }
        total_episodes += episodes;
        let row = GenerationRow {
            generation: g,
            x: m.x,
            y: m.y,
            arm: choice.arm,
            train_cost: best_cost,
            f_best,
            reward,
            archived,
            episodes,
        };
        observe(&row);
        rows.push(row);
    }

    Ok(RunRecord {
        config: config.clone(),
        rows,
        archive,
        telemetry,
        posteriors,
        total_episodes,
        clamp_count: schedule.clamp_count(),
    })
}

/// Config of run `index` in a batch built from `template`.
pub fn batch_member(template: &RunConfig, index: usize) -> RunConfig {
    let mut c = template.clone();
    c.run_index = index as u64;
    c
}

/// Runs `n_runs` independent runs with `parallelism` worker threads. Results
/// do not depend on `parallelism`. A failed run is reported in its slot; the
/// batch fails only when every run fails.
pub fn run_batch(
    template: &RunConfig,
    n_runs: usize,
    parallelism: usize,
) -> Result<Vec<Result<RunRecord>>> {
    run_batch_observed(template, n_runs, parallelism, |_, _| {})
}

pub fn run_batch_observed<F>(
    template: &RunConfig,
    n_runs: usize,
    parallelism: usize,
    observe: F,
) -> Result<Vec<Result<RunRecord>>>
where
    F: Fn(usize, &GenerationRow) + Sync,
{
    if n_runs == 0 {
        return Err(Error::config("n_runs", "must be at least 1"));
    }
    template.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let results: Vec<Result<RunRecord>> = pool.install(|| {
        (0..n_runs)
            .into_par_iter()
            .map(|i| train_observed(&batch_member(template, i), |row| observe(i, row)))
            .collect()
    });
    if results.iter().all(|r| r.is_err()) {
        let first = results.into_iter().next().expect("n_runs >= 1");
        return Err(first.expect_err("all failed"));
    }
    Ok(results)
}

// ---------------------------------------------------------------------------
// Persistence

pub const CONFIG_FILE: &str = "config.json";
pub const GENERATIONS_FILE: &str = "generations.csv";
pub const CHOICES_FILE: &str = "choices.csv";
pub const ARCHIVE_DIR: &str = "archive";
pub const ARCHIVE_INDEX: &str = "index.csv";
pub const POSTERIORS_FILE: &str = "bandit_posteriors.csv";
pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Serialize, Deserialize)]
struct ChoiceRow {
    generation: usize,
    x: f64,
    y: f64,
    arm: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArchiveRow {
    generation: usize,
    f_best: f64,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct PosteriorRow {
    generation: usize,
    arm: usize,
    alpha: f64,
    beta: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Summary {
    generations: usize,
    total_episodes: u64,
    clamp_count: u64,
    archive_entries: usize,
    best_f: Option<f64>,
    best_generation: Option<usize>,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Error::MissingArtifact {
            path: path.to_path_buf(),
            message: "file not found".into(),
        },
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact {
                path: path.to_path_buf(),
                message: "file not found".into(),
            }
        } else {
            Error::io(path, e)
        }
    })
}

impl RunRecord {
    /// Writes the record into `dir`, creating it if needed. Existing files of
    /// the same names are replaced.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let archive_dir = dir.join(ARCHIVE_DIR);
        fs::create_dir_all(&archive_dir).map_err(|e| Error::io(&archive_dir, e))?;
        write_text(&dir.join(CONFIG_FILE), &self.config.to_json())?;
        write_csv(&dir.join(GENERATIONS_FILE), &self.rows)?;
        write_csv(
            &dir.join(CHOICES_FILE),
            self.rows.iter().map(|r| ChoiceRow {
                generation: r.generation,
                x: r.x,
                y: r.y,
                arm: r.arm,
            }),
        )?;
        let mut index = Vec::new();
        for e in &self.archive.entries {
            let file = format!("gen_{:06}.bin", e.generation);
            e.genome.save(&self.archive.spec, &archive_dir.join(&file))?;
            index.push(ArchiveRow {
                generation: e.generation,
                f_best: e.f_best,
                file,
            });
        }
        write_csv(&archive_dir.join(ARCHIVE_INDEX), index)?;
        if !self.posteriors.is_empty() {
            write_csv(
                &dir.join(POSTERIORS_FILE),
                self.posteriors.iter().flat_map(|s| {
                    s.params.iter().enumerate().map(move |(arm, &(alpha, beta))| PosteriorRow {
                        generation: s.generation,
                        arm,
                        alpha,
                        beta,
                    })
                }),
            )?;
        }
        if self.config.telemetry {
            write_csv(&dir.join(TELEMETRY_FILE), &self.telemetry)?;
        }
        let best = self.generalist();
        let summary = Summary {
            generations: self.rows.len(),
            total_episodes: self.total_episodes,
            clamp_count: self.clamp_count,
            archive_entries: self.archive.entries.len(),
            best_f: best.map(|b| b.f_best),
            best_generation: best.map(|b| b.generation),
        };
        write_text(
            &dir.join(SUMMARY_FILE),
            &serde_json::to_string_pretty(&summary).expect("summary serialises"),
        )
    }

    /// Reads a record written by [`RunRecord::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::MissingArtifact {
                path: dir.to_path_buf(),
                message: "run directory not found".into(),
            });
        }
        let cpath = dir.join(CONFIG_FILE);
        let config = RunConfig::from_json(&read_text(&cpath)?, &cpath)?;
        let rows: Vec<GenerationRow> = read_csv(&dir.join(GENERATIONS_FILE))?;
        let archive_dir = dir.join(ARCHIVE_DIR);
        let index: Vec<ArchiveRow> = read_csv(&archive_dir.join(ARCHIVE_INDEX))?;
        let mut archive: Option<GeneralistArchive> = None;
        for row in index {
            let (spec, genome) = Genome::load(&archive_dir.join(&row.file))?;
            let a = archive.get_or_insert_with(|| GeneralistArchive::new(spec));
            if a.spec != spec {
                return Err(Error::format(&archive_dir, "archive genomes disagree on dimensions"));
            }
            a.entries.push(ArchiveEntry {
                generation: row.generation,
                genome,
                f_best: row.f_best,
            });
        }
        let archive = archive.ok_or_else(|| Error::MissingArtifact {
            path: archive_dir.clone(),
            message: "archive is empty".into(),
        })?;
        let ppath = dir.join(POSTERIORS_FILE);
        let mut posteriors: Vec<PosteriorSnapshot> = Vec::new();
        if ppath.exists() {
            for r in read_csv::<PosteriorRow>(&ppath)? {
                match posteriors.last_mut() {
                    Some(s) if s.generation == r.generation => s.params.push((r.alpha, r.beta)),
                    _ => posteriors.push(PosteriorSnapshot {
                        generation: r.generation,
                        params: vec![(r.alpha, r.beta)],
                    }),
                }
            }
        }
        let tpath = dir.join(TELEMETRY_FILE);
        let telemetry = if tpath.exists() { read_csv(&tpath)? } else { Vec::new() };
        let spath = dir.join(SUMMARY_FILE);
        let summary: Summary = serde_json::from_str(&read_text(&spath)?)
            .map_err(|e| Error::format(&spath, e.to_string()))?;
        Ok(Self {
            config,
            rows,
            archive,
            telemetry,
            posteriors,
            total_episodes: summary.total_episodes,
            clamp_count: summary.clamp_count,
        })
    }
}

/// Directory name of run `index` inside a batch directory.
pub fn run_dir_name(index: usize) -> String {
    format!("run_{index:03}")
}

/// Run directories of a batch, in index order.
pub fn batch_run_dirs(batch: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(batch).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact {
                path: batch.to_path_buf(),
                message: "batch directory not found".into(),
            }
        } else {
            Error::io(batch, e)
        }
    })?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("run_"))
        })
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::MissingArtifact {
            path: batch.to_path_buf(),
            message: "no run_* directories".into(),
        });
    }
    Ok(dirs)
}

/// Loads every run record of a batch directory.
pub fn load_batch(batch: &Path) -> Result<Vec<RunRecord>> {
    batch_run_dirs(batch)?.iter().map(|d| RunRecord::load(d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::ScheduleSpec;

    fn quick(schedule: ScheduleSpec, gens: usize) -> RunConfig {
        RunConfig {
            env: "cartpole_vary".into(),
            schedule,
            max_generations: gens,
            master_seed: 3,
            env_options: crate::envs::EnvOptions {
                episode_steps: Some(50),
                external: None,
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn one_generation_archives_once() {
        let r = train(&quick(ScheduleSpec::DiscreteRandom, 1)).unwrap();
        assert_eq!(r.archive.entries.len(), 1);
        assert_eq!(r.rows.len(), 1);
        assert!(r.rows[0].archived);
    }

    #[test]
    fn episode_budget_is_exact() {
        let r = train(&quick(ScheduleSpec::Uniform, 4)).unwrap();
        // lambda(96) = 17 training episodes + 36 validation episodes.
        assert!(r.rows.iter().all(|row| row.episodes == 17 + 36));
        assert_eq!(r.total_episodes, 4 * 53);
    }

    #[test]
    fn archive_strictly_improves_and_ends_at_minimum() {
        let r = train(&quick(ScheduleSpec::beta(), 12)).unwrap();
        let f: Vec<f64> = r.archive.entries.iter().map(|e| e.f_best).collect();
        assert!(f.windows(2).all(|w| w[1] < w[0]));
        let min = r.rows.iter().filter_map(|x| x.f_best).fold(f64::INFINITY, f64::min);
        assert_eq!(*f.last().unwrap(), min);
    }

    #[test]
    fn cadence_skips_validation_but_not_the_last_generation() {
        let mut c = quick(ScheduleSpec::Uniform, 5);
        c.validation_cadence = 3;
        let r = train(&c).unwrap();
        let validated: Vec<bool> = r.rows.iter().map(|x| x.f_best.is_some()).collect();
        assert_eq!(validated, vec![true, false, false, true, true]);
    }

    #[test]
    fn validate_is_the_mean() {
        let env = make_env("cartpole_vary", &Default::default()).unwrap();
        let space = env.contract().morph_space.clone();
        let spec = env.contract().controller_spec();
        let g = Genome((0..spec.genome_length()).map(|i| (i as f64 * 0.37).sin() * 0.3).collect());
        let grid = build_training_grid(&space);
        let mut two = grid.clone();
        two.points.truncate(2);
        let seeds = [5, 6];
        let f = validate(&g, spec, &two, env.as_ref(), &seeds).unwrap();
        let c0 = episode_cost(env.as_ref(), spec, &g.0, two.points[0].morphology, 5).unwrap();
        let c1 = episode_cost(env.as_ref(), spec, &g.0, two.points[1].morphology, 6).unwrap();
        assert_eq!(f, (c0 + c1) / 2.0);
        let mut one = grid;
        one.points.truncate(1);
        assert_eq!(validate(&g, spec, &one, env.as_ref(), &[5]).unwrap(), c0);
    }
}
