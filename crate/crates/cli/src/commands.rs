use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use generalist::config::RunConfig;
use generalist::engine::{
    batch_run_dirs, run_batch_observed, run_dir_name, train_observed, GenerationRow, RunRecord, CONFIG_FILE,
};
use generalist::envs::{builtin_environments, make_env, Environment};
use generalist::evalstats::{
    compare_schedules, evaluate_on_grid, frequency_heatmap, performance_heatmap, score_batch, write_report,
    BatchScores, Metric, ReportRow,
};
use generalist::morphospace::{build_grid, build_testing_grid, build_training_grid, SetKind};
use generalist::schedules::SCHEDULE_KINDS;
use generalist::{Error, Result};

use crate::{BatchArgs, CompareArgs, ConfigArgs, EvaluateArgs, ReportArgs, TrainArgs};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn missing(path: &Path, message: impl Into<String>) -> Error {
    Error::MissingArtifact {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn refuse(path: &Path) -> Error {
    Error::Config {
        key: "--force".into(),
        message: format!("{} already exists; pass --force to replace it", path.display()),
    }
}

/// Creates `dir`, or empties it under `force`. Refuses a non-empty directory
/// otherwise.
fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let empty = fs::read_dir(dir).map_err(|e| io_err(dir, e))?.next().is_none();
        if !empty {
            if !force {
                return Err(refuse(dir));
            }
            fs::remove_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn check_file(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(refuse(path));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    Ok(())
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    RunConfig::load(&args.config, &args.overrides)
}

fn output_dir(args: &ConfigArgs, cfg: &RunConfig, suffix: &str) -> PathBuf {
    args.output.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| {
        PathBuf::from("runs").join(format!(
            "{}_{}_seed{}{suffix}",
            cfg.env,
            cfg.schedule.kind_name(),
            cfg.master_seed
        ))
    })
}

fn progress_line(prefix: &str, row: &GenerationRow) -> String {
    let f = row.f_best.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "-".into());
    format!(
        "{prefix}gen {:>4}  m=({:.4}, {:.4})  best {:.6e}  f_best {f}{}",
        row.generation,
        row.x,
        row.y,
        row.train_cost,
        if row.archived { "  *" } else { "" }
    )
}

fn describe(rec: &RunRecord) -> String {
    match rec.generalist() {
        Some(g) => format!("best validation cost {:.6e} at generation {}", g.f_best, g.generation),
        None => "no generalist archived".into(),
    }
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let a = &args.common;
    let cfg = load_config(a)?;
    let dir = output_dir(a, &cfg, "");
    prepare_dir(&dir, a.force)?;
    let quiet = a.quiet;
    let rec = train_observed(&cfg, |row| {
        if !quiet {
            eprintln!("{}", progress_line("", row));
        }
    })?;
    rec.save(&dir)?;
    eprintln!("saved {}: {}", dir.display(), describe(&rec));
    Ok(())
}

pub fn batch(args: &BatchArgs) -> Result<()> {
    let a = &args.common;
    let cfg = load_config(a)?;
    if args.runs == 0 {
        return Err(Error::Config {
            key: "--runs".into(),
            message: "must be at least 1".into(),
        });
    }
    let parallelism = args
        .parallelism
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let dir = output_dir(a, &cfg, "_batch");
    prepare_dir(&dir, a.force)?;
    let quiet = a.quiet;
    let last = cfg.max_generations - 1;
    let results = run_batch_observed(&cfg, args.runs, parallelism, |i, row| {
        if !quiet && (row.generation % 10 == 0 || row.generation == last) {
            eprintln!("{}", progress_line(&format!("run {i:>3}  "), row));
        }
    })?;
    let mut failed = 0;
    for (i, r) in results.iter().enumerate() {
        match r {
            Ok(rec) => {
                let run_dir = dir.join(run_dir_name(i));
                rec.save(&run_dir)?;
                eprintln!("run {i:>3}: {}", describe(rec));
            }
            Err(e) => {
                failed += 1;
                eprintln!("run {i:>3} failed: {e}");
            }
        }
    }
    eprintln!(
        "saved {} runs to {}{}",
        args.runs - failed,
        dir.display(),
        if failed > 0 { format!(" ({failed} failed)") } else { String::new() }
    );
    Ok(())
}

/// Run directories of a batch; a single run directory counts as a batch of one.
fn run_dirs(batch: &Path) -> Result<Vec<PathBuf>> {
    if batch.join(CONFIG_FILE).is_file() {
        Ok(vec![batch.to_path_buf()])
    } else {
        batch_run_dirs(batch)
    }
}

struct LoadedBatch {
    label: String,
    dirs: Vec<PathBuf>,
    records: Vec<RunRecord>,
    env: Arc<dyn Environment>,
}

fn load(batch: &Path) -> Result<LoadedBatch> {
    let dirs = run_dirs(batch)?;
    let records = dirs.iter().map(|d| RunRecord::load(d)).collect::<Result<Vec<_>>>()?;
    for (d, r) in dirs.iter().zip(&records) {
        if r.generalist().is_none() {
            return Err(missing(d, "run has no archived generalist"));
        }
    }
    let first = &records[0].config;
    if let Some((d, r)) = dirs.iter().zip(&records).find(|(_, r)| r.config.env != first.env) {
        return Err(Error::InvalidInput(format!(
            "{} uses environment `{}`, the batch started with `{}`",
            d.display(),
            r.config.env,
            first.env
        )));
    }
    let env = make_env(&first.env, &first.env_options)?;
    let label = batch
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| batch.display().to_string());
    Ok(LoadedBatch {
        label,
        dirs,
        records,
        env,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn csv_fail(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let b = load(&args.batch)?;
    let set: SetKind = args.set.into();
    let out = args.output.clone().unwrap_or_else(|| args.batch.clone());
    let summary_path = out.join(format!("evaluation_{}.csv", set.as_str()));
    let cells_path = out.join(format!("evaluation_{}_cells.csv", set.as_str()));
    check_file(&summary_path, args.force)?;
    check_file(&cells_path, args.force)?;

    let space = b.env.contract().morph_space.clone();
    let grid = build_grid(&space, set);
    let mut summary = csv_writer(&summary_path)?;
    let mut cells = csv_writer(&cells_path)?;
    let sf = csv_fail(&summary_path);
    let cf = csv_fail(&cells_path);
    summary.write_record(["run", "run_dir", "set", "cells", "mean_cost"]).map_err(&sf)?;
    cells.write_record(["run", "index", "col", "row", "x", "y", "cost"]).map_err(&cf)?;
    for (i, (dir, rec)) in b.dirs.iter().zip(&b.records).enumerate() {
        let g = rec.generalist().expect("checked on load");
        let e = evaluate_on_grid(&g.genome, rec.archive.spec, &grid, b.env.as_ref(), args.seed)?;
        summary
            .write_record([
                i.to_string(),
                dir.display().to_string(),
                set.as_str().to_string(),
                e.costs.len().to_string(),
                e.mean_cost.to_string(),
            ])
            .map_err(&sf)?;
        for (k, (p, c)) in e.points.iter().zip(&e.costs).enumerate() {
            cells
                .write_record([
                    i.to_string(),
                    k.to_string(),
                    p.col.to_string(),
                    p.row.to_string(),
                    p.morphology.x.to_string(),
                    p.morphology.y.to_string(),
                    c.to_string(),
                ])
                .map_err(&cf)?;
        }
        eprintln!("run {i:>3}: {} mean cost {:.6e} over {} cells", set.as_str(), e.mean_cost, e.costs.len());
    }
    summary.flush().map_err(|e| io_err(&summary_path, e))?;
    cells.flush().map_err(|e| io_err(&cells_path, e))?;
    eprintln!("wrote {} and {}", summary_path.display(), cells_path.display());
    Ok(())
}

fn scores(b: &LoadedBatch, seed: u64) -> Result<BatchScores> {
    score_batch(&b.label, &b.records, b.env.as_ref(), seed)
}

fn pairwise(all: &[BatchScores], metrics: &[Metric]) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for &m in metrics {
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                let (_, row) = compare_schedules(&all[i], &all[j], m)?;
                eprintln!(
                    "{} vs {} on {}: medians {:.6e} / {:.6e}, U {}, p {:.4} {}",
                    row.schedule_a, row.schedule_b, row.metric, row.median_a, row.median_b, row.u, row.p, row.stars
                );
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

fn unique_labels(batches: &mut [LoadedBatch]) {
    for i in 0..batches.len() {
        let clashes = batches.iter().filter(|b| b.label == batches[i].label).count();
        if clashes > 1 {
            batches[i].label = format!("{}_{i}", batches[i].label);
        }
    }
}

pub fn compare(args: &CompareArgs) -> Result<()> {
    check_file(&args.output, args.force)?;
    let mut batches = args.batches.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
    unique_labels(&mut batches);
    let all = batches.iter().map(|b| scores(b, args.seed)).collect::<Result<Vec<_>>>()?;
    let rows = pairwise(&all, &[args.metric.into()])?;
    write_report(&args.output, &rows)?;
    eprintln!("wrote {}", args.output.display());
    Ok(())
}

/// Quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn report(args: &ReportArgs) -> Result<()> {
    prepare_dir(&args.output, args.force)?;
    let mut batches = args.batches.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
    unique_labels(&mut batches);
    let metrics = [Metric::TrainMean, Metric::TestMean, Metric::AllMean];

    let summary_path = args.output.join("summary.csv");
    let mut summary = csv_writer(&summary_path)?;
    let sf = csv_fail(&summary_path);
    summary
        .write_record(["batch", "schedule", "metric", "runs", "min", "q1", "median", "q3", "max"])
        .map_err(&sf)?;
    let mut all = Vec::new();
    for b in &batches {
        let s = scores(b, args.seed)?;
        let schedule = &b.records[0].config.schedule;
        for m in metrics {
            let Ok(mut v) = s.metric(m) else { continue };
            v.sort_by(f64::total_cmp);
            let mut rec = vec![b.label.clone(), schedule.kind_name().into(), m.as_str().into(), v.len().to_string()];
            rec.extend([0.0, 0.25, 0.5, 0.75, 1.0].map(|q| quantile(&v, q).to_string()));
            summary.write_record(&rec).map_err(&sf)?;
        }
        all.push(s);

        let space = b.env.contract().morph_space.clone();
        let genomes: Vec<_> = b
            .records
            .iter()
            .filter_map(|r| r.generalist().map(|g| (r.archive.spec, g.genome.clone())))
            .collect();
        performance_heatmap(&format!("{}_performance", b.label), &genomes, &space, b.env.as_ref(), args.seed)?
            .write(&args.output)?;
        if schedule.is_discrete() {
            let grid = build_training_grid(&space);
            frequency_heatmap(&format!("{}_frequency", b.label), &b.records, &grid, &space)?.write(&args.output)?;
        } else {
            eprintln!(
                "{}: schedule `{}` does not choose grid cells; frequency heatmap skipped",
                b.label,
                schedule.kind_name()
            );
        }
    }
    summary.flush().map_err(|e| io_err(&summary_path, e))?;
    if all.len() >= 2 {
        let rows = pairwise(&all, &metrics)?;
        write_report(&args.output.join("report.csv"), &rows)?;
    }
    eprintln!("wrote report to {}", args.output.display());
    Ok(())
}

pub fn list_envs() -> Result<()> {
    println!("name\tobs\tact\tx (train)\ty (train)\ttrain\ttest");
    for c in builtin_environments() {
        let s = &c.morph_space;
        println!(
            "{}\t{}\t{}\t{} [{}, {}]\t{} [{}, {}]\t{}\t{}",
            c.name,
            c.obs_dim,
            c.act_dim,
            s.x_name,
            s.x_train.lo,
            s.x_train.hi,
            s.y_name,
            s.y_train.lo,
            s.y_train.hi,
            build_training_grid(s).len(),
            build_testing_grid(s).len()
        );
    }
    println!("external\t-\t-\tfrom env_options.external\t-\t-\t-");
    Ok(())
}

pub fn list_schedules() -> Result<()> {
    for (name, doc) in SCHEDULE_KINDS {
        println!("{name}\t{doc}");
    }
    Ok(())
}
