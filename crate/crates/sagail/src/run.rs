//! Run orchestration on disk: single-seed training with per-epoch
//! checkpoints, multi-seed suites and curve summaries.
//!
//! A run directory holds `config.toml` and one `seed_<n>/` directory per
//! seed with `metrics.csv`, `diagnostics.csv` and `checkpoint.json`.
//! Suites add `aggregate.csv`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sagail_core::replay::Trajectory;
use sagail_core::train::{first_sustained, EpochRow, TrainConfig, Trainer};

use crate::metrics::{self, AggregateRow, MetricsRow};
use crate::{checkpoint, config, dataset, AppError, AppResult};

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// The demonstration trajectories for `cfg`, or `None` when the algorithm
/// does not use any. The dataset must describe the configured environment.
pub fn load_demos_for(cfg: &TrainConfig) -> AppResult<Option<Vec<Trajectory>>> {
    if !cfg.algo.uses_demos() {
        return Ok(None);
    }
    let path = cfg
        .demos
        .as_deref()
        .ok_or_else(|| AppError::Config(format!("algo {} needs `demos = <dataset path>`", cfg.algo)))?;
    let data = dataset::load(Path::new(path))?;
    if data.header.env != cfg.env {
        return Err(AppError::Config(format!(
            "{path}: dataset was recorded on {} but the run uses {}",
            data.header.env_id,
            cfg.env.id()
        )));
    }
    Ok(Some(data.trajectories))
}

fn write_seed_files(trainer: &Trainer, dir: &Path) -> AppResult<()> {
    metrics::save_with(&dir.join("metrics.csv"), |b| metrics::write_metrics(&trainer.metrics, b))?;
    metrics::save_with(&dir.join("diagnostics.csv"), |b| metrics::write_diagnostics(&trainer.metrics, b))?;
    checkpoint::save(trainer, &dir.join("checkpoint.json"))
}

/// Resume from `dir/checkpoint.json` when asked and present, otherwise
/// start fresh. A resumed run may extend `epochs` but nothing else.
fn open_trainer(cfg: &TrainConfig, seed: u64, demos: Option<Vec<Trajectory>>, dir: &Path, resume: bool) -> AppResult<Trainer> {
    let ckpt = dir.join("checkpoint.json");
    if resume && ckpt.exists() {
        let mut t = checkpoint::load(&ckpt)?;
        let mut expected = cfg.clone();
        expected.epochs = t.config.epochs;
        expected.seeds.clone_from(&t.config.seeds);
        if t.config != expected || t.seed != seed {
            return Err(AppError::Config(format!("{}: checkpoint was written by a different configuration", ckpt.display())));
        }
        t.config.epochs = cfg.epochs;
        log::info!("seed {seed}: resuming after epoch {}", t.epoch);
        return Ok(t);
    }
    Ok(Trainer::new(cfg.clone(), seed, demos)?)
}

/// Train one seed to completion, persisting metrics and a checkpoint after
/// every epoch.
pub fn train_seed(cfg: &TrainConfig, seed: u64, demos: Option<Vec<Trajectory>>, dir: &Path, resume: bool) -> AppResult<Trainer> {
    fs::create_dir_all(dir).map_err(AppError::io(dir))?;
    let mut trainer = open_trainer(cfg, seed, demos, dir, resume)?;
    let mut clock = trainer.metrics.last().map_or(0.0, |r| r.wall_clock);
    if trainer.metrics.is_empty() {
        trainer.evaluate_initial()?;
        write_seed_files(&trainer, dir)?;
    }
    while trainer.epoch < trainer.config.epochs {
        let start = Instant::now();
        trainer.train_epoch()?;
        clock += start.elapsed().as_secs_f64();
        let row = trainer.metrics.last_mut().expect("epoch row");
        row.wall_clock = clock;
        log::info!(
            "seed {seed} epoch {}: success {:.3} return {:.2} admitted {}+{} rejected {} ({clock:.1}s)",
            row.epoch,
            row.success_rate,
            row.mean_return,
            row.admit_direct,
            row.admit_better,
            row.reject
        );
        write_seed_files(&trainer, dir)?;
    }
    Ok(trainer)
}

pub fn write_config(cfg: &TrainConfig, out: &Path) -> AppResult<()> {
    fs::create_dir_all(out).map_err(AppError::io(out))?;
    let p = out.join("config.toml");
    fs::write(&p, config::to_toml(cfg)?).map_err(AppError::io(&p))
}

#[derive(Debug)]
pub struct SuiteOutcome {
    pub completed: Vec<(u64, Vec<EpochRow>)>,
    pub failed: Vec<(u64, AppError)>,
    pub aggregate: Vec<AggregateRow>,
}

/// Train every seed in `cfg.seeds`. Failed seeds are reported and left out
/// of the aggregate; the suite itself fails only when no seed completes.
pub fn run_suite(cfg: &TrainConfig, out: &Path, resume: bool) -> AppResult<SuiteOutcome> {
    if cfg.seeds.is_empty() {
        return Err(AppError::Config("suite needs at least one seed".into()));
    }
    write_config(cfg, out)?;
    let demos = load_demos_for(cfg)?;
    let mut completed = Vec::new();
    let mut failed = Vec::new();
    for &seed in &cfg.seeds {
        match train_seed(cfg, seed, demos.clone(), &seed_dir(out, seed), resume) {
            Ok(t) => completed.push((seed, t.metrics)),
            Err(e) => {
                log::warn!("seed {seed} failed: {e}");
                failed.push((seed, e));
            }
        }
    }
    if completed.is_empty() {
        let (seed, e) = failed.remove(0);
        return Err(match e {
            AppError::Config(m) => AppError::Config(format!("seed {seed}: {m}")),
            AppError::Runtime(m) => AppError::Runtime(format!("seed {seed}: {m}")),
            io => io,
        });
    }
    if !failed.is_empty() {
        log::warn!("aggregating over {} of {} seeds", completed.len(), cfg.seeds.len());
    }
    let runs: Vec<Vec<MetricsRow>> = completed.iter().map(|(_, rows)| rows.iter().map(MetricsRow::from).collect()).collect();
    let aggregate = metrics::aggregate(&runs);
    metrics::save_with(&out.join("aggregate.csv"), |b| metrics::write_rows(&aggregate, b))?;
    Ok(SuiteOutcome {
        completed,
        failed,
        aggregate,
    })
}

/// Metrics files named directly, or every `seed_*/metrics.csv` under a
/// suite directory.
pub fn collect_metrics_files(paths: &[PathBuf]) -> AppResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(AppError::io(p))?
                .filter_map(|e| e.ok().map(|e| e.path().join("metrics.csv")))
                .filter(|m| m.is_file())
                .collect();
            if p.join("metrics.csv").is_file() {
                found.push(p.join("metrics.csv"));
            }
            if found.is_empty() {
                return Err(AppError::Config(format!("{}: no metrics.csv found", p.display())));
            }
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn sustained(rows: &[MetricsRow], threshold: f64, window: usize) -> Option<usize> {
    let as_rows: Vec<EpochRow> = rows
        .iter()
        .map(|r| EpochRow {
            epoch: r.epoch,
            seed: r.seed,
            success_rate: r.success_rate,
            mean_return: r.mean_return,
            admit_direct: r.admit_direct,
            admit_better: r.admit_better,
            reject: r.reject,
            disc_loss: r.disc_loss,
            delta_gail: r.delta_gail,
            wall_clock: 0.0,
            expert_size: 0,
            expert_goal_distance: f64::NAN,
            mean_critic_loss: f64::NAN,
        })
        .collect();
    first_sustained(&as_rows, threshold, window)
}

/// Human-readable summary of one or more metrics files.
pub fn write_curves_summary<W: Write>(runs: &[Vec<MetricsRow>], threshold: f64, mut out: W) -> AppResult<()> {
    let io = |e: std::io::Error| AppError::Runtime(e.to_string());
    writeln!(out, "{:>5}  {:>5}  {:>7}  {:>7}  {:>7}  {:>9}", "epoch", "seeds", "mean", "min", "max", "return").map_err(io)?;
    for r in metrics::aggregate(runs) {
        writeln!(
            out,
            "{:>5}  {:>5}  {:>7.3}  {:>7.3}  {:>7.3}  {:>9.2}",
            r.epoch, r.seeds, r.mean, r.min, r.max, r.mean_return
        )
        .map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    for rows in runs {
        let Some(first) = rows.first() else { continue };
        let last = rows.last().expect("non-empty");
        let hit = sustained(rows, threshold, 3).map_or("never".to_string(), |e| e.to_string());
        let admitted: u64 = rows.iter().map(|r| r.admit_direct + r.admit_better).sum();
        writeln!(
            out,
            "seed {:>3}: final {:.3}, first sustained >= {threshold} at epoch {hit}, admitted {admitted}",
            first.seed, last.success_rate
        )
        .map_err(io)?;
    }
    Ok(())
}
