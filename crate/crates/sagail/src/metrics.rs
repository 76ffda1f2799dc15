//! Metrics CSV files.
//!
//! `metrics.csv` has a fixed header (see [`METRICS_HEADER`]); columns are
//! never added to it. Wall clock and buffer diagnostics go to a separate
//! `diagnostics.csv` keyed by the same `epoch,seed`.

use std::io::{Read, Write};
use std::path::Path;

use sagail_core::train::EpochRow;
use serde::{Deserialize, Serialize};

use crate::{AppError, AppResult};

pub const METRICS_HEADER: [&str; 9] = [
    "epoch",
    "seed",
    "success_rate",
    "mean_return",
    "admit_direct",
    "admit_better",
    "reject",
    "disc_loss",
    "delta_gail",
];

pub const DIAGNOSTICS_HEADER: [&str; 6] = ["epoch", "seed", "wall_clock", "expert_size", "expert_goal_distance", "mean_critic_loss"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub seed: u64,
    pub success_rate: f64,
    pub mean_return: f64,
    pub admit_direct: u64,
    pub admit_better: u64,
    pub reject: u64,
    pub disc_loss: f64,
    pub delta_gail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub epoch: usize,
    pub seed: u64,
    pub wall_clock: f64,
    pub expert_size: usize,
    pub expert_goal_distance: f64,
    pub mean_critic_loss: f64,
}

impl From<&EpochRow> for MetricsRow {
    fn from(r: &EpochRow) -> Self {
        Self {
            epoch: r.epoch,
            seed: r.seed,
            success_rate: r.success_rate,
            mean_return: r.mean_return,
            admit_direct: r.admit_direct,
            admit_better: r.admit_better,
            reject: r.reject,
            disc_loss: r.disc_loss,
            delta_gail: r.delta_gail,
        }
    }
}

impl From<&EpochRow> for DiagnosticsRow {
    fn from(r: &EpochRow) -> Self {
        Self {
            epoch: r.epoch,
            seed: r.seed,
            wall_clock: r.wall_clock,
            expert_size: r.expert_size,
            expert_goal_distance: r.expert_goal_distance,
            mean_critic_loss: r.mean_critic_loss,
        }
    }
}

fn csv_err(e: csv::Error) -> AppError {
    AppError::Runtime(format!("writing csv: {e}"))
}

pub fn write_rows<W: Write, T: Serialize>(rows: &[T], out: W) -> AppResult<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| AppError::Runtime(e.to_string()))
}

pub fn write_metrics<W: Write>(rows: &[EpochRow], out: W) -> AppResult<()> {
    let rows: Vec<MetricsRow> = rows.iter().map(MetricsRow::from).collect();
    if rows.is_empty() {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(METRICS_HEADER).map_err(csv_err)?;
        return w.flush().map_err(|e| AppError::Runtime(e.to_string()));
    }
    write_rows(&rows, out)
}

pub fn write_diagnostics<W: Write>(rows: &[EpochRow], out: W) -> AppResult<()> {
    let rows: Vec<DiagnosticsRow> = rows.iter().map(DiagnosticsRow::from).collect();
    write_rows(&rows, out)
}

/// Read a metrics CSV, insisting on the exact header.
pub fn read_metrics<R: Read>(input: R) -> AppResult<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| AppError::Config(format!("metrics csv: {e}")))?.clone();
    if header.iter().ne(METRICS_HEADER.iter().copied()) {
        return Err(AppError::Config(format!(
            "metrics csv header is `{}`, expected `{}`",
            header.iter().collect::<Vec<_>>().join(","),
            METRICS_HEADER.join(",")
        )));
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| AppError::Config(format!("metrics csv row {}: {e}", i + 1))))
        .collect()
}

pub fn load_metrics(path: &Path) -> AppResult<Vec<MetricsRow>> {
    let file = std::fs::File::open(path).map_err(AppError::io(path))?;
    read_metrics(file).map_err(|e| match e {
        AppError::Config(m) => AppError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Write to `path` through a temporary file so a crash never leaves half a CSV.
pub fn save_with<F>(path: &Path, write: F) -> AppResult<()>
where
    F: FnOnce(&mut Vec<u8>) -> AppResult<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    let tmp = path.with_extension("csv.tmp");
    std::fs::write(&tmp, buf).map_err(AppError::io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(AppError::io(path))
}

/// Success-rate band across seeds for one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub epoch: usize,
    pub seeds: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub mean_return: f64,
}

/// Per-epoch mean and range of success rate over every run that has that
/// epoch.
pub fn aggregate(runs: &[Vec<MetricsRow>]) -> Vec<AggregateRow> {
    let last = runs.iter().flat_map(|r| r.iter().map(|x| x.epoch)).max();
    let Some(last) = last else { return Vec::new() };
    (0..=last)
        .filter_map(|epoch| {
            let rows: Vec<&MetricsRow> = runs.iter().filter_map(|r| r.iter().find(|x| x.epoch == epoch)).collect();
            if rows.is_empty() {
                return None;
            }
            let n = rows.len() as f64;
            Some(AggregateRow {
                epoch,
                seeds: rows.len(),
                mean: rows.iter().map(|r| r.success_rate).sum::<f64>() / n,
                min: rows.iter().map(|r| r.success_rate).fold(f64::INFINITY, f64::min),
                max: rows.iter().map(|r| r.success_rate).fold(f64::NEG_INFINITY, f64::max),
                mean_return: rows.iter().map(|r| r.mean_return).sum::<f64>() / n,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(epoch: usize, seed: u64, s: f64) -> EpochRow {
        EpochRow {
            epoch,
            seed,
            success_rate: s,
            mean_return: -s,
            admit_direct: 1,
            admit_better: 2,
            reject: 3,
            disc_loss: f64::NAN,
            delta_gail: 0.5,
            wall_clock: 1.5,
            expert_size: 4,
            expert_goal_distance: f64::NAN,
            mean_critic_loss: 0.1,
        }
    }

    #[test]
    fn header_is_fixed() {
        let mut buf = Vec::new();
        write_metrics(&[row(0, 3, 0.25)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "epoch,seed,success_rate,mean_return,admit_direct,admit_better,reject,disc_loss,delta_gail");
        let back = read_metrics(text.as_bytes()).unwrap();
        assert_eq!(back.len(), 1);
        assert!(back[0].disc_loss.is_nan());
        assert_eq!(back[0].admit_better, 2);

        let mut empty = Vec::new();
        write_metrics(&[], &mut empty).unwrap();
        assert!(read_metrics(empty.as_slice()).unwrap().is_empty());
        assert!(read_metrics("epoch,seed\n0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn aggregate_matches_hand_average() {
        let a: Vec<MetricsRow> = [row(0, 0, 0.0), row(1, 0, 0.5)].iter().map(MetricsRow::from).collect();
        let b: Vec<MetricsRow> = [row(0, 1, 0.2), row(1, 1, 0.9)].iter().map(MetricsRow::from).collect();
        let agg = aggregate(&[a.clone(), b]);
        assert_eq!(agg.len(), 2);
        assert!((agg[1].mean - 0.7).abs() < 1e-12);
        assert_eq!((agg[1].min, agg[1].max, agg[1].seeds), (0.5, 0.9, 2));
        let single = aggregate(&[a.clone()]);
        assert!(single.iter().zip(&a).all(|(g, r)| g.mean == r.success_rate && g.min == g.max));
    }
}
