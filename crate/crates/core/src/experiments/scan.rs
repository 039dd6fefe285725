use std::cmp::Ordering;

use serde::Serialize;

use crate::data::Splits;
use crate::error::{invalid, Result};
use crate::optim::{Algorithm, OptimizerConfig};

use super::grid::ParamGrid;
use super::stats::{summarize, Outcomes, SummaryStats};
use super::trial::{Protocol, TrainOptions, TrialConfig, TrialRecord};
use super::run_trials;

/// All seeds of one grid point at one size, in seed order.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub optimizer: OptimizerConfig,
    pub hidden_units: usize,
    pub records: Vec<TrialRecord>,
}

impl PointResult {
    pub fn values(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.epochs_to_threshold).collect()
    }

    pub fn outcomes(&self) -> Outcomes {
        Outcomes::from_records(&self.records)
    }

    fn mean_reached(&self) -> f64 {
        self.outcomes().stats.map_or(f64::INFINITY, |s| s.mean)
    }
}

/// Fewest failures, then lowest mean epochs. Ties keep the earlier
/// (lexicographically smaller) point.
fn speed_order(a: &PointResult, b: &PointResult) -> Ordering {
    let (oa, ob) = (a.outcomes(), b.outcomes());
    oa.not_reached
        .cmp(&ob.not_reached)
        .then(a.mean_reached().total_cmp(&b.mean_reached()))
}

/// Most successes, then lowest mean epochs.
fn robustness_order(a: &PointResult, b: &PointResult) -> Ordering {
    let (oa, ob) = (a.outcomes(), b.outcomes());
    ob.reached
        .cmp(&oa.reached)
        .then(a.mean_reached().total_cmp(&b.mean_reached()))
}

fn select_best(points: &[PointResult], order: fn(&PointResult, &PointResult) -> Ordering) -> usize {
    let mut best = 0;
    for (k, p) in points.iter().enumerate().skip(1) {
        if order(p, &points[best]) == Ordering::Less {
            best = k;
        }
    }
    best
}

/// Evaluates every grid point of every grid at one size, all seeds each.
fn evaluate_grids(
    grids: &[ParamGrid],
    hidden_units: usize,
    seeds: &[u64],
    protocol: &Protocol,
    data: &Splits,
    workers: usize,
) -> Result<Vec<Vec<PointResult>>> {
    let mut layout = Vec::new();
    let mut configs = Vec::new();
    for grid in grids {
        let points = grid.points()?;
        layout.push(points.clone());
        for opt in points {
            for &seed in seeds {
                configs.push(TrialConfig::new(*protocol, hidden_units, opt, seed));
            }
        }
    }
    let mut records = run_trials(&configs, data, workers, TrainOptions::default())?.into_iter();
    Ok(layout
        .into_iter()
        .map(|points| {
            points
                .into_iter()
                .map(|optimizer| PointResult {
                    optimizer,
                    hidden_units,
                    records: records.by_ref().take(seeds.len()).collect(),
                })
                .collect()
        })
        .collect())
}

fn check_inputs(grids: &[ParamGrid], seeds: &[u64]) -> Result<()> {
    if grids.is_empty() {
        return Err(invalid("at least one parameter grid is required"));
    }
    if seeds.is_empty() {
        return Err(invalid("at least one seed is required"));
    }
    let mut algos: Vec<Algorithm> = grids.iter().map(|g| g.algorithm).collect();
    algos.sort();
    if algos.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid("one grid per algorithm"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedRow {
    pub algorithm: Algorithm,
    pub hidden_units: usize,
    pub best: OptimizerConfig,
    pub outcomes: Outcomes,
    /// Best mean epochs over SGD's best mean epochs at the same size.
    pub ratio_to_sgd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedTable {
    pub rows: Vec<SpeedRow>,
    /// Every grid point evaluated, grouped by size then algorithm.
    pub points: Vec<PointResult>,
}

/// For each algorithm and size, the grid point with the lowest mean
/// epochs-to-threshold over `seeds`, and its ratio to SGD's best.
pub fn speed_comparison(
    grids: &[ParamGrid],
    sizes: &[usize],
    seeds: &[u64],
    protocol: &Protocol,
    data: &Splits,
    workers: usize,
) -> Result<SpeedTable> {
    check_inputs(grids, seeds)?;
    if sizes.is_empty() {
        return Err(invalid("at least one hidden size is required"));
    }
    let mut rows = Vec::new();
    let mut all_points = Vec::new();
    for &h in sizes {
        let per_grid = evaluate_grids(grids, h, seeds, protocol, data, workers)?;
        let mut size_rows: Vec<SpeedRow> = grids
            .iter()
            .zip(&per_grid)
            .map(|(grid, points)| {
                let best = &points[select_best(points, speed_order)];
                SpeedRow {
                    algorithm: grid.algorithm,
                    hidden_units: h,
                    best: best.optimizer,
                    outcomes: best.outcomes(),
                    ratio_to_sgd: None,
                }
            })
            .collect();
        let sgd_mean = size_rows
            .iter()
            .find(|r| r.algorithm == Algorithm::Sgd)
            .and_then(|r| r.outcomes.stats)
            .map(|s| s.mean);
        for row in &mut size_rows {
            row.ratio_to_sgd = match (row.outcomes.stats, sgd_mean) {
                (Some(s), Some(base)) => Some(s.mean / base),
                _ => None,
            };
        }
        rows.extend(size_rows);
        all_points.extend(per_grid.into_iter().flatten());
    }
    Ok(SpeedTable {
        rows,
        points: all_points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeOutcome {
    pub hidden_units: usize,
    pub best: OptimizerConfig,
    /// Per seed, under the best grid point.
    pub reached: Vec<bool>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinSizeResult {
    pub algorithm: Algorithm,
    pub start_fails: bool,
    /// Smallest size at which at least half of the seeds succeeded.
    pub minimal_size: Option<usize>,
    pub sizes: Vec<SizeOutcome>,
    /// Per seed: smallest size reached with every larger scanned size also reached.
    pub per_seed_minimal: Vec<Option<usize>>,
    pub per_seed_stats: Option<SummaryStats>,
    pub points: Vec<PointResult>,
}

/// Shrinks the hidden layer from `start_size` by `size_step` until the best
/// grid point no longer brings at least half of the seeds to the threshold.
pub fn min_size_scan(
    grids: &[ParamGrid],
    seeds: &[u64],
    start_size: usize,
    size_step: usize,
    protocol: &Protocol,
    data: &Splits,
    workers: usize,
) -> Result<Vec<MinSizeResult>> {
    check_inputs(grids, seeds)?;
    if start_size == 0 || size_step == 0 {
        return Err(invalid("start size and size step must be at least 1"));
    }
    let mut results = Vec::new();
    for grid in grids {
        let mut sizes = Vec::new();
        let mut points_seen = Vec::new();
        let mut h = start_size;
        loop {
            let points = evaluate_grids(std::slice::from_ref(grid), h, seeds, protocol, data, workers)?
                .pop()
                .expect("one grid");
            let best = &points[select_best(&points, robustness_order)];
            let reached: Vec<bool> = best.records.iter().map(TrialRecord::reached).collect();
            let wins = reached.iter().filter(|&&r| r).count();
            let success = 2 * wins >= seeds.len();
            sizes.push(SizeOutcome {
                hidden_units: h,
                best: best.optimizer,
                reached,
                success,
            });
            points_seen.extend(points);
            if !success || h <= size_step {
                break;
            }
            h -= size_step;
        }

        let minimal_size = sizes
            .iter()
            .take_while(|s| s.success)
            .last()
            .map(|s| s.hidden_units);
        let per_seed_minimal: Vec<Option<usize>> = (0..seeds.len())
            .map(|k| {
                sizes
                    .iter()
                    .take_while(|s| s.reached[k])
                    .last()
                    .map(|s| s.hidden_units)
            })
            .collect();
        let per_seed_values: Vec<f64> = per_seed_minimal.iter().flatten().map(|&h| h as f64).collect();
        results.push(MinSizeResult {
            algorithm: grid.algorithm,
            start_fails: !sizes[0].success,
            minimal_size,
            sizes,
            per_seed_minimal,
            per_seed_stats: summarize(&per_seed_values).ok(),
            points: points_seen,
        });
    }
    Ok(results)
}

