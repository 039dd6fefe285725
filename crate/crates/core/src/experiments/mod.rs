//! Train-to-threshold trials and the experiments assembled from them:
//! speed comparison across optimizers, minimal hidden-layer size, and the
//! replay of a fitted average DLR rate.
//!
//! Every trial is seeded on its own, so trials can run in any order or in
//! parallel. Results are always assembled in configuration order.

mod grid;
mod replay;
mod scan;
mod stats;
mod trial;

pub use grid::{compare_params, ParamGrid};
pub use replay::{replay_experiment, ReplayConfig, ReplayOutcome, DEFAULT_REPLAY_SEED_OFFSET};
pub use scan::{
    min_size_scan, speed_comparison, MinSizeResult, PointResult, SizeOutcome, SpeedRow, SpeedTable,
};
pub use stats::{median, median_curve, summarize, Outcomes, SummaryStats};
pub use trial::{train_to_threshold, CurvePoint, Protocol, TrainOptions, TrialConfig, TrialRecord};

use rayon::prelude::*;

use crate::data::Splits;
use crate::error::{invalid, Result};

/// Runs independent trials on up to `workers` threads. The output order
/// matches `configs` regardless of completion order.
pub fn run_trials(
    configs: &[TrialConfig],
    data: &Splits,
    workers: usize,
    opts: TrainOptions,
) -> Result<Vec<TrialRecord>> {
    if workers == 0 {
        return Err(invalid("workers must be at least 1"));
    }
    if workers == 1 || configs.len() <= 1 {
        return configs
            .iter()
            .map(|c| train_to_threshold(c, data, opts))
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        configs
            .par_iter()
            .map(|c| train_to_threshold(c, data, opts))
            .collect()
    })
}
