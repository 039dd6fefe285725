use crate::data::Splits;
use crate::error::{invalid, Error, Result};
use crate::fit::{fit_schedule_with, FitOptions, FitResult};
use crate::optim::OptimizerConfig;

use super::run_trials;
use super::stats::{median_curve, Outcomes};
use super::trial::{Protocol, TrainOptions, TrialConfig, TrialRecord};

/// Offset between a DLR run's seed and the seed of its replay partner.
pub const DEFAULT_REPLAY_SEED_OFFSET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayConfig {
    /// Must be a DLR optimizer.
    pub dlr: OptimizerConfig,
    pub hidden_units: usize,
    pub protocol: Protocol,
    pub seeds: Vec<u64>,
    pub replay_seed_offset: u64,
    pub fit: FitOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub dlr_records: Vec<TrialRecord>,
    /// Layer-1 and layer-2 fits of each DLR run's rate traces.
    pub fits: Vec<[FitResult; 2]>,
    pub replay_records: Vec<TrialRecord>,
    pub dlr: Outcomes,
    pub replay: Outcomes,
    /// Median epochs-to-threshold with not-reached runs ranked last.
    pub dlr_median: Option<f64>,
    pub replay_median: Option<f64>,
    pub dlr_median_curve: Vec<(f64, f64)>,
    pub replay_median_curve: Vec<(f64, f64)>,
}

impl ReplayOutcome {
    pub fn all_fits_converged(&self) -> bool {
        self.fits.iter().flatten().all(|f| f.converged)
    }
}

fn cohort_median(records: &[TrialRecord]) -> Option<f64> {
    let values: Vec<Option<f64>> = records.iter().map(|r| r.epochs_to_threshold).collect();
    Outcomes::median_with_failures(&values)
}

/// Trains with DLR, fits each run's per-layer mean rate, then trains fresh
/// networks with the fitted uniform per-layer schedules.
pub fn replay_experiment(cfg: &ReplayConfig, data: &Splits, workers: usize) -> Result<ReplayOutcome> {
    if !cfg.dlr.algorithm().is_dlr() {
        return Err(invalid(format!(
            "replay needs a DLR optimizer, got {}",
            cfg.dlr.algorithm()
        )));
    }
    if cfg.seeds.is_empty() {
        return Err(invalid("at least one seed is required"));
    }
    let dlr_configs: Vec<TrialConfig> = cfg
        .seeds
        .iter()
        .map(|&s| TrialConfig::new(cfg.protocol, cfg.hidden_units, cfg.dlr, s))
        .collect();
    let dlr_records = run_trials(&dlr_configs, data, workers, TrainOptions::default())?;

    let fit_opts = FitOptions {
        horizon: cfg.fit.horizon.max(cfg.protocol.max_epochs),
        ..cfg.fit
    };
    let fits = dlr_records
        .iter()
        .map(|r| {
            let [l1, l2] = r.traces.as_ref().ok_or(Error::Empty("rate traces"))?;
            Ok([fit_schedule_with(l1, &fit_opts)?, fit_schedule_with(l2, &fit_opts)?])
        })
        .collect::<Result<Vec<_>>>()?;

    let replay_configs: Vec<TrialConfig> = cfg
        .seeds
        .iter()
        .zip(&fits)
        .map(|(&s, [f1, f2])| {
            let optimizer = OptimizerConfig::Scheduled {
                layers: [f1.params, f2.params],
            };
            TrialConfig::new(
                cfg.protocol,
                cfg.hidden_units,
                optimizer,
                s.wrapping_add(cfg.replay_seed_offset),
            )
        })
        .collect();
    let replay_records = run_trials(&replay_configs, data, workers, TrainOptions::default())?;

    Ok(ReplayOutcome {
        dlr: Outcomes::from_records(&dlr_records),
        replay: Outcomes::from_records(&replay_records),
        dlr_median: cohort_median(&dlr_records),
        replay_median: cohort_median(&replay_records),
        dlr_median_curve: median_curve(&dlr_records)?,
        replay_median_curve: median_curve(&replay_records)?,
        dlr_records,
        fits,
        replay_records,
    })
}
