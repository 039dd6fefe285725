//! Command execution: manifest first, then the experiment, then artifacts.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use dlrlab_core::data::{MnistPaths, Splits};
use dlrlab_core::experiments::{
    min_size_scan, replay_experiment, run_trials, speed_comparison, MinSizeResult, Outcomes,
    ReplayConfig, ReplayOutcome, SpeedTable, SummaryStats, TrainOptions, TrialConfig,
};
use dlrlab_core::fit::{FitOptions, FitRecord};
use dlrlab_core::network::write_checkpoint;
use dlrlab_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::artifacts::{
    opt_num, param_json, write_curves, write_json, write_results, write_traces, CsvFile,
    RunSummary, CURVES_FILE, MANIFEST_FILE, RESULTS_FILE, SUMMARY_FILE, TRACES_FILE,
};
use crate::config::{Command, Settings};
use crate::{CliError, EXIT_GOAL_NOT_MET, EXIT_OK};

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Command,
    pub config_file: Option<PathBuf>,
    pub grid_file: Option<PathBuf>,
    pub settings: Settings,
    pub data: MnistPaths,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(
        settings: Settings,
        data: MnistPaths,
        out_dir: PathBuf,
        config_file: Option<PathBuf>,
        grid_file: Option<PathBuf>,
    ) -> Self {
        Self {
            command: settings.command,
            config_file,
            grid_file,
            seeds: settings.seeds.clone(),
            settings,
            data,
            out_dir,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        }
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read manifest {}: {e}", path.display())))?;
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("malformed manifest {}: {e}", path.display())))?;
        if manifest.command != manifest.settings.command || manifest.seeds != manifest.settings.seeds {
            return Err(CliError::Config(format!(
                "manifest {} is inconsistent: command or seeds disagree with its settings",
                path.display()
            )));
        }
        Ok(manifest)
    }
}

/// Checks the data files, writes the manifest, loads the data and runs the
/// command. Returns the process exit code.
pub fn execute(manifest: &RunManifest) -> Result<u8, CliError> {
    if let Some(path) = manifest.data.missing() {
        return Err(CliError::Data(format!("MNIST file not found: {}", path.display())));
    }
    let out = &manifest.out_dir;
    fs::create_dir_all(out).map_err(|source| CliError::Output {
        path: out.clone(),
        source,
    })?;
    write_json(&out.join(MANIFEST_FILE), manifest)?;

    let data = manifest.data.load().map_err(|e| {
        CliError::Data(format!(
            "cannot load MNIST from {}: {e}",
            manifest.data.train_images.parent().unwrap_or(Path::new(".")).display()
        ))
    })?;
    let s = &manifest.settings;
    match s.command {
        Command::Train => train(s, &data, out),
        Command::Compare => compare(s, &data, out),
        Command::Minsize => minsize(s, &data, out),
        Command::Replay => replay(s, &data, out),
    }
}

fn train(s: &Settings, data: &Splits, out: &Path) -> Result<u8, CliError> {
    let optimizer = s.optimizer.expect("train settings carry an optimizer");
    let config = TrialConfig::new(s.protocol, s.hidden, optimizer, s.seeds[0]);
    let record = run_trials(
        &[config],
        data,
        1,
        TrainOptions { keep_weights: true },
    )?
    .pop()
    .expect("one trial");

    let rows = [("train", &record)];
    write_results(&out.join(RESULTS_FILE), rows)?;
    write_curves(&out.join(CURVES_FILE), rows)?;
    if record.traces.is_some() {
        write_traces(&out.join(TRACES_FILE), rows)?;
    }
    if let Some(net) = &record.weights {
        let path = out.join("weights.bin");
        let file = File::create(&path).map_err(|source| CliError::Output {
            path: path.clone(),
            source,
        })?;
        write_checkpoint(net, config.seed, BufWriter::new(file))?;
    }
    let summary = RunSummary::new("train", &record);
    write_json(&out.join(SUMMARY_FILE), &summary)?;

    match record.epochs_to_threshold {
        Some(t) => {
            println!(
                "reached {} test accuracy after {t} epochs (final accuracy {})",
                s.protocol.accuracy_threshold, record.final_accuracy
            );
            Ok(EXIT_OK)
        }
        None => {
            println!(
                "did not reach {} test accuracy within {} epochs (final accuracy {})",
                s.protocol.accuracy_threshold, s.protocol.max_epochs, record.final_accuracy
            );
            Ok(EXIT_GOAL_NOT_MET)
        }
    }
}

#[derive(Serialize)]
struct CompareRow {
    algorithm: String,
    hidden_units: usize,
    best_params: std::collections::BTreeMap<String, f64>,
    outcomes: Outcomes,
    ratio_to_sgd: Option<f64>,
}

fn compare(s: &Settings, data: &Splits, out: &Path) -> Result<u8, CliError> {
    let table: SpeedTable =
        speed_comparison(&s.grids, &s.sizes, &s.seeds, &s.protocol, data, s.workers)?;
    let records: Vec<_> = table
        .points
        .iter()
        .flat_map(|p| p.records.iter().map(|r| ("compare", r)))
        .collect();
    write_results(&out.join(RESULTS_FILE), records.iter().copied())?;
    write_curves(&out.join(CURVES_FILE), records.iter().copied())?;
    write_traces(&out.join(TRACES_FILE), records.iter().copied())?;

    let mut csv = CsvFile::create(
        &out.join("comparison.csv"),
        &[
            "hidden_units",
            "algorithm",
            "best_param_json",
            "reached",
            "not_reached",
            "mean_epochs",
            "std_epochs",
            "median_epochs",
            "ratio_to_sgd",
        ],
    )?;
    println!("hidden  algorithm  reached  mean_epochs  std  ratio_to_sgd");
    let mut rows = Vec::new();
    for row in &table.rows {
        let stats = row.outcomes.stats;
        csv.row([
            row.hidden_units.to_string(),
            row.algorithm.to_string(),
            param_json(&row.best),
            row.outcomes.reached.to_string(),
            row.outcomes.not_reached.to_string(),
            opt_num(stats.map(|s| s.mean)),
            opt_num(stats.and_then(|s| s.std)),
            opt_num(stats.map(|s| s.median)),
            opt_num(row.ratio_to_sgd),
        ])?;
        println!(
            "{:>6}  {:<9}  {:>3}/{:<3}  {:>11}  {:>3}  {}",
            row.hidden_units,
            row.algorithm.to_string(),
            row.outcomes.reached,
            row.outcomes.reached + row.outcomes.not_reached,
            fmt_opt(stats.map(|s| s.mean)),
            fmt_opt(stats.and_then(|s| s.std)),
            fmt_opt(row.ratio_to_sgd),
        );
        rows.push(CompareRow {
            algorithm: row.algorithm.to_string(),
            hidden_units: row.hidden_units,
            best_params: row.best.params(),
            outcomes: row.outcomes,
            ratio_to_sgd: row.ratio_to_sgd,
        });
    }
    csv.finish()?;
    write_json(&out.join(SUMMARY_FILE), &serde_json::json!({ "rows": rows }))?;

    let failed: Vec<String> = table
        .rows
        .iter()
        .filter(|r| r.outcomes.reached == 0)
        .map(|r| format!("{} at h={}", r.algorithm, r.hidden_units))
        .collect();
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        println!("no run reached the threshold for: {}", failed.join(", "));
        Ok(EXIT_GOAL_NOT_MET)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |x| format!("{x:.3}"))
}

#[derive(Serialize)]
struct MinSizeSummary {
    algorithm: String,
    start_fails: bool,
    minimal_size: Option<usize>,
    per_seed_minimal: Vec<Option<usize>>,
    per_seed_stats: Option<SummaryStats>,
    sizes: Vec<dlrlab_core::experiments::SizeOutcome>,
}

fn minsize(s: &Settings, data: &Splits, out: &Path) -> Result<u8, CliError> {
    let results: Vec<MinSizeResult> = min_size_scan(
        &s.grids,
        &s.seeds,
        s.start_size,
        s.size_step,
        &s.protocol,
        data,
        s.workers,
    )?;
    let records: Vec<_> = results
        .iter()
        .flat_map(|r| r.points.iter())
        .flat_map(|p| p.records.iter().map(|r| ("minsize", r)))
        .collect();
    write_results(&out.join(RESULTS_FILE), records.iter().copied())?;
    write_curves(&out.join(CURVES_FILE), records.iter().copied())?;

    let mut csv = CsvFile::create(
        &out.join("minsize.csv"),
        &["algorithm", "hidden_units", "best_param_json", "reached", "runs", "success"],
    )?;
    let mut seeds_csv = CsvFile::create(
        &out.join("minsize_per_seed.csv"),
        &["algorithm", "seed", "minimal_size"],
    )?;
    let mut summary = Vec::new();
    println!("algorithm  minimal_size  per_seed_mean  per_seed_std");
    for r in &results {
        for size in &r.sizes {
            csv.row([
                r.algorithm.to_string(),
                size.hidden_units.to_string(),
                param_json(&size.best),
                size.reached.iter().filter(|&&x| x).count().to_string(),
                size.reached.len().to_string(),
                size.success.to_string(),
            ])?;
        }
        for (seed, m) in s.seeds.iter().zip(&r.per_seed_minimal) {
            seeds_csv.row([
                r.algorithm.to_string(),
                seed.to_string(),
                m.map(|h| h.to_string()).unwrap_or_default(),
            ])?;
        }
        if r.start_fails {
            println!("{:<9}  start size fails (h={})", r.algorithm.to_string(), s.start_size);
        } else {
            println!(
                "{:<9}  {:>12}  {:>13}  {}",
                r.algorithm.to_string(),
                r.minimal_size.map_or("-".into(), |h| h.to_string()),
                fmt_opt(r.per_seed_stats.map(|st| st.mean)),
                fmt_opt(r.per_seed_stats.and_then(|st| st.std)),
            );
        }
        summary.push(MinSizeSummary {
            algorithm: r.algorithm.to_string(),
            start_fails: r.start_fails,
            minimal_size: r.minimal_size,
            per_seed_minimal: r.per_seed_minimal.clone(),
            per_seed_stats: r.per_seed_stats,
            sizes: r.sizes.clone(),
        });
    }
    csv.finish()?;
    seeds_csv.finish()?;
    write_json(&out.join(SUMMARY_FILE), &serde_json::json!({ "algorithms": summary }))?;

    Ok(if results.iter().any(|r| r.start_fails) {
        EXIT_GOAL_NOT_MET
    } else {
        EXIT_OK
    })
}

#[derive(Serialize)]
struct SeedFits {
    seed: u64,
    replay_seed: u64,
    layers: [FitRecord; 2],
}

#[derive(Serialize)]
struct ReplaySummary {
    runs: usize,
    /// Standard deviations are absent when there is a single run.
    degenerate: bool,
    dlr: Outcomes,
    replay: Outcomes,
    dlr_median: Option<f64>,
    replay_median: Option<f64>,
    dlr_faster: bool,
    fits_converged: bool,
    dlr_runs: Vec<RunSummary>,
    replay_runs: Vec<RunSummary>,
}

fn replay(s: &Settings, data: &Splits, out: &Path) -> Result<u8, CliError> {
    let cfg = ReplayConfig {
        dlr: s.optimizer.expect("replay settings carry an optimizer"),
        hidden_units: s.hidden,
        protocol: s.protocol,
        seeds: s.seeds.clone(),
        replay_seed_offset: s.replay_seed_offset,
        fit: FitOptions::default(),
    };
    let outcome: ReplayOutcome = match replay_experiment(&cfg, data, s.workers) {
        Ok(o) => o,
        Err(e @ CoreError::InvalidSchedule { .. }) => {
            println!("fitted schedule is unusable: {e}");
            return Ok(EXIT_GOAL_NOT_MET);
        }
        Err(e) => return Err(e.into()),
    };

    let records: Vec<_> = outcome
        .dlr_records
        .iter()
        .chain(&outcome.replay_records)
        .map(|r| ("replay", r))
        .collect();
    write_results(&out.join(RESULTS_FILE), records.iter().copied())?;
    write_curves(&out.join(CURVES_FILE), records.iter().copied())?;
    write_traces(&out.join(TRACES_FILE), records.iter().copied())?;

    let mut csv = CsvFile::create(
        &out.join("median_curves.csv"),
        &["cohort", "t_epochs", "median_accuracy"],
    )?;
    for (cohort, curve) in [
        ("dlr", &outcome.dlr_median_curve),
        ("replay", &outcome.replay_median_curve),
    ] {
        for (t, acc) in curve {
            csv.row([cohort.to_owned(), t.to_string(), acc.to_string()])?;
        }
    }
    csv.finish()?;

    let fits: Vec<SeedFits> = s
        .seeds
        .iter()
        .zip(&outcome.fits)
        .map(|(&seed, [f1, f2])| SeedFits {
            seed,
            replay_seed: seed.wrapping_add(s.replay_seed_offset),
            layers: [f1.record(1), f2.record(2)],
        })
        .collect();
    write_json(&out.join("fits.json"), &fits)?;

    let dlr_faster = match (outcome.dlr_median, outcome.replay_median) {
        (Some(a), Some(b)) => a < b,
        _ => false,
    };
    let summary = ReplaySummary {
        runs: s.seeds.len(),
        degenerate: s.seeds.len() == 1,
        dlr: outcome.dlr,
        replay: outcome.replay,
        dlr_median: outcome.dlr_median.filter(|m| m.is_finite()),
        replay_median: outcome.replay_median.filter(|m| m.is_finite()),
        dlr_faster,
        fits_converged: outcome.all_fits_converged(),
        dlr_runs: outcome.dlr_records.iter().map(|r| RunSummary::new("replay", r)).collect(),
        replay_runs: outcome
            .replay_records
            .iter()
            .map(|r| RunSummary::new("replay", r))
            .collect(),
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    println!(
        "median epochs to threshold: dlr {}, replay {}",
        fmt_opt(summary.dlr_median),
        fmt_opt(summary.replay_median)
    );

    if !summary.fits_converged {
        for f in &fits {
            for l in &f.layers {
                if !l.converged {
                    println!(
                        "fit did not converge: seed {} layer {} after {} iterations (sse {})",
                        f.seed, l.layer_id, l.iterations, l.sse
                    );
                }
            }
        }
        return Ok(EXIT_GOAL_NOT_MET);
    }
    if outcome.dlr.reached == 0 || outcome.replay.reached == 0 {
        println!("a cohort never reached the threshold");
        return Ok(EXIT_GOAL_NOT_MET);
    }
    Ok(EXIT_OK)
}
