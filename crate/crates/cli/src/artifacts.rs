//! CSV and JSON artifact writers. Output contains no timestamps, so equal
//! inputs give byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dlrlab_core::experiments::TrialRecord;
use dlrlab_core::fit::RateTrace;
use dlrlab_core::optim::OptimizerConfig;
use serde::Serialize;

use crate::CliError;

pub const RESULTS_FILE: &str = "results.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const TRACES_FILE: &str = "rate_traces.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const RESULTS_HEADER: [&str; 8] = [
    "experiment",
    "algorithm",
    "hidden_units",
    "param_json",
    "seed",
    "epochs_to_threshold",
    "reached",
    "final_accuracy",
];

fn output_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Output {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Output {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(output_err(path))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Output {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })?;
    writeln!(out).map_err(output_err(path))?;
    out.flush().map_err(output_err(path))
}

/// CSV file with a fixed header; rows are written through [`CsvFile::row`].
pub struct CsvFile {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvFile {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, CliError> {
        let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
        writer.write_record(header).map_err(csv_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn row<I, T>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(csv_err(&self.path))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(output_err(&self.path))
    }
}

/// Parameters as a compact JSON object with sorted keys.
pub fn param_json(cfg: &OptimizerConfig) -> String {
    serde_json::to_string(&cfg.params()).expect("a map of floats serializes")
}

/// `k=v;k=v` in key order.
pub fn param_label(cfg: &OptimizerConfig) -> String {
    cfg.params()
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

/// Stable identifier such as `compare/dlr-pre/h100/alpha=10;eta0=1/s3`.
pub fn run_id(experiment: &str, record: &TrialRecord) -> String {
    let c = &record.config;
    format!(
        "{experiment}/{}/h{}/{}/s{}",
        c.optimizer.algorithm(),
        c.hidden_units,
        param_label(&c.optimizer),
        c.seed
    )
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Appends one result row per record.
pub fn write_results<'a>(
    path: &Path,
    rows: impl IntoIterator<Item = (&'a str, &'a TrialRecord)>,
) -> Result<(), CliError> {
    let mut csv = CsvFile::create(path, &RESULTS_HEADER)?;
    for (experiment, r) in rows {
        let c = &r.config;
        csv.row([
            experiment.to_owned(),
            c.optimizer.algorithm().to_string(),
            c.hidden_units.to_string(),
            param_json(&c.optimizer),
            c.seed.to_string(),
            opt_num(r.epochs_to_threshold),
            r.reached().to_string(),
            r.final_accuracy.to_string(),
        ])?;
    }
    csv.finish()
}

pub fn write_curves<'a>(
    path: &Path,
    rows: impl IntoIterator<Item = (&'a str, &'a TrialRecord)>,
) -> Result<(), CliError> {
    let mut csv = CsvFile::create(path, &["run_id", "t_epochs", "test_accuracy"])?;
    for (experiment, r) in rows {
        let id = run_id(experiment, r);
        for p in &r.curve {
            csv.row([id.clone(), p.t.to_string(), p.accuracy.to_string()])?;
        }
    }
    csv.finish()
}

/// Per-layer mean-rate traces of every DLR run, keyed by run id.
pub fn write_traces<'a>(
    path: &Path,
    rows: impl IntoIterator<Item = (&'a str, &'a TrialRecord)>,
) -> Result<(), CliError> {
    let mut csv = CsvFile::create(path, &["run_id", "layer_id", "t_epochs", "mean_rate"])?;
    for (experiment, r) in rows {
        let Some(traces) = &r.traces else { continue };
        let id = run_id(experiment, r);
        for trace in traces.iter() {
            write_trace_rows(&mut csv, &id, trace)?;
        }
    }
    csv.finish()
}

fn write_trace_rows(csv: &mut CsvFile, id: &str, trace: &RateTrace) -> Result<(), CliError> {
    for &(t, rate) in &trace.samples {
        csv.row([
            id.to_owned(),
            trace.layer_id.to_string(),
            t.to_string(),
            rate.to_string(),
        ])?;
    }
    Ok(())
}

/// Flat per-run summary used in JSON output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub algorithm: String,
    pub params: std::collections::BTreeMap<String, f64>,
    pub hidden_units: usize,
    pub seed: u64,
    pub reached: bool,
    pub epochs_to_threshold: Option<f64>,
    pub final_accuracy: f64,
    pub updates: u64,
}

impl RunSummary {
    pub fn new(experiment: &str, r: &TrialRecord) -> Self {
        Self {
            run_id: run_id(experiment, r),
            algorithm: r.config.optimizer.algorithm().to_string(),
            params: r.config.optimizer.params(),
            hidden_units: r.config.hidden_units,
            seed: r.config.seed,
            reached: r.reached(),
            epochs_to_threshold: r.epochs_to_threshold,
            final_accuracy: r.final_accuracy,
            updates: r.updates,
        }
    }
}
