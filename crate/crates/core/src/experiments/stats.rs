use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

use super::trial::TrialRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    /// Sample standard deviation (n - 1); absent for a single value.
    pub std: Option<f64>,
    pub median: f64,
    pub count: usize,
}

/// Median with the even-count convention of averaging the two middle values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    })
}

pub fn summarize(values: &[f64]) -> Result<SummaryStats> {
    let count = values.len();
    if count == 0 {
        return Err(Error::Empty("values to summarize"));
    }
    let mean = values.iter().sum::<f64>() / count as f64;
    let std = (count > 1).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (count - 1) as f64).sqrt()
    });
    Ok(SummaryStats {
        mean,
        std,
        median: median(values).expect("nonempty"),
        count,
    })
}

/// Epochs-to-threshold outcomes of a cohort; not-reached runs are counted
/// separately and excluded from the statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcomes {
    pub stats: Option<SummaryStats>,
    pub reached: usize,
    pub not_reached: usize,
}

impl Outcomes {
    pub fn from_values(values: &[Option<f64>]) -> Self {
        let reached: Vec<f64> = values.iter().flatten().copied().collect();
        Self {
            stats: summarize(&reached).ok(),
            reached: reached.len(),
            not_reached: values.len() - reached.len(),
        }
    }

    pub fn from_records(records: &[TrialRecord]) -> Self {
        let values: Vec<Option<f64>> = records.iter().map(|r| r.epochs_to_threshold).collect();
        Self::from_values(&values)
    }

    /// Median over all runs, counting not-reached runs as infinitely slow.
    pub fn median_with_failures(values: &[Option<f64>]) -> Option<f64> {
        let all: Vec<f64> = values.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
        median(&all)
    }
}

/// Pointwise median test accuracy across runs, truncated to the checkpoints
/// every run reached.
pub fn median_curve(records: &[TrialRecord]) -> Result<Vec<(f64, f64)>> {
    let first = records.first().ok_or(Error::Empty("records"))?;
    let len = records.iter().map(|r| r.curve.len()).min().unwrap_or(0);
    let mut out = Vec::with_capacity(len);
    for k in 0..len {
        let t = first.curve[k].t;
        let mut values = Vec::with_capacity(records.len());
        for r in records {
            if r.curve[k].t != t {
                return Err(invalid(format!(
                    "checkpoint grids differ at index {k}: t = {} vs {t}",
                    r.curve[k].t
                )));
            }
            values.push(r.curve[k].accuracy);
        }
        out.push((t, median(&values).expect("nonempty")));
    }
    Ok(out)
}
