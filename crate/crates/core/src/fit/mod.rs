//! Mean learning-rate traces and their fit to the schedule family
//! `a * exp(b * t^(1/3) + c * t) + d`.

pub mod simplex;

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::optim::{RateMatrix, ScheduleParams};
use crate::seeded_rng;

use self::simplex::NelderMead;

pub const TRACE_CSV_HEADER: [&str; 3] = ["layer_id", "t_epochs", "mean_rate"];

/// Mean per-synapse learning rate of one weight layer over training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTrace {
    pub layer_id: u8,
    /// `(t in epochs, mean rate)`, strictly increasing in `t`.
    pub samples: Vec<(f64, f64)>,
}

impl RateTrace {
    pub fn new(layer_id: u8) -> Self {
        Self {
            layer_id,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, t: f64, mean_rate: f64) -> Result<()> {
        if let Some(&(last, _)) = self.samples.last() {
            if !(t > last) {
                return Err(Error::NonIncreasingTime { t, last });
            }
        }
        if !(mean_rate > 0.0 && mean_rate.is_finite()) {
            return Err(invalid(format!("mean rate must be positive, got {mean_rate}")));
        }
        self.samples.push((t, mean_rate));
        Ok(())
    }

    /// Appends the mean over all entries of `rates`.
    pub fn record(&mut self, t: f64, rates: &RateMatrix) -> Result<()> {
        self.push(t, rates.mean())
    }

    pub fn last_t(&self) -> Option<f64> {
        self.samples.last().map(|s| s.0)
    }
}

/// Writes `layer_id,t_epochs,mean_rate` rows for each trace.
pub fn export_traces<'a, W, I>(traces: I, dst: W) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a RateTrace>,
{
    let mut w = csv::Writer::from_writer(dst);
    w.write_record(TRACE_CSV_HEADER)?;
    for trace in traces {
        for &(t, r) in &trace.samples {
            w.write_record([trace.layer_id.to_string(), t.to_string(), r.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn export_trace<W: Write>(trace: &RateTrace, dst: W) -> Result<()> {
    export_traces([trace], dst)
}

/// Reads traces back, one per layer id in order of first appearance.
pub fn import_traces<R: Read>(src: R) -> Result<Vec<RateTrace>> {
    let mut reader = csv::Reader::from_reader(src);
    if reader.headers()?.iter().ne(TRACE_CSV_HEADER) {
        return Err(invalid("trace CSV header must be layer_id,t_epochs,mean_rate"));
    }
    let mut traces: Vec<RateTrace> = Vec::new();
    for row in reader.records() {
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or("");
        let layer_id: u8 = field(0)
            .parse()
            .map_err(|_| invalid(format!("bad layer_id `{}`", field(0))))?;
        let parse = |i: usize| -> Result<f64> {
            field(i)
                .parse()
                .map_err(|_| invalid(format!("bad number `{}`", field(i))))
        };
        let (t, r) = (parse(1)?, parse(2)?);
        let pos = match traces.iter().position(|tr| tr.layer_id == layer_id) {
            Some(p) => p,
            None => {
                traces.push(RateTrace::new(layer_id));
                traces.len() - 1
            }
        };
        traces[pos].push(t, r)?;
    }
    Ok(traces)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ScheduleParams,
    /// Sum of squared residuals in the trace's units.
    pub sse: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Flat JSON shape of a fit: `{layer_id, a, b, c, d, sse, converged, iterations}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub layer_id: u8,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub sse: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn record(&self, layer_id: u8) -> FitRecord {
        FitRecord {
            layer_id,
            a: self.params.a,
            b: self.params.b,
            c: self.params.c,
            d: self.params.d,
            sse: self.sse,
            converged: self.converged,
            iterations: self.iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub starts: usize,
    pub seed: u64,
    /// Extra Nelder–Mead passes restarted from each pass's minimum.
    pub restarts: usize,
    /// Fitted curves must stay positive on `[0, max(horizon, last t)]`.
    pub horizon: f64,
    pub simplex: NelderMead,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            seed: 0x5eed,
            restarts: 4,
            horizon: 0.0,
            simplex: NelderMead::default(),
        }
    }
}

pub const MIN_FIT_SAMPLES: usize = 8;

fn sse(params: &ScheduleParams, samples: &[(f64, f64)]) -> f64 {
    samples
        .iter()
        .map(|&(t, y)| {
            let r = y - params.eval(t);
            r * r
        })
        .sum()
}

/// Best constant approximation and its SSE.
pub fn constant_fit_sse(samples: &[(f64, f64)]) -> f64 {
    let mean = samples.iter().map(|s| s.1).sum::<f64>() / samples.len() as f64;
    sse(&ScheduleParams::constant(mean), samples)
}

pub fn fit_schedule(trace: &RateTrace) -> Result<FitResult> {
    fit_schedule_with(trace, &FitOptions::default())
}

/// Least-squares fit by multi-start Nelder–Mead. Values are rescaled to unit
/// mean magnitude during the search. Among the candidates, the lowest SSE
/// whose curve stays positive over the horizon wins.
pub fn fit_schedule_with(trace: &RateTrace, opts: &FitOptions) -> Result<FitResult> {
    let samples = &trace.samples;
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(invalid(format!(
            "schedule fit needs at least {MIN_FIT_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let (t_min, t_max) = (samples[0].0, samples[samples.len() - 1].0);
    if !(t_max > t_min) {
        return Err(invalid("trace times are all identical"));
    }

    let scale = samples.iter().map(|s| s.1.abs()).sum::<f64>() / samples.len() as f64;
    let scaled: Vec<(f64, f64)> = samples.iter().map(|&(t, y)| (t, y / scale)).collect();
    let objective = |x: &[f64]| {
        sse(
            &ScheduleParams {
                a: x[0],
                b: x[1],
                c: x[2],
                d: x[3],
            },
            &scaled,
        )
    };

    let first = scaled[0].1;
    let last = scaled[scaled.len() - 1].1;
    let mean = scaled.iter().map(|s| s.1).sum::<f64>() / scaled.len() as f64;
    let t_rate = 1.0 / t_max;
    let mut starts: Vec<[f64; 4]> = vec![
        [0.0, 0.0, 0.0, mean],
        [first - last, -1.0, 0.0, last],
        [first - last, 0.0, -t_rate, last],
    ];
    let mut rng = seeded_rng(opts.seed, 0);
    while starts.len() < opts.starts.max(3) {
        let a = (first - last) * rng.random_range(0.5..2.0);
        let b = rng.random_range(-3.0..1.0);
        let c = rng.random_range(-2.0..0.5) * t_rate;
        let d = last * rng.random_range(0.0..1.5);
        starts.push([a, b, c, d]);
    }
    starts.truncate(opts.starts.max(1));

    let mut best: Option<(FitResult, f64)> = None;
    for start in &starts {
        let mut x = start.to_vec();
        let mut iterations = 0;
        let mut minimum = None;
        for _ in 0..=opts.restarts {
            let steps: Vec<f64> = x
                .iter()
                .map(|&v| if v.abs() > 1e-3 { 0.2 * v.abs() } else { 0.05 })
                .collect();
            let m = opts.simplex.minimize(objective, &x, &steps);
            iterations += m.iterations;
            let improved = minimum
                .as_ref()
                .is_none_or(|prev: &simplex::Minimum| m.f < prev.f);
            x.clone_from(&m.x);
            let done = !improved || m.iterations == 0;
            minimum = Some(m);
            if done {
                break;
            }
        }
        let m = minimum.expect("at least one pass");
        let params = ScheduleParams {
            a: m.x[0] * scale,
            b: m.x[1],
            c: m.x[2],
            d: m.x[3] * scale,
        };
        if params.validate_over(t_max.max(opts.horizon)).is_err() {
            continue;
        }
        let fit_sse = sse(&params, samples);
        if !fit_sse.is_finite() {
            continue;
        }
        let better = best.as_ref().is_none_or(|(_, s)| m.f < *s);
        if better {
            best = Some((
                FitResult {
                    params,
                    sse: fit_sse,
                    converged: m.converged,
                    iterations,
                },
                m.f,
            ));
        }
    }
    // The best constant is the exact optimum of a sub-family and is always
    // admissible, so no accepted fit may do worse than it.
    let constant_mean = samples.iter().map(|s| s.1).sum::<f64>() / samples.len() as f64;
    let constant = ScheduleParams::constant(constant_mean);
    let constant_sse = sse(&constant, samples);
    match best {
        Some((r, _)) if r.sse <= constant_sse => Ok(r),
        _ if constant.validate_over(t_max.max(opts.horizon)).is_ok() => Ok(FitResult {
            params: constant,
            sse: constant_sse,
            converged: true,
            iterations: 0,
        }),
        _ => Err(Error::InvalidSchedule {
            t: t_max,
            rate: constant_mean,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn generated(p: ScheduleParams, n: usize, t_max: f64) -> RateTrace {
        let mut tr = RateTrace::new(1);
        for k in 0..n {
            let t = t_max * k as f64 / (n - 1) as f64;
            tr.push(t, p.eval(t)).unwrap();
        }
        tr
    }

    #[test]
    fn record_means() {
        let mut tr = RateTrace::new(2);
        tr.record(0.1, &RateMatrix(ndarray::Array2::from_elem((3, 4), 0.3)))
            .unwrap();
        tr.record(0.2, &RateMatrix(array![[0.2, 0.4]])).unwrap();
        assert!((tr.samples[0].1 - 0.3).abs() < 1e-15);
        assert!((tr.samples[1].1 - 0.3).abs() < 1e-15);
        assert!(matches!(
            tr.record(0.2, &RateMatrix(array![[0.2]])),
            Err(Error::NonIncreasingTime { .. })
        ));
    }

    #[test]
    fn csv_export_import() {
        let empty = RateTrace::new(1);
        let mut buf = Vec::new();
        export_trace(&empty, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "layer_id,t_epochs,mean_rate\n");

        let mut one = RateTrace::new(1);
        one.push(0.1, 0.25).unwrap();
        let mut buf = Vec::new();
        export_trace(&one, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "layer_id,t_epochs,mean_rate\n1,0.1,0.25\n"
        );

        let mut l1 = RateTrace::new(1);
        let mut l2 = RateTrace::new(2);
        for k in 1..20 {
            let t = k as f64 / 60.0;
            l1.push(t, 1.0 / (3.0 + t)).unwrap();
            l2.push(t, std::f64::consts::PI * t.sqrt()).unwrap();
        }
        let mut buf = Vec::new();
        export_traces([&l1, &l2], &mut buf).unwrap();
        assert_eq!(import_traces(&buf[..]).unwrap(), vec![l1, l2]);
        assert!(import_traces(&b"a,b,c\n"[..]).is_err());
    }

    #[test]
    fn refit_generated_schedule() {
        let truth = ScheduleParams {
            a: 0.5,
            b: -1.0,
            c: -0.5,
            d: 0.05,
        };
        let tr = generated(truth, 50, 2.0);
        let fit = fit_schedule(&tr).unwrap();
        for &(t, y) in &tr.samples {
            let rel = (fit.params.eval(t) - y).abs() / y;
            assert!(rel < 0.01, "t={t}: fitted {} vs {y}", fit.params.eval(t));
        }
        assert!(fit.sse <= constant_fit_sse(&tr.samples));
    }

    #[test]
    fn constant_trace() {
        let tr = generated(ScheduleParams::constant(0.37), 20, 1.5);
        let fit = fit_schedule(&tr).unwrap();
        for &(t, _) in &tr.samples {
            assert!((fit.params.eval(t) - 0.37).abs() < 1e-6);
        }
    }

    #[test]
    fn fit_preconditions() {
        let tr = generated(ScheduleParams::constant(0.1), 3, 1.0);
        assert!(fit_schedule(&tr).is_err());
        let mut same = RateTrace::new(1);
        same.samples = vec![(0.5, 0.1); 10];
        assert!(fit_schedule(&same).is_err());
    }

    #[test]
    fn fit_is_deterministic() {
        let truth = ScheduleParams {
            a: 0.8,
            b: -2.0,
            c: 0.1,
            d: 0.2,
        };
        let tr = generated(truth, 30, 1.2);
        assert_eq!(fit_schedule(&tr).unwrap(), fit_schedule(&tr).unwrap());
    }
}
