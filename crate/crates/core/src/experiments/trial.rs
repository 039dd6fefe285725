use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{BatchPlan, Dataset, Splits};
use crate::error::{invalid, Error, Result};
use crate::fit::RateTrace;
use crate::network::{accuracy, InitSpec, Mlp};
use crate::optim::{dlr_rates, max_neuron_norm, Optimizer, OptimizerConfig};

/// Settings shared by every trial of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub batch_size: usize,
    pub accuracy_threshold: f64,
    pub max_epochs: f64,
    /// Minibatch updates between test-set evaluations.
    pub eval_interval: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            batch_size: 10,
            accuracy_threshold: 0.96,
            max_epochs: 30.0,
            eval_interval: 100,
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.accuracy_threshold) {
            return Err(invalid(format!(
                "accuracy threshold must lie in [0, 1], got {}",
                self.accuracy_threshold
            )));
        }
        if !(self.max_epochs >= 0.0 && self.max_epochs.is_finite()) {
            return Err(invalid(format!(
                "max_epochs must be finite and non-negative, got {}",
                self.max_epochs
            )));
        }
        if self.eval_interval == 0 {
            return Err(invalid("eval_interval must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub hidden_units: usize,
    pub optimizer: OptimizerConfig,
    #[serde(flatten)]
    pub protocol: Protocol,
    pub seed: u64,
}

impl TrialConfig {
    pub fn new(protocol: Protocol, hidden_units: usize, optimizer: OptimizerConfig, seed: u64) -> Self {
        Self {
            hidden_units,
            optimizer,
            protocol,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_units == 0 {
            return Err(invalid("hidden_units must be at least 1"));
        }
        self.protocol.validate()?;
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub config: TrialConfig,
    /// Test accuracy at every evaluation checkpoint.
    pub curve: Vec<CurvePoint>,
    /// First checkpoint time with accuracy at or above the threshold.
    pub epochs_to_threshold: Option<f64>,
    /// Test accuracy of the weights the trial stopped with.
    pub final_accuracy: f64,
    pub updates: u64,
    /// Mean per-layer rate traces; DLR trials only.
    pub traces: Option<[RateTrace; 2]>,
    pub weights: Option<Mlp>,
}

impl TrialRecord {
    pub fn reached(&self) -> bool {
        self.epochs_to_threshold.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrainOptions {
    pub keep_weights: bool,
}

fn gather(data: &Dataset, batch: &[usize], x: &mut Array2<f64>, y: &mut Array2<f64>) {
    if x.nrows() != batch.len() {
        *x = Array2::zeros((batch.len(), data.input_dim()));
        *y = Array2::zeros((batch.len(), data.targets.ncols()));
    }
    for (r, &n) in batch.iter().enumerate() {
        x.row_mut(r).assign(&data.images.pixels.row(n));
        y.row_mut(r).assign(&data.targets.row(n));
    }
}

/// Seeded minibatch training until the test accuracy reaches the threshold
/// or the epoch budget runs out.
///
/// Time is counted in epochs of training samples seen. The weights are
/// initialized from `seed` and each epoch's visiting order comes from its own
/// stream of the same seed.
pub fn train_to_threshold(config: &TrialConfig, data: &Splits, opts: TrainOptions) -> Result<TrialRecord> {
    config.validate()?;
    let train = &data.train;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if train.input_dim() != data.test.input_dim() {
        return Err(invalid("train and test images differ in size"));
    }
    let p = config.protocol;
    let mut net = Mlp::init(
        train.input_dim(),
        config.hidden_units,
        train.targets.ncols(),
        &InitSpec::new(config.seed),
    )?;
    if let OptimizerConfig::Scheduled { layers } = &config.optimizer {
        for layer in layers {
            layer.validate_over(p.max_epochs)?;
        }
    }
    let mut optimizer = Optimizer::new(&config.optimizer, &net)?;

    let mut traces = match &config.optimizer {
        OptimizerConfig::Dlr(dlr) => {
            let max_norm = max_neuron_norm(&net, dlr.mode);
            if dlr.alpha <= max_norm {
                log::warn!(
                    "alpha = {} does not exceed the largest initial neuron norm {max_norm:.4}; \
                     rates will not start out nearly uniform",
                    dlr.alpha
                );
            }
            let mut l1 = RateTrace::new(1);
            let mut l2 = RateTrace::new(2);
            l1.record(0.0, &dlr_rates(&net.w1, dlr))?;
            l2.record(0.0, &dlr_rates(&net.w2, dlr))?;
            Some([l1, l2])
        }
        _ => None,
    };

    let n_train = train.len() as f64;
    let mut curve = Vec::new();
    let mut epochs_to_threshold = None;
    let mut seen: u64 = 0;
    let mut updates: u64 = 0;
    let mut x = Array2::zeros((0, 0));
    let mut y = Array2::zeros((0, 0));
    let mut last_rates = None;
    let mut evaluated_last = false;

    'epochs: for epoch in 0.. {
        let plan = BatchPlan::new(train.len(), p.batch_size, config.seed, epoch)?;
        for batch in plan.batches() {
            let t = seen as f64 / n_train;
            if t >= p.max_epochs {
                break 'epochs;
            }
            gather(train, batch, &mut x, &mut y);
            let info = optimizer.step(&mut net, t, |m: &Mlp| m.gradients(x.view(), y.view()))?;
            if info.rates.is_some() {
                last_rates = info.rates;
            }
            seen += batch.len() as u64;
            updates += 1;
            evaluated_last = false;

            if updates.is_multiple_of(p.eval_interval as u64) {
                let t = seen as f64 / n_train;
                let acc = accuracy(&net, &data.test)?;
                curve.push(CurvePoint { t, accuracy: acc });
                evaluated_last = true;
                if let (Some(traces), Some(rates)) = (traces.as_mut(), last_rates.as_ref()) {
                    traces[0].record(t, &rates[0])?;
                    traces[1].record(t, &rates[1])?;
                }
                if acc >= p.accuracy_threshold {
                    epochs_to_threshold = Some(t);
                    break 'epochs;
                }
            }
        }
    }

    let final_accuracy = match curve.last() {
        Some(point) if evaluated_last => point.accuracy,
        _ => accuracy(&net, &data.test)?,
    };
    log::info!(
        "{} h={} seed={}: epochs to threshold {:?}, final accuracy {}",
        config.optimizer.algorithm(),
        config.hidden_units,
        config.seed,
        epochs_to_threshold,
        final_accuracy
    );
    Ok(TrialRecord {
        config: *config,
        curve,
        epochs_to_threshold,
        final_accuracy,
        updates,
        traces,
        weights: opts.keep_weights.then_some(net),
    })
}
