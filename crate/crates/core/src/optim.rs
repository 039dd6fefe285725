//! Weight-update rules behind one step interface.
//!
//! Per-matrix primitives (`sgd_update`, `dlr_update`, ...) act on a single
//! weight matrix; the `*_step` functions apply them to both layers of an
//! [`Mlp`]. [`Optimizer`] wraps everything for the trainer.
//!
//! DLR (dynamic learning rate) gives every synapse its own rate
//!
//! ```text
//! rate[i][j] = eta0 * (|w[i][j]| + alpha) / (norm + alpha)
//! ```
//!
//! where `norm` is the L2 norm of column `j` (pre-norm: all outgoing weights of
//! pre-synaptic neuron `j`) or of row `i` (post-norm: all incoming weights of
//! post-synaptic neuron `i`). The update is plain descent, `w -= rate * g`.
//! Rates depend only on the current weights; no state survives between steps.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::{Gradients, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Sgd,
    Nesterov,
    Adam,
    DlrPre,
    DlrPost,
    Scheduled,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Sgd,
        Algorithm::Nesterov,
        Algorithm::Adam,
        Algorithm::DlrPre,
        Algorithm::DlrPost,
        Algorithm::Scheduled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sgd => "sgd",
            Algorithm::Nesterov => "nesterov",
            Algorithm::Adam => "adam",
            Algorithm::DlrPre => "dlr-pre",
            Algorithm::DlrPost => "dlr-post",
            Algorithm::Scheduled => "scheduled",
        }
    }

    pub fn is_dlr(self) -> bool {
        matches!(self, Algorithm::DlrPre | Algorithm::DlrPost)
    }

    /// Parameter keys accepted by this algorithm.
    pub fn param_keys(self) -> &'static [&'static str] {
        match self {
            Algorithm::Sgd => &["eta"],
            Algorithm::Nesterov => &["eta", "mu"],
            Algorithm::Adam => &["adam_alpha", "beta1", "beta2", "epsilon"],
            Algorithm::DlrPre | Algorithm::DlrPost => &["alpha", "eta0"],
            Algorithm::Scheduled => &SCHEDULE_KEYS,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                invalid(format!(
                    "unknown algorithm `{s}` (expected sgd, nesterov, adam, dlr-pre, dlr-post or scheduled)"
                ))
            })
    }
}

const SCHEDULE_KEYS: [&str; 8] = [
    "schedule1_a",
    "schedule1_b",
    "schedule1_c",
    "schedule1_d",
    "schedule2_a",
    "schedule2_b",
    "schedule2_c",
    "schedule2_d",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    /// Column norm: outgoing weights of each pre-synaptic neuron.
    Pre,
    /// Row norm: incoming weights of each post-synaptic neuron.
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DlrConfig {
    pub eta0: f64,
    pub alpha: f64,
    pub mode: NormMode,
}

impl DlrConfig {
    pub fn new(eta0: f64, alpha: f64, mode: NormMode) -> Result<Self> {
        let cfg = Self { eta0, alpha, mode };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(invalid(format!("eta0 must be positive, got {}", self.eta0)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Per-synapse learning rates, shaped like the weight matrix they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix(pub Array2<f64>);

impl RateMatrix {
    pub fn mean(&self) -> f64 {
        self.0.mean().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub mu: f64,
    pub eta: f64,
    pub velocity: [Array2<f64>; 2],
}

impl MomentumState {
    pub fn new(net: &Mlp, eta: f64, mu: f64) -> Self {
        Self {
            mu,
            eta,
            velocity: [
                Array2::zeros(net.w1.raw_dim()),
                Array2::zeros(net.w2.raw_dim()),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub alpha_step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub m: [Array2<f64>; 2],
    pub v: [Array2<f64>; 2],
    pub t: u64,
}

impl AdamState {
    pub fn new(net: &Mlp, alpha_step: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros = || {
            [
                Array2::zeros(net.w1.raw_dim()),
                Array2::zeros(net.w2.raw_dim()),
            ]
        };
        Self {
            alpha_step,
            beta1,
            beta2,
            epsilon,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }
}

/// Coefficients of `a * exp(b * t^(1/3) + c * t) + d`, `t` in epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl ScheduleParams {
    pub fn constant(rate: f64) -> Self {
        Self {
            a: 0.0,
            b: 0.0,
            c: 0.0,
            d: rate,
        }
    }

    /// Raw curve value, without the positivity check.
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.a * (self.b * t.cbrt() + self.c * t).exp() + self.d
    }

    /// Checks positivity on a dense grid over `[0, horizon]`.
    pub fn validate_over(&self, horizon: f64) -> Result<()> {
        const POINTS: usize = 2048;
        let horizon = horizon.max(0.0);
        for n in 0..=POINTS {
            let t = horizon * n as f64 / POINTS as f64;
            scheduled_rate(t, self)?;
        }
        Ok(())
    }
}

fn check_same(context: &'static str, w: &Array2<f64>, g: &Array2<f64>) -> Result<()> {
    if w.dim() != g.dim() {
        return Err(Error::Shape {
            context,
            expected: w.dim(),
            got: g.dim(),
        });
    }
    Ok(())
}

fn check_grads(net: &Mlp, grads: &Gradients) -> Result<()> {
    check_same("layer-1 gradient", &net.w1, &grads.g1)?;
    check_same("layer-2 gradient", &net.w2, &grads.g2)
}

pub fn sgd_update(w: &mut Array2<f64>, g: &Array2<f64>, eta: f64) -> Result<()> {
    check_same("sgd", w, g)?;
    w.scaled_add(-eta, g);
    Ok(())
}

pub fn sgd_step(net: &mut Mlp, grads: &Gradients, eta: f64) -> Result<()> {
    check_grads(net, grads)?;
    net.w1.scaled_add(-eta, &grads.g1);
    net.w2.scaled_add(-eta, &grads.g2);
    Ok(())
}

/// Lookahead Nesterov momentum: the gradient is taken at `w + mu * velocity`.
pub fn nesterov_step<F>(state: &mut MomentumState, net: &mut Mlp, mut grad_fn: F) -> Result<()>
where
    F: FnMut(&Mlp) -> Result<Gradients>,
{
    let [v1, v2] = &state.velocity;
    if v1.dim() != net.w1.dim() || v2.dim() != net.w2.dim() {
        return Err(Error::Shape {
            context: "nesterov velocity",
            expected: net.w1.dim(),
            got: v1.dim(),
        });
    }
    let grads = if state.mu == 0.0 {
        grad_fn(net)?
    } else {
        let mut ahead = net.clone();
        ahead.w1.scaled_add(state.mu, v1);
        ahead.w2.scaled_add(state.mu, v2);
        grad_fn(&ahead)?
    };
    check_grads(net, &grads)?;
    let (mu, eta) = (state.mu, state.eta);
    for ((v, w), g) in state
        .velocity
        .iter_mut()
        .zip([&mut net.w1, &mut net.w2])
        .zip([&grads.g1, &grads.g2])
    {
        Zip::from(&mut *v)
            .and(g)
            .for_each(|v, &g| *v = mu * *v - eta * g);
        *w += &*v;
    }
    Ok(())
}

/// Adam with bias-corrected moments.
pub fn adam_step(state: &mut AdamState, net: &mut Mlp, grads: &Gradients) -> Result<()> {
    check_grads(net, grads)?;
    if state.m[0].dim() != net.w1.dim() || state.m[1].dim() != net.w2.dim() {
        return Err(Error::Shape {
            context: "adam moments",
            expected: net.w1.dim(),
            got: state.m[0].dim(),
        });
    }
    state.t += 1;
    let (b1, b2, eps, lr) = (state.beta1, state.beta2, state.epsilon, state.alpha_step);
    let c1 = 1.0 - b1.powf(state.t as f64);
    let c2 = 1.0 - b2.powf(state.t as f64);
    let layers = [&mut net.w1, &mut net.w2];
    for (((w, g), m), v) in layers
        .into_iter()
        .zip([&grads.g1, &grads.g2])
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        Zip::from(w).and(g).and(m).and(v).for_each(|w, &g, m, v| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        });
    }
    Ok(())
}

/// L2 norm per pre-synaptic neuron (columns) or per post-synaptic neuron (rows).
pub fn neuron_norms(w: &Array2<f64>, mode: NormMode) -> Array1<f64> {
    let axis = match mode {
        NormMode::Pre => Axis(0),
        NormMode::Post => Axis(1),
    };
    w.map_axis(axis, |lane| lane.dot(&lane).sqrt())
}

pub fn dlr_rates(w: &Array2<f64>, cfg: &DlrConfig) -> RateMatrix {
    let norms = neuron_norms(w, cfg.mode);
    let (eta0, alpha) = (cfg.eta0, cfg.alpha);
    let mut rates = Array2::zeros(w.raw_dim());
    Zip::indexed(&mut rates).and(w).for_each(|(i, j), r, &wij| {
        let norm = match cfg.mode {
            NormMode::Pre => norms[j],
            NormMode::Post => norms[i],
        };
        // Clamp absorbs rounding in the norm; mathematically |w_ij| <= norm.
        *r = eta0 * ((wij.abs() + alpha) / (norm + alpha)).min(1.0);
    });
    RateMatrix(rates)
}

/// One DLR update of a single matrix; returns the rates it used.
pub fn dlr_update(w: &mut Array2<f64>, g: &Array2<f64>, cfg: &DlrConfig) -> Result<RateMatrix> {
    check_same("dlr", w, g)?;
    let rates = dlr_rates(w, cfg);
    Zip::from(w)
        .and(g)
        .and(&rates.0)
        .for_each(|w, &g, &r| *w -= r * g);
    Ok(rates)
}

pub fn dlr_step(net: &mut Mlp, grads: &Gradients, cfg: &DlrConfig) -> Result<[RateMatrix; 2]> {
    check_grads(net, grads)?;
    Ok([
        dlr_update(&mut net.w1, &grads.g1, cfg)?,
        dlr_update(&mut net.w2, &grads.g2, cfg)?,
    ])
}

/// Largest neuron norm of either layer, to compare against `alpha`.
pub fn max_neuron_norm(net: &Mlp, mode: NormMode) -> f64 {
    [&net.w1, &net.w2]
        .into_iter()
        .flat_map(|w| neuron_norms(w, mode).to_vec())
        .fold(0.0, f64::max)
}

pub fn scheduled_rate(t: f64, params: &ScheduleParams) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(invalid(format!("schedule time must be non-negative, got {t}")));
    }
    let rate = params.eval(t);
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidSchedule { t, rate });
    }
    Ok(rate)
}

/// Uniform per-layer rate following each layer's schedule at time `t`.
pub fn scheduled_step(
    net: &mut Mlp,
    grads: &Gradients,
    t: f64,
    params: &[ScheduleParams; 2],
) -> Result<[f64; 2]> {
    check_grads(net, grads)?;
    let r1 = scheduled_rate(t, &params[0])?;
    let r2 = scheduled_rate(t, &params[1])?;
    net.w1.scaled_add(-r1, &grads.g1);
    net.w2.scaled_add(-r2, &grads.g2);
    Ok([r1, r2])
}

/// Optimizer selection plus parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case")]
pub enum OptimizerConfig {
    Sgd {
        eta: f64,
    },
    Nesterov {
        eta: f64,
        mu: f64,
    },
    Adam {
        alpha: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
    Dlr(DlrConfig),
    Scheduled {
        layers: [ScheduleParams; 2],
    },
}

impl OptimizerConfig {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            OptimizerConfig::Sgd { .. } => Algorithm::Sgd,
            OptimizerConfig::Nesterov { .. } => Algorithm::Nesterov,
            OptimizerConfig::Adam { .. } => Algorithm::Adam,
            OptimizerConfig::Dlr(c) => match c.mode {
                NormMode::Pre => Algorithm::DlrPre,
                NormMode::Post => Algorithm::DlrPost,
            },
            OptimizerConfig::Scheduled { .. } => Algorithm::Scheduled,
        }
    }

    /// Default value of a parameter key, if it has one.
    pub fn default_param(key: &str) -> Option<f64> {
        Some(match key {
            "eta" => 0.3,
            "mu" => 0.9,
            "adam_alpha" => 1e-3,
            "beta1" => 0.9,
            "beta2" => 0.999,
            "epsilon" => 1e-8,
            "eta0" => 1.0,
            "alpha" => 10.0,
            _ => return None,
        })
    }

    /// Builds a config from flat `key -> value` parameters; missing keys take defaults.
    pub fn from_params(algorithm: Algorithm, params: &BTreeMap<String, f64>) -> Result<Self> {
        for key in params.keys() {
            if !algorithm.param_keys().contains(&key.as_str()) {
                return Err(invalid(format!(
                    "parameter `{key}` does not apply to {algorithm}"
                )));
            }
        }
        let get = |key: &str| -> Result<f64> {
            params
                .get(key)
                .copied()
                .or_else(|| Self::default_param(key))
                .ok_or_else(|| invalid(format!("{algorithm} requires parameter `{key}`")))
        };
        let cfg = match algorithm {
            Algorithm::Sgd => OptimizerConfig::Sgd { eta: get("eta")? },
            Algorithm::Nesterov => OptimizerConfig::Nesterov {
                eta: get("eta")?,
                mu: get("mu")?,
            },
            Algorithm::Adam => OptimizerConfig::Adam {
                alpha: get("adam_alpha")?,
                beta1: get("beta1")?,
                beta2: get("beta2")?,
                epsilon: get("epsilon")?,
            },
            Algorithm::DlrPre | Algorithm::DlrPost => OptimizerConfig::Dlr(DlrConfig {
                eta0: get("eta0")?,
                alpha: get("alpha")?,
                mode: if algorithm == Algorithm::DlrPre {
                    NormMode::Pre
                } else {
                    NormMode::Post
                },
            }),
            Algorithm::Scheduled => {
                let layer = |n: usize| -> Result<ScheduleParams> {
                    Ok(ScheduleParams {
                        a: get(&format!("schedule{n}_a"))?,
                        b: get(&format!("schedule{n}_b"))?,
                        c: get(&format!("schedule{n}_c"))?,
                        d: get(&format!("schedule{n}_d"))?,
                    })
                };
                OptimizerConfig::Scheduled {
                    layers: [layer(1)?, layer(2)?],
                }
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Flat parameters, sorted by key.
    pub fn params(&self) -> BTreeMap<String, f64> {
        let pairs: Vec<(&str, f64)> = match *self {
            OptimizerConfig::Sgd { eta } => vec![("eta", eta)],
            OptimizerConfig::Nesterov { eta, mu } => vec![("eta", eta), ("mu", mu)],
            OptimizerConfig::Adam {
                alpha,
                beta1,
                beta2,
                epsilon,
            } => vec![
                ("adam_alpha", alpha),
                ("beta1", beta1),
                ("beta2", beta2),
                ("epsilon", epsilon),
            ],
            OptimizerConfig::Dlr(c) => vec![("alpha", c.alpha), ("eta0", c.eta0)],
            OptimizerConfig::Scheduled { layers } => {
                let vals = [
                    layers[0].a,
                    layers[0].b,
                    layers[0].c,
                    layers[0].d,
                    layers[1].a,
                    layers[1].b,
                    layers[1].c,
                    layers[1].d,
                ];
                SCHEDULE_KEYS.iter().copied().zip(vals).collect()
            }
        };
        pairs.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be positive, got {v}")))
            }
        };
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(invalid(format!("{name} must lie in [0, 1), got {v}")))
            }
        };
        match *self {
            OptimizerConfig::Sgd { eta } => positive("eta", eta),
            OptimizerConfig::Nesterov { eta, mu } => {
                positive("eta", eta)?;
                unit("mu", mu)
            }
            OptimizerConfig::Adam {
                alpha,
                beta1,
                beta2,
                epsilon,
            } => {
                positive("adam_alpha", alpha)?;
                unit("beta1", beta1)?;
                unit("beta2", beta2)?;
                positive("epsilon", epsilon)
            }
            OptimizerConfig::Dlr(c) => c.validate(),
            OptimizerConfig::Scheduled { layers } => {
                for p in layers {
                    if ![p.a, p.b, p.c, p.d].iter().all(|v| v.is_finite()) {
                        return Err(invalid("schedule parameters must be finite"));
                    }
                    scheduled_rate(0.0, &p)?;
                }
                Ok(())
            }
        }
    }
}

/// What a step reports back to the trainer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepInfo {
    /// Per-synapse rates used by a DLR step, one matrix per layer.
    pub rates: Option<[RateMatrix; 2]>,
}

/// Optimizer state owned by one trial.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd { eta: f64 },
    Nesterov(MomentumState),
    Adam(AdamState),
    Dlr(DlrConfig),
    Scheduled([ScheduleParams; 2]),
}

impl Optimizer {
    pub fn new(cfg: &OptimizerConfig, net: &Mlp) -> Result<Self> {
        cfg.validate()?;
        Ok(match *cfg {
            OptimizerConfig::Sgd { eta } => Optimizer::Sgd { eta },
            OptimizerConfig::Nesterov { eta, mu } => {
                Optimizer::Nesterov(MomentumState::new(net, eta, mu))
            }
            OptimizerConfig::Adam {
                alpha,
                beta1,
                beta2,
                epsilon,
            } => Optimizer::Adam(AdamState::new(net, alpha, beta1, beta2, epsilon)),
            OptimizerConfig::Dlr(c) => Optimizer::Dlr(c),
            OptimizerConfig::Scheduled { layers } => Optimizer::Scheduled(layers),
        })
    }

    /// Applies one update. `t` is the training time in epochs before this
    /// step; `grad_fn` evaluates the current minibatch gradient at a given
    /// weight point.
    pub fn step<F>(&mut self, net: &mut Mlp, t: f64, mut grad_fn: F) -> Result<StepInfo>
    where
        F: FnMut(&Mlp) -> Result<Gradients>,
    {
        match self {
            Optimizer::Sgd { eta } => sgd_step(net, &grad_fn(net)?, *eta)?,
            Optimizer::Nesterov(state) => nesterov_step(state, net, grad_fn)?,
            Optimizer::Adam(state) => {
                let g = grad_fn(net)?;
                adam_step(state, net, &g)?
            }
            Optimizer::Dlr(cfg) => {
                let g = grad_fn(net)?;
                let rates = dlr_step(net, &g, cfg)?;
                return Ok(StepInfo { rates: Some(rates) });
            }
            Optimizer::Scheduled(params) => {
                let g = grad_fn(net)?;
                scheduled_step(net, &g, t, params)?;
            }
        }
        Ok(StepInfo::default())
    }
}
