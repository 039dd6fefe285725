//! Bias-free two-layer logistic network trained on mean squared error.
//!
//! Weight matrices are stored post-synaptic major: `w1[[i, j]]` connects
//! input `j` to hidden unit `i`, `w2[[k, i]]` connects hidden unit `i` to
//! output `k`. Batches are row-per-sample.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::data::{Dataset, NUM_CLASSES};
use crate::error::{invalid, Error, Result};
use crate::seeded_rng;

pub const MNIST_INPUTS: usize = 784;

/// Numerically stable logistic function.
#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// Uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    #[default]
    UniformFanIn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct InitSpec {
    pub scheme: InitScheme,
    pub seed: u64,
}

impl InitSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            scheme: InitScheme::UniformFanIn,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// hidden x input
    pub w1: Array2<f64>,
    /// output x hidden
    pub w2: Array2<f64>,
}

/// Intermediate quantities of one forward pass, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub z1: Array2<f64>,
    pub a1: Array2<f64>,
    pub z2: Array2<f64>,
    pub a2: Array2<f64>,
}

/// Batch-averaged cost derivatives with the same shapes as the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub g1: Array2<f64>,
    pub g2: Array2<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            g1: Array2::zeros(net.w1.raw_dim()),
            g2: Array2::zeros(net.w2.raw_dim()),
        }
    }
}

fn uniform_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let bound = 1.0 / (cols as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}

fn check_shape(context: &'static str, expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(Error::Shape {
            context,
            expected,
            got,
        });
    }
    Ok(())
}

impl Mlp {
    pub fn init(inputs: usize, hidden: usize, outputs: usize, spec: &InitSpec) -> Result<Self> {
        if hidden == 0 || inputs == 0 || outputs == 0 {
            return Err(invalid("layer widths must be at least 1"));
        }
        let mut rng = seeded_rng(spec.seed, 0);
        let w1 = uniform_matrix(hidden, inputs, &mut rng);
        let w2 = uniform_matrix(outputs, hidden, &mut rng);
        Ok(Self { w1, w2 })
    }

    /// 784 inputs, `hidden` logistic units, 10 outputs.
    pub fn init_mnist(hidden: usize, spec: &InitSpec) -> Result<Self> {
        Self::init(MNIST_INPUTS, hidden, NUM_CLASSES, spec)
    }

    pub fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Self {
        Self {
            w1: Array2::zeros((hidden, inputs)),
            w2: Array2::zeros((outputs, hidden)),
        }
    }

    pub fn from_weights(w1: Array2<f64>, w2: Array2<f64>) -> Result<Self> {
        if w2.ncols() != w1.nrows() {
            return Err(Error::Shape {
                context: "output weights",
                expected: (w2.nrows(), w1.nrows()),
                got: w2.dim(),
            });
        }
        Ok(Self { w1, w2 })
    }

    pub fn inputs(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.w2.nrows()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<ForwardTrace> {
        check_shape("forward input", (x.nrows(), self.inputs()), x.dim())?;
        let z1 = x.dot(&self.w1.t());
        let a1 = z1.mapv(logistic);
        let z2 = a1.dot(&self.w2.t());
        let a2 = z2.mapv(logistic);
        Ok(ForwardTrace { z1, a1, z2, a2 })
    }

    /// Output activations only.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_shape("predict input", (x.nrows(), self.inputs()), x.dim())?;
        let a1 = x.dot(&self.w1.t()).mapv_into(logistic);
        Ok(a1.dot(&self.w2.t()).mapv_into(logistic))
    }

    /// Gradients of the batch-mean of `(1/2)||a2 - y||^2`.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        x: ArrayView2<'_, f64>,
        y: ArrayView2<'_, f64>,
    ) -> Result<Gradients> {
        let batch = x.nrows();
        check_shape("backward input", (batch, self.inputs()), x.dim())?;
        check_shape("backward target", trace.a2.dim(), y.dim())?;
        check_shape("trace hidden", (batch, self.hidden()), trace.a1.dim())?;
        check_shape("trace output", (batch, self.outputs()), trace.a2.dim())?;
        if batch == 0 {
            return Err(Error::Empty("batch"));
        }
        let scale = 1.0 / batch as f64;

        let mut delta2 = &trace.a2 - &y;
        Zip::from(&mut delta2)
            .and(&trace.a2)
            .for_each(|d, &a| *d *= a * (1.0 - a));
        let mut delta1 = delta2.dot(&self.w2);
        Zip::from(&mut delta1)
            .and(&trace.a1)
            .for_each(|d, &a| *d *= a * (1.0 - a));

        let mut g2 = delta2.t().dot(&trace.a1);
        g2 *= scale;
        let mut g1 = delta1.t().dot(&x);
        g1 *= scale;
        Ok(Gradients { g1, g2 })
    }

    /// Forward and backward on one batch.
    pub fn gradients(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<Gradients> {
        let trace = self.forward(x)?;
        self.backward(&trace, x, y)
    }

    pub fn loss(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
        mse_loss(self.predict(x)?.view(), y)
    }
}

/// Batch mean of `(1/2) * sum_k (a2_k - y_k)^2`.
pub fn mse_loss(a2: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    check_shape("mse_loss", a2.dim(), y.dim())?;
    if a2.nrows() == 0 {
        return Err(Error::Empty("batch"));
    }
    let sum: f64 = Zip::from(&a2)
        .and(&y)
        .fold(0.0, |acc, &a, &t| acc + (a - t) * (a - t));
    Ok(0.5 * sum / a2.nrows() as f64)
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

const EVAL_CHUNK: usize = 1000;

/// Fraction of samples whose strongest output matches the label.
pub fn accuracy(net: &Mlp, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut correct = 0usize;
    for (chunk, x) in data
        .images
        .pixels
        .axis_chunks_iter(Axis(0), EVAL_CHUNK)
        .enumerate()
    {
        let out = net.predict(x)?;
        let labels = &data.labels.labels[chunk * EVAL_CHUNK..];
        correct += out
            .rows()
            .into_iter()
            .zip(labels)
            .filter(|(row, &l)| argmax(row.view()) == usize::from(l))
            .count();
    }
    Ok(correct as f64 / data.len() as f64)
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"DLRW";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes a checkpoint: magic `DLRW`, version, D, H, K (u32 LE), seed (u64 LE),
/// then `w1` and `w2` row-major as f64 LE.
pub fn write_checkpoint<W: Write>(net: &Mlp, seed: u64, mut dst: W) -> Result<()> {
    dst.write_all(CHECKPOINT_MAGIC)?;
    dst.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for n in [net.inputs(), net.hidden(), net.outputs()] {
        let n = u32::try_from(n).map_err(|_| Error::Checkpoint("dimension exceeds u32".into()))?;
        dst.write_all(&n.to_le_bytes())?;
    }
    dst.write_all(&seed.to_le_bytes())?;
    for &w in net.w1.iter().chain(net.w2.iter()) {
        dst.write_all(&w.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut src: R) -> Result<(Mlp, u64)> {
    let mut magic = [0u8; 4];
    src.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut word = [0u8; 4];
    let mut read_u32 = |src: &mut R| -> Result<usize> {
        src.read_exact(&mut word)?;
        Ok(u32::from_le_bytes(word) as usize)
    };
    let version = read_u32(&mut src)?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let (d, h, k) = (read_u32(&mut src)?, read_u32(&mut src)?, read_u32(&mut src)?);
    let mut seed = [0u8; 8];
    src.read_exact(&mut seed)?;
    let mut read_matrix = |rows: usize, cols: usize| -> Result<Array2<f64>> {
        let mut buf = vec![0u8; rows * cols * 8];
        src.read_exact(&mut buf)?;
        let vals = buf
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Array2::from_shape_vec((rows, cols), vals).expect("length matches header"))
    };
    let w1 = read_matrix(h, d)?;
    let w2 = read_matrix(k, h)?;
    Ok((Mlp { w1, w2 }, u64::from_le_bytes(seed)))
}
