//! Training library for bias-free logistic MLPs with per-synapse dynamic
//! learning rates (DLR), the SGD / Nesterov / Adam baselines, and the
//! benchmark experiments built on them.

pub mod data;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod network;
pub mod optim;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random stream `stream` of `seed`.
pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
