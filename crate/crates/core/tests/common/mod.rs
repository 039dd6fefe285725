#![allow(dead_code)]

use dlrlab_core::data::{Dataset, ImageSet, LabelSet, Splits};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Byte-valued 4x4 images in which pixel `label` is lit and the rest is
/// faint noise, so a small network separates the classes quickly.
pub fn synthetic_set(count: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bytes = Vec::with_capacity(count * 16);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let label: u8 = rng.random_range(0..10);
        for p in 0..16u8 {
            bytes.push(if p == label { 255 } else { rng.random_range(0..20) });
        }
        labels.push(label);
    }
    let pixels = Array2::from_shape_vec((count, 16), bytes.into_iter().map(|b| f64::from(b) / 255.0).collect()).unwrap();
    Dataset::new(ImageSet { rows: 4, cols: 4, pixels }, LabelSet { labels }).unwrap()
}

pub fn synthetic_splits() -> Splits {
    Splits {
        train: synthetic_set(600, 1),
        test: synthetic_set(100, 2),
    }
}
