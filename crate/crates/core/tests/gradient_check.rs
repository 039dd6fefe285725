use dlrlab_core::network::Mlp;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
/// Gradients smaller than this are compared on an absolute scale.
const FLOOR: f64 = 1e-4;
const TOLERANCE: f64 = 1e-5;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

struct Case {
    net: Mlp,
    x: Array2<f64>,
    y: Array2<f64>,
}

fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=8);
    let h = rng.random_range(1..=8);
    let k = rng.random_range(1..=8);
    let b = rng.random_range(1..=4);
    Case {
        net: Mlp::from_weights(
            random_matrix(&mut rng, h, d, -1.5, 1.5),
            random_matrix(&mut rng, k, h, -1.5, 1.5),
        )
        .unwrap(),
        x: random_matrix(&mut rng, b, d, 0.0, 1.0),
        y: random_matrix(&mut rng, b, k, 0.0, 1.0),
    }
}

/// Worst relative error between backprop and central differences, and the
/// number of entries compared.
fn check(case: &Case) -> (f64, usize) {
    let grads = case.net.gradients(case.x.view(), case.y.view()).unwrap();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for layer in 0..2 {
        let analytic = if layer == 0 { &grads.g1 } else { &grads.g2 };
        for (idx, &g) in analytic.indexed_iter() {
            let loss_at = |delta: f64| {
                let mut net = case.net.clone();
                let w = if layer == 0 { &mut net.w1 } else { &mut net.w2 };
                w[idx] += delta;
                net.loss(case.x.view(), case.y.view()).unwrap()
            };
            let numeric = (loss_at(STEP) - loss_at(-STEP)) / (2.0 * STEP);
            let err = (g - numeric).abs() / g.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(err);
            count += 1;
        }
    }
    (worst, count)
}

#[test]
fn backprop_matches_central_differences() {
    let mut entries = 0;
    for seed in 0..200 {
        let (worst, count) = check(&random_case(seed));
        assert!(worst < TOLERANCE, "seed {seed}: relative error {worst:e}");
        entries += count;
    }
    assert!(entries >= 1000, "only {entries} entries compared");
}

proptest! {
    #[test]
    fn backprop_matches_central_differences_prop(seed in any::<u64>()) {
        let (worst, _) = check(&random_case(seed));
        prop_assert!(worst < TOLERANCE, "relative error {:e}", worst);
    }
}
