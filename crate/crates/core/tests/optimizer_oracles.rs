//! Scalar traces on f(w) = w^2 (gradient 2w) checked against values worked
//! out by hand or in extended precision.

use dlrlab_core::network::{Gradients, Mlp};
use dlrlab_core::optim::{adam_step, nesterov_step, sgd_step, AdamState, MomentumState};
use dlrlab_core::Result;
use ndarray::{array, Array2};

fn scalar_net(w: f64) -> Mlp {
    Mlp::from_weights(array![[w]], array![[0.0]]).unwrap()
}

fn quadratic_grad(net: &Mlp) -> Result<Gradients> {
    Ok(Gradients {
        g1: net.w1.mapv(|w| 2.0 * w),
        g2: Array2::zeros(net.w2.raw_dim()),
    })
}

#[test]
fn nesterov_two_steps() {
    // eta 0.05, mu 0.9 on gradient 2w from w = 1:
    // step 1: lookahead 1, g 2, v -0.1, w 0.9
    // step 2: lookahead 0.81, g 1.62, v -0.09 - 0.081 = -0.171, w 0.729
    let mut net = scalar_net(1.0);
    let mut state = MomentumState::new(&net, 0.05, 0.9);
    nesterov_step(&mut state, &mut net, quadratic_grad).unwrap();
    assert!((net.w1[[0, 0]] - 0.9).abs() < 1e-12);
    assert!((state.velocity[0][[0, 0]] + 0.1).abs() < 1e-12);
    nesterov_step(&mut state, &mut net, quadratic_grad).unwrap();
    assert!((net.w1[[0, 0]] - 0.729).abs() < 1e-12);
    assert!((state.velocity[0][[0, 0]] + 0.171).abs() < 1e-12);
}

#[test]
fn adam_two_steps() {
    let mut net = scalar_net(1.0);
    let mut state = AdamState::new(&net, 0.1, 0.9, 0.999, 1e-8);
    let g = quadratic_grad(&net).unwrap();
    adam_step(&mut state, &mut net, &g).unwrap();
    assert!((net.w1[[0, 0]] - 0.900_000_000_499_999_997_5).abs() < 1e-12);
    assert!((state.m[0][[0, 0]] - 0.2).abs() < 1e-12);
    assert!((state.v[0][[0, 0]] - 0.004).abs() < 1e-12);
    let g = quadratic_grad(&net).unwrap();
    adam_step(&mut state, &mut net, &g).unwrap();
    assert!((net.w1[[0, 0]] - 0.800_412_228_691_792_145_2).abs() < 1e-12);
    assert!((state.m[0][[0, 0]] - 0.360_000_000_099_999_999_5).abs() < 1e-12);
    assert!((state.v[0][[0, 0]] - 0.007_236_000_003_599_999_98).abs() < 1e-12);
}

#[test]
fn nesterov_without_momentum_is_sgd() {
    let start = Mlp::from_weights(array![[0.3, -1.2], [2.0, 0.7]], array![[0.5, -0.25]]).unwrap();
    let x = array![[0.2, 0.9], [1.0, 0.0]];
    let y = array![[1.0], [0.0]];
    let grad = |m: &Mlp| m.gradients(x.view(), y.view());

    let mut nesterov = start.clone();
    let mut state = MomentumState::new(&nesterov, 0.7, 0.0);
    let mut sgd = start;
    for _ in 0..25 {
        nesterov_step(&mut state, &mut nesterov, grad).unwrap();
        let g = grad(&sgd).unwrap();
        sgd_step(&mut sgd, &g, 0.7).unwrap();
    }
    assert_eq!(nesterov, sgd);
}

#[test]
fn adam_first_step_is_alpha_times_sign() {
    let alpha = 1e-3;
    let eps = 1e-8;
    for &g in &[3.0, -0.5, 1e-4, -2e-6, 40.0] {
        let mut net = scalar_net(0.0);
        let mut state = AdamState::new(&net, alpha, 0.9, 0.999, eps);
        let grads = Gradients {
            g1: array![[g]],
            g2: array![[0.0]],
        };
        adam_step(&mut state, &mut net, &grads).unwrap();
        let step = -net.w1[[0, 0]];
        let expected = alpha * g.signum();
        let rel = (step - expected).abs() / alpha;
        // The bound is tight to first order; allow rounding of the subtraction.
        assert!(rel <= (eps / g).abs() + 4.0 * f64::EPSILON, "g {g}: step {step}, relative error {rel:e}");
    }
}
