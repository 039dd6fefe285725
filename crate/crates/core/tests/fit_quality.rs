use dlrlab_core::fit::{constant_fit_sse, fit_schedule, fit_schedule_with, FitOptions, RateTrace};
use dlrlab_core::optim::ScheduleParams;
use proptest::prelude::*;

fn sampled(p: &ScheduleParams, n: usize, t_max: f64) -> RateTrace {
    let mut trace = RateTrace::new(1);
    for k in 0..n {
        let t = t_max * k as f64 / (n - 1) as f64;
        trace.push(t, p.eval(t)).unwrap();
    }
    trace
}

fn params(a: f64, b: f64, c: f64, d: f64) -> ScheduleParams {
    ScheduleParams { a, b, c, d }
}

fn assert_recovers(truth: &ScheduleParams, n: usize, t_max: f64) {
    let trace = sampled(truth, n, t_max);
    let fit = fit_schedule(&trace).unwrap();
    for &(t, y) in &trace.samples {
        let rel = (fit.params.eval(t) - y).abs() / y;
        assert!(rel <= 0.01, "{truth:?}: t {t}, true {y}, fitted {} ({rel:e})", fit.params.eval(t));
    }
    assert!(fit.sse <= constant_fit_sse(&trace.samples));
}

#[test]
fn refits_decaying_and_rising_schedules() {
    // Shapes resembling measured layer traces: fast early decay, slow drift
    // either way, and a sum that crosses from growth to decay.
    let cases = [
        (params(0.5, -1.0, -0.5, 0.05), 50, 2.0),
        (params(0.59, -0.46, -2.24, 3.27), 80, 1.3),
        (params(-6.5, 0.17, -0.033, 10.4), 80, 1.3),
        (params(1.57, -1.65, 0.18, 1.14), 100, 1.6),
        (params(2.0, -3.0, 0.0, 0.5), 60, 5.0),
        (params(1.0, 0.0, -1.0, 0.1), 60, 3.0),
    ];
    for (truth, n, t_max) in cases {
        assert_recovers(&truth, n, t_max);
    }
}

#[test]
fn constant_fallback_respects_horizon() {
    // A steep rise that any faithful fit extrapolates past zero only if it
    // decays; a long horizon must still yield an admissible schedule.
    let trace = sampled(&params(-1.0, 0.0, -3.0, 1.2), 40, 1.0);
    let opts = FitOptions {
        horizon: 50.0,
        ..FitOptions::default()
    };
    let fit = fit_schedule_with(&trace, &opts).unwrap();
    fit.params.validate_over(50.0).unwrap();
    assert!(fit.sse <= constant_fit_sse(&trace.samples));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refit_recovers_pointwise(
        a in 0.1f64..3.0,
        b in -2.0f64..0.0,
        c in -2.0f64..0.0,
        d in 0.05f64..3.0,
        t_max in 0.5f64..3.0,
    ) {
        let truth = params(a, b, c, d);
        let trace = sampled(&truth, 60, t_max);
        let fit = fit_schedule(&trace).unwrap();
        for &(t, y) in &trace.samples {
            let rel = (fit.params.eval(t) - y).abs() / y;
            prop_assert!(rel <= 0.01, "t {}: true {}, fitted {}", t, y, fit.params.eval(t));
        }
    }

    #[test]
    fn fit_never_worse_than_constant(
        values in prop::collection::vec(0.01f64..5.0, 8..40),
        horizon in 0.0f64..40.0,
    ) {
        let mut trace = RateTrace::new(2);
        for (k, &v) in values.iter().enumerate() {
            trace.push(k as f64 / 60.0, v).unwrap();
        }
        let opts = FitOptions { horizon, ..FitOptions::default() };
        let fit = fit_schedule_with(&trace, &opts).unwrap();
        prop_assert!(fit.sse <= constant_fit_sse(&trace.samples));
        prop_assert!(fit.params.validate_over(horizon.max(trace.last_t().unwrap())).is_ok());
    }
}
