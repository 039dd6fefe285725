//! Nelder–Mead downhill simplex minimizer.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMead {
    pub max_iterations: usize,
    /// Largest vertex distance from the best vertex.
    pub x_tol: f64,
    /// Relative spread of objective values across the simplex.
    pub f_tol: f64,
    /// Absolute floor for the objective spread, for objectives that reach 0.
    pub f_abs: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            x_tol: 1e-9,
            f_tol: 1e-12,
            f_abs: 1e-24,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn nan_to_inf(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

fn along(from: &[f64], towards: &[f64], coeff: f64) -> Vec<f64> {
    from.iter()
        .zip(towards)
        .map(|(&c, &w)| c + coeff * (c - w))
        .collect()
}

impl NelderMead {
    /// Minimizes `f` from `x0`, building the initial simplex by offsetting
    /// each coordinate by the matching entry of `steps`.
    pub fn minimize<F>(&self, f: F, x0: &[f64], steps: &[f64]) -> Minimum
    where
        F: Fn(&[f64]) -> f64,
    {
        let n = x0.len();
        assert_eq!(steps.len(), n, "one step per coordinate");
        let eval = |x: &[f64]| nan_to_inf(f(x));

        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((x0.to_vec(), eval(x0)));
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += steps[i];
            let fx = eval(&x);
            simplex.push((x, fx));
        }

        let mut iterations = 0;
        let mut converged = false;
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            if self.has_converged(&simplex) {
                converged = true;
                break;
            }
            if iterations >= self.max_iterations {
                break;
            }
            iterations += 1;

            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, &xi) in centroid.iter_mut().zip(x) {
                    *c += xi / n as f64;
                }
            }
            let (best_f, second_worst_f) = (simplex[0].1, simplex[n - 1].1);
            let (worst_x, worst_f) = simplex[n].clone();

            let reflected = along(&centroid, &worst_x, REFLECT);
            let fr = eval(&reflected);
            if fr < best_f {
                let expanded = along(&centroid, &worst_x, EXPAND);
                let fe = eval(&expanded);
                simplex[n] = if fe < fr {
                    (expanded, fe)
                } else {
                    (reflected, fr)
                };
                continue;
            }
            if fr < second_worst_f {
                simplex[n] = (reflected, fr);
                continue;
            }
            let (contracted, fc) = if fr < worst_f {
                let x = along(&centroid, &worst_x, CONTRACT * REFLECT);
                let fx = eval(&x);
                (x, fx)
            } else {
                let x = along(&centroid, &worst_x, -CONTRACT);
                let fx = eval(&x);
                (x, fx)
            };
            if fc < worst_f.min(fr) {
                simplex[n] = (contracted, fc);
                continue;
            }
            let best = simplex[0].0.clone();
            for (x, fx) in simplex.iter_mut().skip(1) {
                for (xi, &bi) in x.iter_mut().zip(&best) {
                    *xi = bi + SHRINK * (*xi - bi);
                }
                *fx = eval(x);
            }
        }

        let (x, f) = simplex.swap_remove(0);
        Minimum {
            x,
            f,
            iterations,
            converged,
        }
    }

    fn has_converged(&self, sorted: &[(Vec<f64>, f64)]) -> bool {
        let (best, fb) = (&sorted[0].0, sorted[0].1);
        let fw = sorted[sorted.len() - 1].1;
        if !fw.is_finite() {
            return false;
        }
        let diameter = sorted[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(best)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        diameter <= self.x_tol && fw - fb <= self.f_tol * fb.abs() + self.f_abs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let m = NelderMead::default().minimize(
            |x| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2),
            &[0.0, 0.0],
            &[0.5, 0.5],
        );
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-8 && (m.x[1] + 2.0).abs() < 1e-8);
    }

    #[test]
    fn rosenbrock() {
        let m = NelderMead::default().minimize(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &[0.1, 0.1],
        );
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn iteration_cap_reports_unconverged() {
        let opts = NelderMead {
            max_iterations: 3,
            ..NelderMead::default()
        };
        let m = opts.minimize(|x| x[0].powi(2) + x[1].powi(2), &[5.0, 5.0], &[1.0, 1.0]);
        assert!(!m.converged);
        assert_eq!(m.iterations, 3);
    }

    #[test]
    fn nan_objective_is_avoided() {
        let m = NelderMead::default().minimize(
            |x| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.5).powi(2) + x[1].powi(2) },
            &[2.0, 1.0],
            &[0.5, 0.5],
        );
        assert!((m.x[0] - 0.5).abs() < 1e-6);
    }
}
