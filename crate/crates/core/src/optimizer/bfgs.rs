//! Dense BFGS on the inverse Hessian with Armijo backtracking.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop once the max-norm of the gradient falls below this.
    pub gradient_tolerance: f64,
    /// Stop once the relative objective change and the step both stall below this.
    pub step_tolerance: f64,
    /// Largest coordinate move per trial step.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            step_tolerance: 1e-10,
            max_step: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective at the start and after every accepted step.
    pub history: Vec<f64>,
}

impl Minimum {
    pub fn gradient_norm(&self) -> f64 {
        max_abs(&self.gradient)
    }
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Minimises `f`, which returns the objective and its gradient or `None`
/// where the objective is not finite. Returns `None` if `x0` itself is not
/// finite.
///
/// Each accepted step satisfies the Armijo condition, so the objective never
/// increases across iterations.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let k = x0.len();
    let (mut fx, g0) = f(x0)?;
    let mut x = DVector::from_column_slice(x0);
    let mut g = DVector::from_vec(g0);
    let mut hinv = DMatrix::<f64>::identity(k, k);
    let mut fresh = true;
    let mut stalls = 0;
    let mut iterations = 0;
    let mut history = vec![fx];

    while iterations < opts.max_iterations {
        if g.amax() < opts.gradient_tolerance {
            break;
        }
        iterations += 1;

        let mut d = -(&hinv * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            hinv.fill_with_identity();
            fresh = true;
            d = -g.clone();
            slope = g.dot(&d);
        }
        let dmax = d.amax();
        if dmax > opts.max_step {
            d *= opts.max_step / dmax;
            slope = g.dot(&d);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &x + &d * step;
            if let Some((ft, gt)) = f(trial.as_slice()) {
                if ft <= fx + ARMIJO_C1 * step * slope {
                    accepted = Some((trial, ft, DVector::from_vec(gt)));
                    break;
                }
                // safeguarded quadratic interpolation
                let denom = 2.0 * (ft - fx - slope * step);
                let next = if denom > 0.0 { -slope * step * step / denom } else { 0.5 * step };
                step = next.clamp(0.1 * step, 0.5 * step);
            } else {
                step *= 0.25;
            }
        }

        let Some((x_new, f_new, g_new)) = accepted else {
            if fresh {
                break;
            }
            hinv.fill_with_identity();
            fresh = true;
            continue;
        };

        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                hinv *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (s hy' + hy s') + (rho^2 yhy + rho) s s'
            hinv -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho);
            fresh = false;
        }

        let rel_change = (fx - f_new).abs() / fx.abs().max(1.0);
        let rel_step = s.amax() / x.amax().max(1.0);
        x = x_new;
        g = g_new;
        fx = f_new;
        history.push(fx);
        if rel_change < opts.step_tolerance && rel_step < opts.step_tolerance.sqrt() {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
        } else {
            stalls = 0;
        }
    }

    let converged = g.amax() < opts.gradient_tolerance;
    Some(Minimum {
        x: x.as_slice().to_vec(),
        value: fx,
        gradient: g.as_slice().to_vec(),
        iterations,
        converged,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ];
        Some((f, g))
    }

    #[test]
    fn solves_rosenbrock() {
        let m = minimize(rosenbrock, &[-1.2, 1.0], &BfgsOptions::default()).unwrap();
        assert!(m.converged, "{m:?}");
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn objective_never_increases() {
        for x0 in [[0.5, -2.0], [-1.2, 1.0], [3.0, 3.0]] {
            let m = minimize(rosenbrock, &x0, &BfgsOptions::default()).unwrap();
            assert!(m.history.windows(2).all(|w| w[1] <= w[0]));
            assert_eq!(*m.history.last().unwrap(), m.value);
        }
    }

    #[test]
    fn infeasible_region_is_backtracked() {
        // objective undefined for x <= 0
        let f = |x: &[f64]| {
            if x[0] <= 0.0 {
                None
            } else {
                Some((x[0] - x[0].ln(), vec![1.0 - 1.0 / x[0]]))
            }
        };
        let m = minimize(f, &[0.05], &BfgsOptions::default()).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6);
        assert!(minimize(f, &[-1.0], &BfgsOptions::default()).is_none());
    }

    #[test]
    fn quadratic_converges_in_few_iterations() {
        let f = |x: &[f64]| {
            let v = 3.0 * x[0] * x[0] + x[0] * x[1] + 2.0 * x[1] * x[1] - x[0];
            Some((v, vec![6.0 * x[0] + x[1] - 1.0, x[0] + 4.0 * x[1]]))
        };
        let m = minimize(f, &[1.0, 1.0], &BfgsOptions::default()).unwrap();
        assert!(m.converged);
        assert!(m.iterations < 15, "{}", m.iterations);
    }
}
