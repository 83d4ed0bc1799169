//! Maximum-likelihood fitting over the free coefficients of a [`ModelSpec`].
//!
//! Quasi-Newton (BFGS) from several seeded starts, followed by a few
//! safeguarded Newton steps on the observed information to tighten the
//! gradient. The best start by log-likelihood wins.

pub mod bfgs;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Block, Error, Result};
use crate::likelihood::{Likelihood, ObservedInformation};
use crate::model::{coef_key, ModelSpec, RegressionCoefficients, SurvivalDataset};

use bfgs::{max_abs, BfgsOptions};

/// `nu` intercepts beyond this are reported as drifting toward the Gompertz limit.
pub const GOMPERTZ_BOUNDARY_NU: f64 = 15.0;

const START_SD: f64 = 0.5;
const POLISH_STEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Max-norm of the score required for convergence.
    pub gradient_tolerance: f64,
    /// Relative log-likelihood change treated as a stall.
    pub step_tolerance: f64,
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            step_tolerance: 1e-10,
            n_starts: 5,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::Config {
                key: format!("optimizer.{key}"),
                msg: msg.into(),
            })
        };
        if !(self.gradient_tolerance > 0.0) {
            return bad("gradient_tolerance", "must be positive");
        }
        if !(self.step_tolerance > 0.0) {
            return bad("step_tolerance", "must be positive");
        }
        if self.n_starts == 0 {
            return bad("n_starts", "must be at least 1");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations", "must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub coefs: RegressionCoefficients,
    /// Free-parameter vector, in [`ModelSpec::free_entries`] order.
    pub estimate: Vec<f64>,
    pub loglik: f64,
    pub information: Option<DMatrix<f64>>,
    /// Inverse observed information over the free coefficients.
    pub covariance: Option<DMatrix<f64>>,
    pub converged: bool,
    pub n_iter: usize,
    pub gradient_max: f64,
    pub condition_warning: Option<String>,
    pub warnings: Vec<String>,
    pub aic: f64,
    pub bic: f64,
    pub n_obs: usize,
    pub n_events: usize,
    pub data_fingerprint: u64,
}

impl FitResult {
    pub fn dim(&self) -> usize {
        self.estimate.len()
    }

    pub fn free_names(&self) -> Vec<String> {
        self.spec.free_names()
    }

    /// Position of a free coefficient in the estimate vector.
    pub fn position(&self, b: Block, j: usize) -> Option<usize> {
        self.spec.free_entries().iter().position(|&e| e == (b, j))
    }

    pub fn coef(&self, b: Block, j: usize) -> f64 {
        self.coefs.get(b, j)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let names = self.free_names();
        let se: Option<Vec<f64>> = self
            .covariance
            .as_ref()
            .map(|c| (0..c.nrows()).map(|i| c[(i, i)].max(0.0).sqrt()).collect());
        let coefficients: Vec<serde_json::Value> = names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                serde_json::json!({
                    "name": n,
                    "estimate": self.estimate[i],
                    "se": se.as_ref().map(|s| s[i]),
                })
            })
            .collect();
        let fixed: BTreeMap<String, f64> = self
            .spec
            .fixed()
            .iter()
            .map(|(&(b, j), &v)| (coef_key(b, j), v))
            .collect();
        serde_json::json!({
            "model": self.spec.to_string(),
            "covariates": self.spec.covariate_names(),
            "n": self.n_obs,
            "events": self.n_events,
            "dim": self.dim(),
            "loglik": self.loglik,
            "aic": self.aic,
            "bic": self.bic,
            "converged": self.converged,
            "iterations": self.n_iter,
            "gradient_max": self.gradient_max,
            "coefficients": coefficients,
            "fixed": fixed,
            "all_coefficients": self.coefs,
            "covariance": self.covariance.as_ref().map(|c| {
                (0..c.nrows()).map(|i| c.row(i).iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>()
            }),
            "condition_warning": self.condition_warning,
            "warnings": self.warnings,
        })
    }
}

/// First start: zeros with `alpha0 = 0`, `nu0 = ln 2` (Weibull). Fixed entries
/// keep their values.
pub fn initial_point(spec: &ModelSpec) -> Vec<f64> {
    spec.free_entries()
        .into_iter()
        .map(|(b, j)| if b == Block::Nu && j == 0 { 2f64.ln() } else { 0.0 })
        .collect()
}

struct StartOutcome {
    x: Vec<f64>,
    loglik: f64,
    iterations: usize,
}

fn run_start(lik: &Likelihood<'_>, x0: &[f64], config: &OptimizerConfig) -> Option<StartOutcome> {
    let opts = BfgsOptions {
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
        step_tolerance: config.step_tolerance,
        ..BfgsOptions::default()
    };
    let m = bfgs::minimize(
        |x| {
            lik.value_and_score(x)
                .ok()
                .map(|(v, g)| (-v, g.into_iter().map(|gi| -gi).collect()))
        },
        x0,
        &opts,
    )?;
    Some(StartOutcome {
        x: m.x,
        loglik: -m.value,
        iterations: m.iterations,
    })
}

/// Newton steps with the observed information, halving on any decrease.
fn polish(lik: &Likelihood<'_>, mut x: Vec<f64>, mut loglik: f64, tol: f64) -> (Vec<f64>, f64) {
    for _ in 0..POLISH_STEPS {
        let Ok((_, g)) = lik.value_and_score(&x) else { break };
        let g_max = max_abs(&g);
        if g_max < tol {
            break;
        }
        // near the optimum the gain is below rounding of the sum
        let slack = 1e-12 * loglik.abs().max(1.0);
        let Ok(info) = lik.observed_information(&x) else { break };
        let Some(chol) = info.matrix.clone().cholesky() else { break };
        let dir = chol.solve(&DVector::from_vec(g));
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, d)| a + step * d).collect();
            if let Ok((v, gt)) = lik.value_and_score(&trial) {
                if v >= loglik || (v >= loglik - slack && max_abs(&gt) < g_max) {
                    x = trial;
                    loglik = v;
                    improved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (x, loglik)
}

/// Maximises the log-likelihood of `spec` on `data`.
///
/// Deterministic given `config.seed`: start `k` draws its perturbation from a
/// ChaCha8 stream seeded with `seed ^ k`.
pub fn fit(data: &SurvivalDataset, spec: &ModelSpec, config: &OptimizerConfig) -> Result<FitResult> {
    config.validate()?;
    let lik = Likelihood::new(data, spec)?;
    let base = initial_point(spec);

    let mut best: Option<StartOutcome> = None;
    for k in 0..config.n_starts {
        let x0 = if k == 0 {
            base.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ k as u64);
            let normal = Normal::new(0.0, START_SD).expect("positive sd");
            base.iter().map(|b| b + normal.sample(&mut rng)).collect()
        };
        if let Some(out) = run_start(&lik, &x0, config) {
            match &best {
                Some(b) if out.loglik <= b.loglik => {}
                _ => best = Some(out),
            }
        }
    }
    let best = best.ok_or(Error::NoFiniteStart)?;
    let (estimate, loglik) = polish(&lik, best.x, best.loglik, config.gradient_tolerance);
    finish(&lik, data, spec, estimate, loglik, best.iterations, config)
}

fn finish(
    lik: &Likelihood<'_>,
    data: &SurvivalDataset,
    spec: &ModelSpec,
    estimate: Vec<f64>,
    loglik: f64,
    n_iter: usize,
    config: &OptimizerConfig,
) -> Result<FitResult> {
    let ws = lik.workspace(&estimate)?;
    let gradient_max = max_abs(&ws.score);
    let converged = gradient_max < config.gradient_tolerance;
    let k = estimate.len();

    let info: Option<ObservedInformation> = if k == 0 {
        Some(ObservedInformation {
            matrix: DMatrix::zeros(0, 0),
            positive_definite: true,
        })
    } else {
        lik.observed_information(&estimate).ok()
    };
    let covariance = info.as_ref().and_then(|i| i.covariance());
    let condition_warning = match (&info, &covariance) {
        (_, Some(_)) => None,
        (Some(_), None) => Some(
            "observed information is not positive definite; the likelihood is flat or the fit is on a boundary"
                .to_string(),
        ),
        (None, None) => Some("observed information could not be evaluated".to_string()),
    };

    let mut warnings = spec.warnings();
    if ws.coefs.nu[0] > GOMPERTZ_BOUNDARY_NU {
        warnings.push(format!(
            "Gompertz-boundary: nu0 = {:.2} exceeds {GOMPERTZ_BOUNDARY_NU}; kappa is effectively infinite",
            ws.coefs.nu[0]
        ));
    }
    if !converged {
        warnings.push(format!(
            "not converged: max |score| = {gradient_max:.3e} after {n_iter} iterations"
        ));
    }

    let n = data.len();
    Ok(FitResult {
        spec: spec.clone(),
        coefs: ws.coefs,
        estimate,
        loglik,
        information: info.map(|i| i.matrix),
        covariance,
        converged,
        n_iter,
        gradient_max,
        condition_warning,
        warnings,
        aic: -2.0 * loglik + 2.0 * k as f64,
        bic: -2.0 * loglik + (n as f64).ln() * k as f64,
        n_obs: n,
        n_events: data.n_events(),
        data_fingerprint: data.fingerprint(),
    })
}

/// Fits `spec` with additional coefficients frozen at the given values.
pub fn profile_refit(
    data: &SurvivalDataset,
    spec: &ModelSpec,
    config: &OptimizerConfig,
    fixed: &BTreeMap<(Block, usize), f64>,
) -> Result<FitResult> {
    let mut s = spec.clone();
    for (&(b, j), &v) in fixed {
        s = s.fix(b, j, v)?;
    }
    fit(data, &s, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::Exp1;

    fn exponential_sample(n: usize, seed: u64) -> SurvivalDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let times: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        SurvivalDataset::new(times, vec![true; n], vec![], vec![]).unwrap()
    }

    fn exponential_spec() -> ModelSpec {
        ModelSpec::parse("M(beta)", vec![], false)
            .unwrap()
            .fix_key("alpha0", 0.0)
            .unwrap()
            .fix_key("nu0", 2f64.ln())
            .unwrap()
    }

    #[test]
    fn exponential_rate_mle() {
        let data = exponential_sample(1000, 7);
        let f = fit(&data, &exponential_spec(), &OptimizerConfig::default()).unwrap();
        assert!(f.converged);
        let mle = (data.len() as f64 / data.times().iter().sum::<f64>()).ln();
        assert!((f.coefs.beta[0] - mle).abs() < 1e-8);
        assert!(f.coefs.beta[0].abs() < 0.1);
        // exponential information at the MLE is n
        let info = f.information.as_ref().unwrap()[(0, 0)];
        assert!((info - 1000.0).abs() / 1000.0 < 1e-5, "{info}");
        assert_eq!(f.dim(), 1);
        assert!((f.aic - (-2.0 * f.loglik + 2.0)).abs() < 1e-12);
        assert!((f.bic - (-2.0 * f.loglik + 1000f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn freezing_everything_evaluates_loglik() {
        let data = exponential_sample(20, 1);
        let spec = exponential_spec().fix_key("beta0", 0.0).unwrap();
        let f = fit(&data, &spec, &OptimizerConfig::default()).unwrap();
        assert_eq!(f.dim(), 0);
        assert!(f.converged);
        let sum: f64 = data.times().iter().sum();
        assert!((f.loglik + sum).abs() < 1e-12);
    }

    #[test]
    fn fit_is_deterministic() {
        let data = exponential_sample(200, 3);
        let spec = ModelSpec::parse("M(beta)", vec![], false).unwrap();
        let cfg = OptimizerConfig {
            seed: 99,
            ..Default::default()
        };
        let a = fit(&data, &spec, &cfg).unwrap();
        let b = fit(&data, &spec, &cfg).unwrap();
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.loglik.to_bits(), b.loglik.to_bits());
    }

    #[test]
    fn invalid_config_rejected() {
        let data = exponential_sample(10, 3);
        let cfg = OptimizerConfig {
            n_starts: 0,
            ..Default::default()
        };
        match fit(&data, &exponential_spec(), &cfg) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "optimizer.n_starts"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn profile_refit_honours_frozen_entries() {
        let data = exponential_sample(300, 5);
        let spec = ModelSpec::parse("M(tau)", vec![], false).unwrap();
        let mut frozen = BTreeMap::new();
        frozen.insert((Block::Beta, 0), 0.5);
        frozen.insert((Block::Nu, 0), 2f64.ln());
        let f = profile_refit(&data, &spec, &OptimizerConfig::default(), &frozen).unwrap();
        assert_eq!(f.coefs.beta[0], 0.5);
        assert_eq!(f.coefs.nu[0], 2f64.ln());
        assert_eq!(f.free_names(), ["tau0", "alpha0"]);
        assert!(f.converged);
    }
}
