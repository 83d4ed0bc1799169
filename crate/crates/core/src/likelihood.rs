//! Censored log-likelihood, analytic score and observed information for the
//! four-block APGW regression model.
//!
//! With `z_i = (phi_i t_i)^gamma_i`,
//!
//! ```text
//! l = sum_i delta_i { log(lambda_i gamma_i z_i / t_i) + m0(z_i; k_i) } - lambda_i H0(z_i; k_i)
//! ```
//!
//! The score is accumulated per subject with respect to the four linear
//! predictors and then projected onto the free coefficients.

use nalgebra::DMatrix;

use crate::apgw::{baseline_cum_hazard, baseline_cum_hazard_dkappa};
use crate::error::{Block, Error, Result};
use crate::model::{ModelSpec, RegressionCoefficients, SurvivalDataset, LINK_LIMIT};

/// Per-subject derivatives of the log-likelihood contribution with respect to
/// the linear predictors `(x'tau, x'beta, x'alpha, x'nu)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectScore {
    pub tau: f64,
    pub beta: f64,
    pub alpha: f64,
    pub nu: f64,
}

impl SubjectScore {
    fn get(&self, b: Block) -> f64 {
        match b {
            Block::Tau => self.tau,
            Block::Beta => self.beta,
            Block::Alpha => self.alpha,
            Block::Nu => self.nu,
        }
    }
}

/// One subject's contribution given its linear predictors.
///
/// Returns `(l_i, z_i, U_i)`.
pub fn subject_contribution(eta: [f64; 4], log_t: f64, event: bool) -> (f64, f64, SubjectScore) {
    let [eta_tau, eta_beta, eta_alpha, eta_nu] = eta;
    let gamma = eta_alpha.exp();
    let lambda = eta_beta.exp();
    let s = eta_nu.exp();
    let kappa = eta_nu.exp_m1();
    let log_z = gamma * (eta_tau + log_t);
    let z = log_z.exp();
    let l = (z / s).ln_1p();
    let m0 = (kappa - 1.0) * l;
    let cum = baseline_cum_hazard(z, kappa);
    // z * m0'(z) and z * h0(z), both bounded forms
    let z_dm0 = (kappa - 1.0) * z / (s + z);
    let z_h0 = (log_z + m0).exp();
    let d = if event { 1.0 } else { 0.0 };

    let value = d * (eta_beta + eta_alpha + log_z - log_t + m0) - lambda * cum;
    let score = SubjectScore {
        tau: gamma * (d * (1.0 + z_dm0) - lambda * z_h0),
        beta: d - lambda * cum,
        alpha: d * (1.0 + log_z * (1.0 + z_dm0)) - lambda * z_h0 * log_z,
        nu: d * (s * l - z_dm0) - lambda * s * baseline_cum_hazard_dkappa(z, kappa),
    };
    (value, z, score)
}

/// Log-likelihood evaluator bound to one dataset and model spec.
#[derive(Debug, Clone)]
pub struct Likelihood<'a> {
    data: &'a SurvivalDataset,
    spec: &'a ModelSpec,
    log_t: Vec<f64>,
    free: Vec<(Block, usize)>,
}

/// Snapshot of a likelihood evaluation at one coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodWorkspace {
    pub coefs: RegressionCoefficients,
    /// `z_i = (phi_i t_i)^gamma_i`.
    pub z: Vec<f64>,
    pub loglik: f64,
    /// Gradient over the free coefficients.
    pub score: Vec<f64>,
}

/// Negative Hessian over the free coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedInformation {
    pub matrix: DMatrix<f64>,
    pub positive_definite: bool,
}

impl ObservedInformation {
    /// Inverse when positive definite.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        if !self.positive_definite {
            return None;
        }
        self.matrix.clone().cholesky().map(|c| c.inverse())
    }
}

impl<'a> Likelihood<'a> {
    pub fn new(data: &'a SurvivalDataset, spec: &'a ModelSpec) -> Result<Self> {
        if data.n_covariates() != spec.n_covariates() {
            return Err(Error::Dimension(format!(
                "dataset has {} covariates, model spec expects {}",
                data.n_covariates(),
                spec.n_covariates()
            )));
        }
        Ok(Self {
            data,
            spec,
            log_t: data.times().iter().map(|t| t.ln()).collect(),
            free: spec.free_entries(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    pub fn data(&self) -> &SurvivalDataset {
        self.data
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    fn eta(coefs: &RegressionCoefficients, x: &[f64]) -> Result<[f64; 4]> {
        let mut eta = [0.0; 4];
        for b in Block::ALL {
            let v = coefs.linear_predictor(b, x);
            if !v.is_finite() || v.abs() > LINK_LIMIT {
                return Err(Error::LinkOverflow { block: b, value: v });
            }
            eta[b.index()] = v;
        }
        Ok(eta)
    }

    fn accumulate(
        &self,
        coefs: &RegressionCoefficients,
        mut score: Option<&mut [f64]>,
        mut z_out: Option<&mut Vec<f64>>,
    ) -> Result<f64> {
        let mut total = 0.0;
        let events = self.data.events();
        for i in 0..self.data.len() {
            let x = self.data.row(i);
            let eta = Self::eta(coefs, x)?;
            let (v, z, u) = subject_contribution(eta, self.log_t[i], events[i]);
            if !v.is_finite() {
                return Err(Error::NonFiniteLikelihood { row: i });
            }
            total += v;
            if let Some(g) = score.as_deref_mut() {
                for (k, &(b, j)) in self.free.iter().enumerate() {
                    let xj = if j == 0 { 1.0 } else { x[j - 1] };
                    g[k] += u.get(b) * xj;
                }
            }
            if let Some(zs) = z_out.as_deref_mut() {
                zs.push(z);
            }
        }
        if let Some(g) = score {
            if let Some(k) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "score component {} is not finite",
                    crate::model::coef_key(self.free[k].0, self.free[k].1)
                )));
            }
        }
        Ok(total)
    }

    pub fn value_coefs(&self, coefs: &RegressionCoefficients) -> Result<f64> {
        self.accumulate(coefs, None, None)
    }

    pub fn value(&self, free: &[f64]) -> Result<f64> {
        self.value_coefs(&self.spec.unpack(free)?)
    }

    pub fn value_and_score(&self, free: &[f64]) -> Result<(f64, Vec<f64>)> {
        let coefs = self.spec.unpack(free)?;
        let mut g = vec![0.0; self.free.len()];
        let v = self.accumulate(&coefs, Some(&mut g), None)?;
        Ok((v, g))
    }

    pub fn workspace(&self, free: &[f64]) -> Result<LikelihoodWorkspace> {
        let coefs = self.spec.unpack(free)?;
        let mut g = vec![0.0; self.free.len()];
        let mut z = Vec::with_capacity(self.data.len());
        let loglik = self.accumulate(&coefs, Some(&mut g), Some(&mut z))?;
        Ok(LikelihoodWorkspace {
            coefs,
            z,
            loglik,
            score: g,
        })
    }

    /// Central differences of the analytic score, symmetrised.
    pub fn observed_information(&self, free: &[f64]) -> Result<ObservedInformation> {
        let k = free.len();
        let mut m = DMatrix::<f64>::zeros(k, k);
        let mut theta = free.to_vec();
        for j in 0..k {
            let h = 1e-5 * free[j].abs().max(1.0);
            theta[j] = free[j] + h;
            let (_, gp) = self.value_and_score(&theta)?;
            theta[j] = free[j] - h;
            let (_, gm) = self.value_and_score(&theta)?;
            theta[j] = free[j];
            for i in 0..k {
                m[(i, j)] = -(gp[i] - gm[i]) / (2.0 * h);
            }
        }
        let m = (&m + m.transpose()) * 0.5;
        let positive_definite = m.iter().all(|v| v.is_finite()) && m.clone().cholesky().is_some();
        Ok(ObservedInformation {
            matrix: m,
            positive_definite,
        })
    }
}

pub fn log_likelihood(coefs: &RegressionCoefficients, spec: &ModelSpec, data: &SurvivalDataset) -> Result<f64> {
    Likelihood::new(data, spec)?.value_coefs(coefs)
}

pub fn score(coefs: &RegressionCoefficients, spec: &ModelSpec, data: &SurvivalDataset) -> Result<Vec<f64>> {
    let lik = Likelihood::new(data, spec)?;
    Ok(lik.value_and_score(&spec.pack(coefs)?)?.1)
}

pub fn observed_information(
    coefs: &RegressionCoefficients,
    spec: &ModelSpec,
    data: &SurvivalDataset,
) -> Result<ObservedInformation> {
    let lik = Likelihood::new(data, spec)?;
    lik.observed_information(&spec.pack(coefs)?)
}

/// Eigenvalues of a symmetric information matrix, ascending.
pub fn information_eigenvalues(info: &ObservedInformation) -> Vec<f64> {
    let mut ev: Vec<f64> = info.matrix.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}
