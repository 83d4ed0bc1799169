//! Post-fit summaries: Wald intervals, ratio curves, cure proportions and
//! information-criterion tables.

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::apgw::baseline_inverse;
use crate::error::{Block, Error, Result};
use crate::model::coef_key;
use crate::optimizer::FitResult;

/// Two-sided standard-normal critical value for confidence `level`.
pub fn z_critical(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(n.inverse_cdf(0.5 + level / 2.0))
}

fn covariance(fit: &FitResult) -> Result<&nalgebra::DMatrix<f64>> {
    fit.covariance.as_ref().ok_or_else(|| {
        Error::NoCovariance(
            fit.condition_warning
                .clone()
                .unwrap_or_else(|| "fit carries no covariance".into()),
        )
    })
}

/// `sqrt(diag(covariance))`, in free-coefficient order.
pub fn standard_errors(fit: &FitResult) -> Result<Vec<f64>> {
    let c = covariance(fit)?;
    Ok((0..c.nrows()).map(|i| c[(i, i)].max(0.0).sqrt()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldInterval {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn wald_ci(fit: &FitResult, level: f64) -> Result<Vec<WaldInterval>> {
    let z = z_critical(level)?;
    let se = standard_errors(fit)?;
    Ok(fit
        .free_names()
        .into_iter()
        .zip(fit.estimate.iter().zip(se))
        .map(|(name, (&estimate, se))| WaldInterval {
            name,
            estimate,
            se,
            lower: estimate - z * se,
            upper: estimate + z * se,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Survivor,
    Hazard,
    HazardRatio,
    QuantileRatio,
}

impl std::str::FromStr for CurveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "survivor" => Ok(CurveKind::Survivor),
            "hazard" => Ok(CurveKind::Hazard),
            "hazard-ratio" | "hazard_ratio" => Ok(CurveKind::HazardRatio),
            "quantile-ratio" | "quantile_ratio" => Ok(CurveKind::QuantileRatio),
            other => Err(Error::Spec(format!(
                "unknown curve kind `{other}` (survivor, hazard, hazard-ratio, quantile-ratio)"
            ))),
        }
    }
}

/// A curve to evaluate from a fitted model.
///
/// Ratio kinds compare the profile with covariate `covariate` set to 1
/// against the same profile with it set to 0; `grid` holds times, or
/// probabilities for [`CurveKind::QuantileRatio`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRequest {
    pub kind: CurveKind,
    pub profile: Vec<f64>,
    pub covariate: Option<usize>,
    pub grid: Vec<f64>,
}

impl CurveRequest {
    pub fn validate(&self, p: usize) -> Result<()> {
        if self.profile.len() != p {
            return Err(Error::Dimension(format!(
                "covariate profile has {} entries, model has {p} covariates",
                self.profile.len()
            )));
        }
        if self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("curve grid must be strictly increasing".into()));
        }
        match self.kind {
            CurveKind::HazardRatio | CurveKind::QuantileRatio => match self.covariate {
                Some(j) if j < p => Ok(()),
                Some(j) => Err(Error::Dimension(format!("covariate index {j} out of range for {p} covariates"))),
                None => Err(Error::Spec("ratio curves need a covariate index".into())),
            },
            _ => Ok(()),
        }
    }
}

pub fn evaluate_curve(fit: &FitResult, req: &CurveRequest) -> Result<Vec<f64>> {
    req.validate(fit.spec.n_covariates())?;
    match req.kind {
        CurveKind::Survivor | CurveKind::Hazard => {
            let q = fit.coefs.subject_params(&req.profile)?;
            req.grid
                .iter()
                .map(|&t| match req.kind {
                    CurveKind::Survivor => q.survivor(t),
                    _ => q.hazard(t),
                })
                .collect()
        }
        CurveKind::HazardRatio => hazard_ratio_curve(fit, req.covariate.unwrap_or(0), &req.profile, &req.grid),
        CurveKind::QuantileRatio => {
            quantile_ratio_curve(fit, req.covariate.unwrap_or(0), &req.profile, &req.grid)
        }
    }
}

fn switched(base: &[f64], j: usize, value: f64) -> Result<Vec<f64>> {
    if j >= base.len() {
        return Err(Error::Dimension(format!(
            "covariate index {j} out of range for a profile of length {}",
            base.len()
        )));
    }
    let mut x = base.to_vec();
    x[j] = value;
    Ok(x)
}

struct Predictors {
    tau: f64,
    beta: f64,
    alpha: f64,
    nu: f64,
}

fn predictors(fit: &FitResult, x: &[f64]) -> Result<Predictors> {
    fit.coefs.subject_params(x)?; // link validation
    let c = &fit.coefs;
    Ok(Predictors {
        tau: c.linear_predictor(Block::Tau, x),
        beta: c.linear_predictor(Block::Beta, x),
        alpha: c.linear_predictor(Block::Alpha, x),
        nu: c.linear_predictor(Block::Nu, x),
    })
}

/// `h(t | x_j = 1) / h(t | x_j = 0)`.
///
/// Closed form in log space:
/// `(beta_j + alpha_j) + log(z1/z0) + m0(z1; k1) - m0(z0; k0)` with
/// `z = (phi t)^gamma`. With `phi = 1` and a common `kappa` this is
/// `exp(beta_j + alpha_j) t^(gamma0 (e^alpha_j - 1)) g(t)`.
pub fn hazard_ratio_curve(fit: &FitResult, j: usize, base: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    let e0 = predictors(fit, &switched(base, j, 0.0)?)?;
    let e1 = predictors(fit, &switched(base, j, 1.0)?)?;
    grid.iter()
        .map(|&t| {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Domain(format!("curve grid point {t} is not positive")));
            }
            let lt = t.ln();
            let term = |e: &Predictors| {
                let gamma = e.alpha.exp();
                let log_z = gamma * (e.tau + lt);
                let kappa = e.nu.exp_m1();
                let m0 = (kappa - 1.0) * (log_z.exp() / e.nu.exp()).ln_1p();
                e.beta + e.alpha + log_z + m0
            };
            Ok((term(&e1) - term(&e0)).exp())
        })
        .collect()
}

/// `Q(u | x_j = 1) / Q(u | x_j = 0)`.
///
/// `Q(u | x) = exp(-x'tau) Q1(-log(1-u)/lambda; kappa)^(1/gamma)`, so with a
/// common `lambda` and `kappa` the ratio is `exp(-tau_j) Q1^(1/gamma1 - 1/gamma0)`.
pub fn quantile_ratio_curve(fit: &FitResult, j: usize, base: &[f64], u_grid: &[f64]) -> Result<Vec<f64>> {
    let x0 = switched(base, j, 0.0)?;
    let x1 = switched(base, j, 1.0)?;
    let e0 = predictors(fit, &x0)?;
    let e1 = predictors(fit, &x1)?;
    let p0 = fit.coefs.subject_params(&x0)?;
    let p1 = fit.coefs.subject_params(&x1)?;
    let log_q = |e: &Predictors, q: &crate::apgw::ApgwParams, u: f64| -> Result<f64> {
        let kappa = e.nu.exp_m1();
        let lambda = e.beta.exp();
        let target = -(-u).ln_1p() / lambda;
        if kappa < 0.0 && lambda * target >= q.cum_hazard_supremum() {
            return Err(Error::CurePlateau {
                u,
                max_u: -(-q.cum_hazard_supremum()).exp_m1(),
            });
        }
        Ok(-e.tau + baseline_inverse(target, kappa).ln() / e.alpha.exp())
    };
    u_grid
        .iter()
        .map(|&u| {
            if !(u > 0.0 && u < 1.0) {
                return Err(Error::Domain(format!("probability {u} outside (0, 1)")));
            }
            Ok((log_q(&e1, &p1, u)? - log_q(&e0, &p0, u)?).exp())
        })
        .collect()
}

/// Cure proportion for one covariate profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CureEstimate {
    pub profile: Vec<f64>,
    pub proportion: f64,
    pub lower: f64,
    pub upper: f64,
    /// Standard error of `log(-log p)`.
    pub se_cloglog: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CureDifference {
    /// `p(second profile) - p(first profile)`.
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CureReport {
    pub level: f64,
    pub estimates: Vec<CureEstimate>,
    pub difference: Option<CureDifference>,
}

/// `log(-log p)` for `p = exp(lambda (kappa+1)/kappa)` and its gradient over
/// the free coefficients.
fn cloglog_cure(fit: &FitResult, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let e = predictors(fit, x)?;
    if e.nu >= 0.0 {
        return Err(Error::NotCureModel { kappa: e.nu.exp_m1() });
    }
    // -log p = lambda s / (1 - s), s = e^nu
    let value = e.beta + e.nu - (-e.nu.exp_m1()).ln();
    let d_nu = 1.0 / (-e.nu.exp_m1());
    let grad = fit
        .spec
        .free_entries()
        .into_iter()
        .map(|(b, j)| {
            let xj = if j == 0 { 1.0 } else { x[j - 1] };
            match b {
                Block::Beta => xj,
                Block::Nu => d_nu * xj,
                _ => 0.0,
            }
        })
        .collect();
    Ok((value, grad))
}

/// Cure proportions with delta-method intervals formed on the
/// `log(-log p)` scale; with two profiles also the difference
/// `p1 - p0` and its Wald interval.
pub fn cure_report(fit: &FitResult, profiles: &[Vec<f64>], level: f64) -> Result<CureReport> {
    let z = z_critical(level)?;
    let cov = covariance(fit)?;
    let p = fit.spec.n_covariates();
    let mut estimates = Vec::with_capacity(profiles.len());
    let mut prob_grads = Vec::with_capacity(profiles.len());
    for x in profiles {
        if x.len() != p {
            return Err(Error::Dimension(format!(
                "cure profile has {} entries, model has {p} covariates",
                x.len()
            )));
        }
        let (c, grad) = cloglog_cure(fit, x)?;
        let g = DVector::from_vec(grad);
        let var = (g.transpose() * cov * &g)[(0, 0)].max(0.0);
        let se = var.sqrt();
        let prob = (-c.exp()).exp();
        estimates.push(CureEstimate {
            profile: x.clone(),
            proportion: prob,
            lower: (-(c + z * se).exp()).exp(),
            upper: (-(c - z * se).exp()).exp(),
            se_cloglog: se,
        });
        // dp/dtheta = p log p dc/dtheta
        prob_grads.push(g * (prob * prob.ln()));
    }
    let difference = if estimates.len() == 2 {
        let dg = &prob_grads[1] - &prob_grads[0];
        let se = (dg.transpose() * cov * &dg)[(0, 0)].max(0.0).sqrt();
        let est = estimates[1].proportion - estimates[0].proportion;
        Some(CureDifference {
            estimate: est,
            se,
            lower: est - z * se,
            upper: est + z * se,
        })
    } else {
        None
    };
    Ok(CureReport {
        level,
        estimates,
        difference,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    pub dim: usize,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub delta_aic: f64,
    pub delta_bic: f64,
}

/// Information-criterion comparison, deltas relative to the set minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTable {
    pub rows: Vec<ModelRow>,
}

impl ModelTable {
    pub fn best_aic(&self) -> &ModelRow {
        self.rows
            .iter()
            .min_by(|a, b| a.aic.total_cmp(&b.aic))
            .expect("model table is non-empty")
    }

    pub fn best_bic(&self) -> &ModelRow {
        self.rows
            .iter()
            .min_by(|a, b| a.bic.total_cmp(&b.bic))
            .expect("model table is non-empty")
    }

    /// Rows as fields, models as columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("field");
        for r in &self.rows {
            out.push(',');
            out.push_str(&r.model);
        }
        out.push('\n');
        let line = |name: &str, f: &dyn Fn(&ModelRow) -> String| {
            let cells: Vec<String> = self.rows.iter().map(f).collect();
            format!("{name},{}\n", cells.join(","))
        };
        out += &line("dim", &|r| r.dim.to_string());
        out += &line("loglik", &|r| format!("{:.4}", r.loglik));
        out += &line("delta_aic", &|r| format!("{:.4}", r.delta_aic));
        out += &line("delta_bic", &|r| format!("{:.4}", r.delta_bic));
        out
    }
}

impl fmt::Display for ModelTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<12}", "Model")?;
        for r in &self.rows {
            write!(f, "{:>18}", r.model)?;
        }
        writeln!(f)?;
        let mut line = |name: &str, cell: &dyn Fn(&ModelRow) -> String| -> fmt::Result {
            write!(f, "{name:<12}")?;
            for r in &self.rows {
                write!(f, "{:>18}", cell(r))?;
            }
            writeln!(f)
        };
        line("dim(theta)", &|r| r.dim.to_string())?;
        line("loglik", &|r| format!("{:.1}", r.loglik))?;
        line("Delta_AIC", &|r| format!("{:.1}", r.delta_aic))?;
        line("Delta_BIC", &|r| format!("{:.1}", r.delta_bic))?;
        let best_a = self.best_aic();
        let best_b = self.best_bic();
        write!(
            f,
            "lowest AIC: {} ({:.1}); lowest BIC: {} ({:.1})",
            best_a.model, best_a.aic, best_b.model, best_b.bic
        )
    }
}

pub fn model_table(fits: &[FitResult]) -> Result<ModelTable> {
    let first = fits
        .first()
        .ok_or_else(|| Error::Dimension("model table needs at least one fit".into()))?;
    if fits.iter().any(|f| f.data_fingerprint != first.data_fingerprint) {
        return Err(Error::MixedDatasets);
    }
    let min_aic = fits.iter().map(|f| f.aic).fold(f64::INFINITY, f64::min);
    let min_bic = fits.iter().map(|f| f.bic).fold(f64::INFINITY, f64::min);
    Ok(ModelTable {
        rows: fits
            .iter()
            .map(|f| ModelRow {
                model: f.spec.to_string(),
                dim: f.dim(),
                loglik: f.loglik,
                aic: f.aic,
                bic: f.bic,
                delta_aic: f.aic - min_aic,
                delta_bic: f.bic - min_bic,
            })
            .collect(),
    })
}

/// Human-readable coefficient table.
pub fn coefficient_table(fit: &FitResult, level: f64) -> String {
    let mut out = format!("{:<10}{:>12}{:>12}{:>12}{:>12}\n", "coef", "estimate", "se", "lower", "upper");
    match wald_ci(fit, level) {
        Ok(rows) => {
            for r in rows {
                out += &format!(
                    "{:<10}{:>12.4}{:>12.4}{:>12.4}{:>12.4}\n",
                    r.name, r.estimate, r.se, r.lower, r.upper
                );
            }
        }
        Err(_) => {
            for (name, v) in fit.free_names().iter().zip(&fit.estimate) {
                out += &format!("{name:<10}{v:>12.4}{:>12}{:>12}{:>12}\n", "-", "-", "-");
            }
        }
    }
    for (&(b, j), v) in fit.spec.fixed() {
        out += &format!("{:<10}{v:>12.4}{:>12}\n", coef_key(b, j), "fixed");
    }
    out
}
