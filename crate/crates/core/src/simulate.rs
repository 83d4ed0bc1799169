//! Random-variate generation, censoring calibration and replicated simulation
//! studies.
//!
//! Randomness comes from ChaCha8 keyed by `(seed, scenario)` with one stream
//! per replicate, so a study's output does not depend on how replicates are
//! scheduled across threads.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apgw::ApgwParams;
use crate::error::{Block, Error, Result};
use crate::inference::standard_errors;
use crate::model::{ModelSpec, RegressionCoefficients, SurvivalDataset, LINK_LIMIT};
use crate::optimizer::{fit, OptimizerConfig};

/// Monte-Carlo draws used by [`calibrate_censoring`].
pub const CALIBRATION_DRAWS: usize = 100_000;

/// Probabilities at which fitted baseline survivors are recorded.
pub const SURVIVOR_CHECK_U: [f64; 3] = [0.1, 0.5, 0.9];

/// Lifetime distribution of one subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LifetimeLaw {
    Apgw(ApgwParams),
    /// `kappa -> inf` limit: `H(t) = lambda (exp((phi t)^gamma) - 1)`.
    Gompertz { phi: f64, lambda: f64, gamma: f64 },
}

impl LifetimeLaw {
    /// Law for linear predictors `(tau, beta, alpha, nu)`; `nu = +inf` selects
    /// the Gompertz limit.
    pub fn from_predictors(eta: [f64; 4]) -> Result<Self> {
        for (b, v) in Block::ALL.iter().zip(eta) {
            if v.is_nan() || (v.abs() > LINK_LIMIT && !(*b == Block::Nu && v == f64::INFINITY)) {
                return Err(Error::LinkOverflow { block: *b, value: v });
            }
        }
        let [tau, beta, alpha, nu] = eta;
        if nu == f64::INFINITY {
            Ok(LifetimeLaw::Gompertz {
                phi: tau.exp(),
                lambda: beta.exp(),
                gamma: alpha.exp(),
            })
        } else {
            Ok(LifetimeLaw::Apgw(ApgwParams::new(
                tau.exp(),
                beta.exp(),
                alpha.exp(),
                nu.exp_m1(),
            )?))
        }
    }

    /// Inverse distribution function; `+inf` on the cure plateau.
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            LifetimeLaw::Apgw(p) => {
                if p.is_cure() && u >= 1.0 - p.cure_probability().unwrap_or(0.0) {
                    return f64::INFINITY;
                }
                p.quantile(u).unwrap_or(f64::INFINITY)
            }
            LifetimeLaw::Gompertz { phi, lambda, gamma } => {
                let target = -(-u).ln_1p() / lambda;
                target.ln_1p().powf(1.0 / gamma) / phi
            }
        }
    }

    pub fn survivor(&self, t: f64) -> f64 {
        match *self {
            LifetimeLaw::Apgw(p) => p.survivor(t).unwrap_or(1.0),
            LifetimeLaw::Gompertz { phi, lambda, gamma } => {
                (-lambda * (phi * t).powf(gamma).exp_m1()).exp()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        self.quantile(u)
    }
}

/// Draws one lifetime by inversion; cured subjects get `+inf`.
pub fn sample_lifetime<R: Rng + ?Sized>(p: &ApgwParams, rng: &mut R) -> f64 {
    LifetimeLaw::Apgw(*p).sample(rng)
}

/// How covariates are drawn for each simulated subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovariateLaw {
    None,
    /// One binary covariate `x ~ Bernoulli(p)`.
    Bernoulli { p: f64 },
    /// A factor with the given level weights, coded as indicators against the
    /// first level.
    Categorical { weights: Vec<f64> },
}

impl CovariateLaw {
    pub fn n_covariates(&self) -> usize {
        match self {
            CovariateLaw::None => 0,
            CovariateLaw::Bernoulli { .. } => 1,
            CovariateLaw::Categorical { weights } => weights.len().saturating_sub(1),
        }
    }

    pub fn names(&self) -> Vec<String> {
        match self {
            CovariateLaw::None => vec![],
            CovariateLaw::Bernoulli { .. } => vec!["x".into()],
            CovariateLaw::Categorical { weights } => (2..=weights.len()).map(|k| format!("level{k}")).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            CovariateLaw::None => Ok(()),
            CovariateLaw::Bernoulli { p } if (0.0..=1.0).contains(p) => Ok(()),
            CovariateLaw::Bernoulli { p } => Err(Error::Scenario(format!("Bernoulli p = {p} outside [0, 1]"))),
            CovariateLaw::Categorical { weights } => {
                if weights.len() < 2 || weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
                    Err(Error::Scenario(
                        "categorical weights need at least two non-negative entries with positive sum".into(),
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match self {
            CovariateLaw::None => {}
            CovariateLaw::Bernoulli { p } => out.push(if rng.gen::<f64>() < *p { 1.0 } else { 0.0 }),
            CovariateLaw::Categorical { weights } => {
                let total: f64 = weights.iter().sum();
                let mut u = rng.gen::<f64>() * total;
                let mut level = weights.len() - 1;
                for (k, w) in weights.iter().enumerate() {
                    if u < *w {
                        level = k;
                        break;
                    }
                    u -= w;
                }
                out.extend((1..weights.len()).map(|k| if k == level { 1.0 } else { 0.0 }));
            }
        }
    }
}

/// Simulation-study design.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n: usize,
    /// Generating coefficients; `nu[0]` is replaced by each `nu_grid` value.
    pub true_coefs: RegressionCoefficients,
    /// May contain `f64::INFINITY` for the Gompertz limit.
    pub nu_grid: Vec<f64>,
    pub target_censoring: f64,
    pub n_replicates: usize,
    pub fit_specs: Vec<ModelSpec>,
    pub seed: u64,
    pub covariate_law: CovariateLaw,
    pub optimizer: OptimizerConfig,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::Scenario(format!("n = {} is below the minimum of 10", self.n)));
        }
        if self.n_replicates == 0 {
            return Err(Error::Scenario("at least one replicate is required".into()));
        }
        if !(0.0..1.0).contains(&self.target_censoring) {
            return Err(Error::Scenario(format!(
                "target censoring {} outside [0, 1)",
                self.target_censoring
            )));
        }
        if self.nu_grid.is_empty() || self.nu_grid.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(Error::Scenario("nu grid must be non-empty with values in (-inf, inf]".into()));
        }
        self.covariate_law.validate()?;
        let p = self.covariate_law.n_covariates();
        if self.true_coefs.n_covariates() != p {
            return Err(Error::Scenario(format!(
                "true coefficients cover {} covariates, covariate law draws {p}",
                self.true_coefs.n_covariates()
            )));
        }
        if let Some(s) = self.fit_specs.iter().find(|s| s.n_covariates() != p) {
            return Err(Error::Scenario(format!("fit spec {s} expects {} covariates, law draws {p}", s.n_covariates())));
        }
        self.optimizer.validate()
    }

    /// Generating coefficients at grid value `nu`.
    pub fn coefs_at(&self, nu: f64) -> RegressionCoefficients {
        let mut c = self.true_coefs.clone();
        c.nu[0] = nu;
        c
    }
}

fn law_for(coefs: &RegressionCoefficients, x: &[f64]) -> Result<LifetimeLaw> {
    let eta = [
        coefs.linear_predictor(Block::Tau, x),
        coefs.linear_predictor(Block::Beta, x),
        coefs.linear_predictor(Block::Alpha, x),
        coefs.linear_predictor(Block::Nu, x),
    ];
    LifetimeLaw::from_predictors(eta)
}

/// ChaCha8 generator for `(seed, scenario)` positioned on stream `replicate`.
pub fn replicate_rng(seed: u64, scenario: u64, replicate: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&scenario.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(replicate);
    rng
}

/// Draws covariates and lifetimes for `n` subjects (lifetimes may be `+inf`).
fn draw_lifetimes<R: Rng>(
    coefs: &RegressionCoefficients,
    law: &CovariateLaw,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut covs = Vec::with_capacity(n * law.n_covariates());
    let mut lifetimes = Vec::with_capacity(n);
    for _ in 0..n {
        let start = covs.len();
        law.draw(rng, &mut covs);
        let l = law_for(coefs, &covs[start..])?;
        lifetimes.push(l.sample(rng));
    }
    Ok((covs, lifetimes))
}

/// Exponential censoring rate giving the target censored proportion.
///
/// The proportion is estimated from [`CALIBRATION_DRAWS`] subjects with common
/// random numbers, so it is monotone in the rate and bisection in log-rate
/// converges. A target of 0 returns rate 0 (no censoring) unless a cure
/// fraction makes that impossible.
pub fn calibrate_censoring(
    coefs: &RegressionCoefficients,
    law: &CovariateLaw,
    target: f64,
    seed: u64,
) -> Result<f64> {
    if !(0.0..1.0).contains(&target) {
        return Err(Error::Scenario(format!("target censoring {target} outside [0, 1)")));
    }
    let mut rng = replicate_rng(seed, u64::MAX, 0);
    let (_, lifetimes) = draw_lifetimes(coefs, law, CALIBRATION_DRAWS, &mut rng)?;
    let exp_draws: Vec<f64> = (0..CALIBRATION_DRAWS).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let cured = lifetimes.iter().filter(|t| t.is_infinite()).count() as f64 / CALIBRATION_DRAWS as f64;
    if target < cured - 0.005 {
        return Err(Error::Scenario(format!(
            "target censoring {target} is unattainable: the cured fraction alone is {cured:.3}"
        )));
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    // censored when E / rate < T
    let proportion = |rate: f64| {
        lifetimes
            .iter()
            .zip(&exp_draws)
            .filter(|(t, e)| **e / rate < **t)
            .count() as f64
            / CALIBRATION_DRAWS as f64
    };
    let (mut lo, mut hi) = (-30.0f64, 30.0f64);
    if proportion(lo.exp()) > target {
        return Ok(lo.exp());
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if proportion(mid.exp()) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// One simulated dataset with exponential censoring at `rate` (0 = none).
pub fn simulate_dataset<R: Rng>(
    coefs: &RegressionCoefficients,
    law: &CovariateLaw,
    n: usize,
    rate: f64,
    rng: &mut R,
) -> Result<SurvivalDataset> {
    let (covs, lifetimes) = draw_lifetimes(coefs, law, n, rng)?;
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for t in lifetimes {
        let c = if rate > 0.0 {
            rng.sample::<f64, _>(Exp1) / rate
        } else {
            f64::INFINITY
        };
        if t <= c {
            if t.is_infinite() {
                return Err(Error::Scenario(
                    "cured subject with no censoring: set a positive censoring target".into(),
                ));
            }
            times.push(t);
            events.push(true);
        } else {
            times.push(c);
            events.push(false);
        }
    }
    SurvivalDataset::new(times, events, covs, law.names())
}

/// Result of fitting one spec to one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFit {
    pub estimate: Option<Vec<f64>>,
    pub se: Option<Vec<f64>>,
    pub loglik: Option<f64>,
    pub aic: Option<f64>,
    pub converged: bool,
    /// Fitted baseline (all covariates zero) survivor at the true baseline
    /// quantiles for [`SURVIVOR_CHECK_U`].
    pub survivor_at_true_quantiles: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub nu_index: usize,
    pub replicate: usize,
    pub censored_fraction: f64,
    pub fits: Vec<ReplicateFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub nu: f64,
    pub spec: String,
    pub coefficient: String,
    pub truth: f64,
    pub median: f64,
    /// Sample SD of the estimates across converged replicates.
    pub sd: f64,
    /// Mean of the per-replicate standard errors, where available.
    pub mean_se: Option<f64>,
    pub n_converged: usize,
    pub convergence_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoringRecord {
    pub nu: f64,
    pub rate: f64,
    pub realized_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub n: usize,
    pub n_replicates: usize,
    pub specs: Vec<String>,
    /// Free-coefficient names per spec.
    pub spec_coefficients: Vec<Vec<String>>,
    pub rows: Vec<SummaryRow>,
    pub censoring: Vec<CensoringRecord>,
    pub replicates: Vec<ReplicateRecord>,
}

impl ReplicationSummary {
    pub fn row(&self, nu: f64, spec_index: usize, coefficient: &str) -> Option<&SummaryRow> {
        let spec = &self.specs[spec_index];
        self.rows
            .iter()
            .find(|r| same_nu(r.nu, nu) && &r.spec == spec && r.coefficient == coefficient)
    }

    /// Converged estimates of one coefficient, in replicate order.
    pub fn estimates(&self, nu_index: usize, spec_index: usize, coefficient: &str) -> Vec<f64> {
        let Some(pos) = self.spec_coefficients[spec_index].iter().position(|c| c == coefficient) else {
            return vec![];
        };
        self.replicates
            .iter()
            .filter(|r| r.nu_index == nu_index)
            .filter_map(|r| {
                let f = &r.fits[spec_index];
                if f.converged {
                    f.estimate.as_ref().map(|e| e[pos])
                } else {
                    None
                }
            })
            .collect()
    }

    /// One block per spec, one line per nu, `median (sd)`
    /// per coefficient.
    pub fn to_table_string(&self) -> String {
        let mut out = String::new();
        let nus: Vec<f64> = self.censoring.iter().map(|c| c.nu).collect();
        for (s, spec) in self.specs.iter().enumerate() {
            let coefs = &self.spec_coefficients[s];
            out += &format!("{spec}  (n = {}, {} replicates)\n", self.n, self.n_replicates);
            out += &format!("{:>8}", "nu");
            for c in coefs {
                out += &format!("{c:>16}");
            }
            out += &format!("{:>10}\n", "conv");
            for &nu in &nus {
                out += &format!("{:>8}", fmt_nu(nu));
                let mut rate = 0.0;
                for c in coefs {
                    match self.row(nu, s, c) {
                        Some(r) => {
                            rate = r.convergence_rate;
                            out += &format!("{:>16}", format!("{:.2} ({:.2})", r.median, r.sd));
                        }
                        None => out += &format!("{:>16}", "-"),
                    }
                }
                out += &format!("{:>10.3}\n", rate);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("nu,spec,coefficient,truth,median,sd,mean_se,n_converged,convergence_rate\n");
        for r in &self.rows {
            out += &format!(
                "{},\"{}\",{},{},{},{},{},{},{}\n",
                fmt_nu(r.nu),
                r.spec,
                r.coefficient,
                r.truth,
                r.median,
                r.sd,
                r.mean_se.map_or("NA".to_string(), |v| v.to_string()),
                r.n_converged,
                r.convergence_rate
            );
        }
        out
    }
}

fn same_nu(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() < 1e-12
}

fn fmt_nu(nu: f64) -> String {
    if nu.is_infinite() {
        "inf".into()
    } else {
        format!("{nu:.2}")
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::NAN;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

fn fit_replicate(
    data: &SurvivalDataset,
    spec: &ModelSpec,
    config: &OptimizerConfig,
    truth_baseline: Option<LifetimeLaw>,
) -> ReplicateFit {
    match fit(data, spec, config) {
        Ok(f) => {
            let baseline = vec![0.0; spec.n_covariates()];
            let surv = truth_baseline.and_then(|law| {
                let q = f.coefs.subject_params(&baseline).ok()?;
                let mut out = [0.0; 3];
                for (o, u) in out.iter_mut().zip(SURVIVOR_CHECK_U) {
                    *o = q.survivor(law.quantile(u)).ok()?;
                }
                Some(out)
            });
            ReplicateFit {
                se: standard_errors(&f).ok(),
                loglik: Some(f.loglik),
                aic: Some(f.aic),
                converged: f.converged,
                estimate: Some(f.estimate),
                survivor_at_true_quantiles: surv,
            }
        }
        Err(_) => ReplicateFit {
            estimate: None,
            se: None,
            loglik: None,
            aic: None,
            converged: false,
            survivor_at_true_quantiles: None,
        },
    }
}

/// Runs every `(nu, replicate, fit spec)` combination and summarises.
///
/// Fit failures count against the convergence rate; they never abort the study.
pub fn run_study(scenario: &ScenarioConfig) -> Result<ReplicationSummary> {
    scenario.validate()?;
    let p = scenario.covariate_law.n_covariates();
    let mut censoring = Vec::new();
    let mut replicates = Vec::new();
    for (a, &nu) in scenario.nu_grid.iter().enumerate() {
        let coefs = scenario.coefs_at(nu);
        let rate = calibrate_censoring(&coefs, &scenario.covariate_law, scenario.target_censoring, scenario.seed ^ a as u64)?;
        let truth_baseline = law_for(&coefs, &vec![0.0; p]).ok();
        let records: Vec<Result<ReplicateRecord>> = (0..scenario.n_replicates)
            .into_par_iter()
            .map(|r| {
                let mut rng = replicate_rng(scenario.seed, a as u64, r as u64);
                let data = simulate_dataset(&coefs, &scenario.covariate_law, scenario.n, rate, &mut rng)?;
                let cfg = OptimizerConfig {
                    seed: scenario.optimizer.seed ^ r as u64,
                    ..scenario.optimizer
                };
                let fits = scenario
                    .fit_specs
                    .iter()
                    .map(|spec| fit_replicate(&data, spec, &cfg, truth_baseline))
                    .collect();
                Ok(ReplicateRecord {
                    nu_index: a,
                    replicate: r,
                    censored_fraction: 1.0 - data.n_events() as f64 / data.len() as f64,
                    fits,
                })
            })
            .collect();
        let records = records.into_iter().collect::<Result<Vec<_>>>()?;
        let realized_mean = records.iter().map(|r| r.censored_fraction).sum::<f64>() / records.len() as f64;
        censoring.push(CensoringRecord { nu, rate, realized_mean });
        replicates.extend(records);
    }

    let specs: Vec<String> = scenario.fit_specs.iter().map(|s| s.to_string()).collect();
    let spec_coefficients: Vec<Vec<String>> = scenario.fit_specs.iter().map(|s| s.free_names()).collect();
    let mut summary = ReplicationSummary {
        n: scenario.n,
        n_replicates: scenario.n_replicates,
        specs,
        spec_coefficients,
        rows: Vec::new(),
        censoring,
        replicates,
    };
    let mut rows = Vec::new();
    for (a, &nu) in scenario.nu_grid.iter().enumerate() {
        let coefs = scenario.coefs_at(nu);
        for (s, spec) in scenario.fit_specs.iter().enumerate() {
            for (k, (b, j)) in spec.free_entries().into_iter().enumerate() {
                let name = &summary.spec_coefficients[s][k];
                let est = summary.estimates(a, s, name);
                let ses: Vec<f64> = summary
                    .replicates
                    .iter()
                    .filter(|r| r.nu_index == a && r.fits[s].converged)
                    .filter_map(|r| r.fits[s].se.as_ref().map(|se| se[k]))
                    .collect();
                rows.push(SummaryRow {
                    nu,
                    spec: summary.specs[s].clone(),
                    coefficient: name.clone(),
                    truth: coefs.get(b, j),
                    median: median(&est),
                    sd: sample_sd(&est),
                    mean_se: (!ses.is_empty()).then(|| ses.iter().sum::<f64>() / ses.len() as f64),
                    n_converged: est.len(),
                    convergence_rate: est.len() as f64 / scenario.n_replicates as f64,
                });
            }
        }
    }
    summary.rows = rows;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_sd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!((sample_sd(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((correlation(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.5]) - 1.0).abs() < 1e-2);
    }

    #[test]
    fn zero_target_means_no_censoring() {
        let mut c = RegressionCoefficients::zeros(0);
        c.nu[0] = 2f64.ln();
        assert_eq!(calibrate_censoring(&c, &CovariateLaw::None, 0.0, 1).unwrap(), 0.0);
    }

    #[test]
    fn competing_exponentials_half_censored_at_unit_rate() {
        let mut c = RegressionCoefficients::zeros(0);
        c.nu[0] = 2f64.ln();
        let rate = calibrate_censoring(&c, &CovariateLaw::None, 0.5, 11).unwrap();
        // P(C < T) = rate / (1 + rate); +-0.005 in proportion is about +-0.02 in rate
        assert!((rate - 1.0).abs() < 0.03, "{rate}");
    }

    #[test]
    fn cure_fraction_bounds_the_censoring_target() {
        let mut c = RegressionCoefficients::zeros(0);
        c.nu[0] = 0.5f64.ln(); // kappa = -0.5, cure e^-1
        assert!(calibrate_censoring(&c, &CovariateLaw::None, 0.2, 1).is_err());
        assert!(calibrate_censoring(&c, &CovariateLaw::None, 0.5, 1).is_ok());
    }

    #[test]
    fn gompertz_limit_quantile_inverts_survivor() {
        let law = LifetimeLaw::from_predictors([0.3, -0.2, 0.1, f64::INFINITY]).unwrap();
        assert!(matches!(law, LifetimeLaw::Gompertz { .. }));
        for u in [0.05, 0.5, 0.95] {
            let t = law.quantile(u);
            assert!((law.survivor(t) - (1.0 - u)).abs() < 1e-12);
        }
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        let mut a = replicate_rng(5, 0, 1);
        let mut b = replicate_rng(5, 0, 1);
        let mut c = replicate_rng(5, 0, 2);
        let xa: u64 = a.gen();
        assert_eq!(xa, b.gen::<u64>());
        assert_ne!(xa, c.gen::<u64>());
    }

    #[test]
    fn categorical_law_codes_indicators() {
        let law = CovariateLaw::Categorical {
            weights: vec![1.0, 1.0, 1.0],
        };
        let mut rng = replicate_rng(1, 1, 1);
        let mut counts = [0usize; 3];
        for _ in 0..3000 {
            let mut row = Vec::new();
            law.draw(&mut rng, &mut row);
            assert_eq!(row.len(), 2);
            assert!(row.iter().sum::<f64>() <= 1.0);
            let level = row.iter().position(|v| *v == 1.0).map_or(0, |k| k + 1);
            counts[level] += 1;
        }
        assert!(counts.iter().all(|&c| (900..1100).contains(&c)), "{counts:?}");
    }

    #[test]
    fn scenario_validation() {
        let base = ScenarioConfig {
            n: 100,
            true_coefs: RegressionCoefficients::zeros(0),
            nu_grid: vec![0.0],
            target_censoring: 0.3,
            n_replicates: 1,
            fit_specs: vec![ModelSpec::parse("M(tau)", vec![], false).unwrap()],
            seed: 1,
            covariate_law: CovariateLaw::None,
            optimizer: OptimizerConfig::default(),
        };
        assert!(base.validate().is_ok());
        assert!(ScenarioConfig { n: 5, ..base.clone() }.validate().is_err());
        assert!(ScenarioConfig {
            target_censoring: 1.0,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(ScenarioConfig {
            covariate_law: CovariateLaw::Bernoulli { p: 0.5 },
            ..base
        }
        .validate()
        .is_err());
    }
}
