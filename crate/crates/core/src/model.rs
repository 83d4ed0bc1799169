//! Regression structure: link functions, the `M(...)` model lattice and the
//! survival dataset container.
//!
//! Each distributional parameter has its own linear predictor over the design
//! row `x = (1, x_1, ..., x_p)`:
//!
//! ```text
//! log phi = x'tau    log lambda = x'beta    log gamma = x'alpha    log(kappa+1) = x'nu
//! ```

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::apgw::ApgwParams;
use crate::error::{Block, Error, Result};

/// Linear predictors beyond this magnitude overflow `exp`.
pub const LINK_LIMIT: f64 = 700.0;

/// Coefficients of the four regression blocks, each of length `p + 1` with the
/// intercept at position 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionCoefficients {
    pub tau: Vec<f64>,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub nu: Vec<f64>,
}

impl RegressionCoefficients {
    /// All-zero coefficients for `p` covariates: the log-logistic baseline
    /// with unit scales.
    pub fn zeros(p: usize) -> Self {
        Self {
            tau: vec![0.0; p + 1],
            beta: vec![0.0; p + 1],
            alpha: vec![0.0; p + 1],
            nu: vec![0.0; p + 1],
        }
    }

    pub fn from_blocks(tau: Vec<f64>, beta: Vec<f64>, alpha: Vec<f64>, nu: Vec<f64>) -> Result<Self> {
        let c = Self {
            tau,
            beta,
            alpha,
            nu,
        };
        let w = c.tau.len();
        if w == 0 || Block::ALL.iter().any(|&b| c.block(b).len() != w) {
            return Err(Error::Dimension(format!(
                "coefficient blocks must share a nonzero length, got tau={} beta={} alpha={} nu={}",
                c.tau.len(),
                c.beta.len(),
                c.alpha.len(),
                c.nu.len()
            )));
        }
        Ok(c)
    }

    /// Number of covariates `p` (block length minus the intercept).
    pub fn n_covariates(&self) -> usize {
        self.tau.len() - 1
    }

    pub fn block(&self, b: Block) -> &[f64] {
        match b {
            Block::Tau => &self.tau,
            Block::Beta => &self.beta,
            Block::Alpha => &self.alpha,
            Block::Nu => &self.nu,
        }
    }

    pub fn block_mut(&mut self, b: Block) -> &mut Vec<f64> {
        match b {
            Block::Tau => &mut self.tau,
            Block::Beta => &mut self.beta,
            Block::Alpha => &mut self.alpha,
            Block::Nu => &mut self.nu,
        }
    }

    pub fn get(&self, b: Block, j: usize) -> f64 {
        self.block(b)[j]
    }

    /// `x'c` for block `b`, with the intercept prepended to `x`.
    pub fn linear_predictor(&self, b: Block, x: &[f64]) -> f64 {
        let c = self.block(b);
        c[1..].iter().zip(x).fold(c[0], |acc, (ci, xi)| acc + ci * xi)
    }

    /// Per-subject distributional parameters for covariate row `x`.
    pub fn subject_params(&self, x: &[f64]) -> Result<ApgwParams> {
        if x.len() != self.n_covariates() {
            return Err(Error::Dimension(format!(
                "covariate row has {} entries, coefficients expect {}",
                x.len(),
                self.n_covariates()
            )));
        }
        let mut eta = [0.0; 4];
        for b in Block::ALL {
            let v = self.linear_predictor(b, x);
            if !v.is_finite() || v.abs() > LINK_LIMIT {
                return Err(Error::LinkOverflow { block: b, value: v });
            }
            eta[b.index()] = v;
        }
        ApgwParams::new(eta[0].exp(), eta[1].exp(), eta[2].exp(), eta[3].exp_m1())
    }
}

/// Which regression blocks carry covariate slopes, plus any frozen entries.
///
/// Free entries under `M(...)`:
/// - `tau`, `beta`: intercept and slopes when listed, otherwise all fixed at 0;
/// - `alpha`, `nu`: intercept always, slopes when listed.
///
/// Explicit `fix` entries override both rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    active: BTreeSet<Block>,
    fixed: BTreeMap<(Block, usize), f64>,
    covariate_names: Vec<String>,
    allow_two_scales: bool,
}

impl ModelSpec {
    pub fn new(active: &[Block], covariate_names: Vec<String>) -> Result<Self> {
        Self::build(active, covariate_names, false)
    }

    /// Like [`ModelSpec::new`] but permits `tau` and `beta` together. The two
    /// scales are nearly non-identifiable; this exists for diagnostics.
    pub fn with_two_scales(active: &[Block], covariate_names: Vec<String>) -> Result<Self> {
        Self::build(active, covariate_names, true)
    }

    fn build(active: &[Block], covariate_names: Vec<String>, allow_two_scales: bool) -> Result<Self> {
        let active: BTreeSet<Block> = active.iter().copied().collect();
        if active.contains(&Block::Tau) && active.contains(&Block::Beta) && !allow_two_scales {
            return Err(Error::Spec(
                "tau and beta together are nearly non-identifiable; pass --allow-two-scales to fit both"
                    .into(),
            ));
        }
        Ok(Self {
            active,
            fixed: BTreeMap::new(),
            covariate_names,
            allow_two_scales,
        })
    }

    /// Parses `M(tau, alpha)` style notation.
    pub fn parse(text: &str, covariate_names: Vec<String>, allow_two_scales: bool) -> Result<Self> {
        let t = text.trim();
        let inner = t
            .strip_prefix("M(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::Spec(format!("`{t}` is not of the form M(component, ...)")))?;
        let mut blocks = Vec::new();
        for part in inner.split(',') {
            let b: Block = part.parse()?;
            if blocks.contains(&b) {
                return Err(Error::Spec(format!("component `{b}` listed twice in `{t}`")));
            }
            blocks.push(b);
        }
        Self::build(&blocks, covariate_names, allow_two_scales)
    }

    /// Freezes coefficient `j` of block `b` at `value`.
    pub fn fix(mut self, b: Block, j: usize, value: f64) -> Result<Self> {
        if j > self.n_covariates() {
            return Err(Error::Spec(format!(
                "{b}{j} is out of range: the model has {} covariates",
                self.n_covariates()
            )));
        }
        if !value.is_finite() {
            return Err(Error::Spec(format!("{b}{j} fixed at non-finite value {value}")));
        }
        self.fixed.insert((b, j), value);
        Ok(self)
    }

    /// Freezes the coefficient named by a key such as `nu0` or `beta2`.
    pub fn fix_key(self, key: &str, value: f64) -> Result<Self> {
        let (b, j) = parse_coef_key(key)?;
        self.fix(b, j, value)
    }

    pub fn unfix(mut self, b: Block, j: usize) -> Self {
        self.fixed.remove(&(b, j));
        self
    }

    pub fn active(&self) -> &BTreeSet<Block> {
        &self.active
    }

    pub fn fixed(&self) -> &BTreeMap<(Block, usize), f64> {
        &self.fixed
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn allows_two_scales(&self) -> bool {
        self.allow_two_scales
    }

    pub fn is_free(&self, b: Block, j: usize) -> bool {
        if self.fixed.contains_key(&(b, j)) {
            return false;
        }
        match b {
            Block::Tau | Block::Beta => self.active.contains(&b),
            Block::Alpha | Block::Nu => j == 0 || self.active.contains(&b),
        }
    }

    /// Value of a non-free entry.
    pub fn fixed_value(&self, b: Block, j: usize) -> f64 {
        self.fixed.get(&(b, j)).copied().unwrap_or(0.0)
    }

    /// Free entries in packing order: tau, beta, alpha, nu; intercept first.
    pub fn free_entries(&self) -> Vec<(Block, usize)> {
        let width = self.n_covariates() + 1;
        Block::ALL
            .iter()
            .flat_map(|&b| (0..width).map(move |j| (b, j)))
            .filter(|&(b, j)| self.is_free(b, j))
            .collect()
    }

    pub fn n_free(&self) -> usize {
        self.free_entries().len()
    }

    pub fn free_names(&self) -> Vec<String> {
        self.free_entries()
            .into_iter()
            .map(|(b, j)| coef_key(b, j))
            .collect()
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.active.contains(&Block::Tau) && self.active.contains(&Block::Beta) {
            w.push(
                "both scale blocks (tau, beta) are estimated; expect strongly correlated, unstable estimates"
                    .to_string(),
            );
        }
        w
    }

    /// Coefficients with every non-free entry at its fixed value and free
    /// entries at zero.
    pub fn base_coefficients(&self) -> RegressionCoefficients {
        let width = self.n_covariates() + 1;
        let mut c = RegressionCoefficients::zeros(self.n_covariates());
        for b in Block::ALL {
            for j in 0..width {
                if !self.is_free(b, j) {
                    c.block_mut(b)[j] = self.fixed_value(b, j);
                }
            }
        }
        c
    }

    /// Extracts the free entries of `coefs`.
    pub fn pack(&self, coefs: &RegressionCoefficients) -> Result<Vec<f64>> {
        self.check_width(coefs.n_covariates())?;
        Ok(self
            .free_entries()
            .into_iter()
            .map(|(b, j)| coefs.get(b, j))
            .collect())
    }

    /// Rebuilds full coefficients from a free vector, restoring fixed entries.
    pub fn unpack(&self, free: &[f64]) -> Result<RegressionCoefficients> {
        let entries = self.free_entries();
        if free.len() != entries.len() {
            return Err(Error::Dimension(format!(
                "free vector has {} entries, {} expects {}",
                free.len(),
                self,
                entries.len()
            )));
        }
        let mut c = self.base_coefficients();
        for ((b, j), v) in entries.into_iter().zip(free) {
            c.block_mut(b)[j] = *v;
        }
        Ok(c)
    }

    fn check_width(&self, p: usize) -> Result<()> {
        if p != self.n_covariates() {
            return Err(Error::Dimension(format!(
                "coefficients cover {p} covariates, model spec has {}",
                self.n_covariates()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.active.iter().map(|b| b.name()).collect();
        write!(f, "M({})", names.join(","))?;
        if !self.fixed.is_empty() {
            let fixed: Vec<String> = self
                .fixed
                .iter()
                .map(|(&(b, j), v)| format!("{}={v}", coef_key(b, j)))
                .collect();
            write!(f, " [fixed {}]", fixed.join(", "))?;
        }
        Ok(())
    }
}

/// `tau0`, `alpha2`, ...
pub fn coef_key(b: Block, j: usize) -> String {
    format!("{}{}", b.name(), j)
}

pub fn parse_coef_key(key: &str) -> Result<(Block, usize)> {
    let key = key.trim();
    let split = key
        .find(|c: char| c.is_ascii_digit())
        .ok_or_else(|| Error::Spec(format!("coefficient key `{key}` has no index (e.g. nu0)")))?;
    let (name, idx) = key.split_at(split);
    let b: Block = name.parse()?;
    let j = idx
        .parse()
        .map_err(|_| Error::Spec(format!("coefficient key `{key}` has a malformed index")))?;
    Ok((b, j))
}

/// Right-censored survival data with raw covariates (no intercept column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    times: Vec<f64>,
    events: Vec<bool>,
    covariates: Vec<f64>,
    names: Vec<String>,
}

impl SurvivalDataset {
    /// `covariates` is row-major `n x p` with `p = names.len()`.
    pub fn new(times: Vec<f64>, events: Vec<bool>, covariates: Vec<f64>, names: Vec<String>) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return Err(Error::Dimension("dataset has no rows".into()));
        }
        if events.len() != n || covariates.len() != n * names.len() {
            return Err(Error::Dimension(format!(
                "dataset with {n} times has {} status values and {} covariate cells for {} columns",
                events.len(),
                covariates.len(),
                names.len()
            )));
        }
        if let Some(i) = times.iter().position(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Domain(format!(
                "row {i}: time must be finite and positive, got {}",
                times[i]
            )));
        }
        if let Some(i) = covariates.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!(
                "row {}: covariate `{}` is not finite",
                i / names.len(),
                names[i % names.len()]
            )));
        }
        Ok(Self {
            times,
            events,
            covariates,
            names,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.names.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.names.len();
        &self.covariates[i * p..(i + 1) * p]
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    /// Bit-level fingerprint used to check that fits share a dataset.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.times.iter().for_each(|t| t.to_bits().hash(&mut h));
        self.events.hash(&mut h);
        self.covariates.iter().for_each(|x| x.to_bits().hash(&mut h));
        self.names.hash(&mut h);
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (1..=p).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn zero_coefficients_give_log_logistic_baseline() {
        let c = RegressionCoefficients::zeros(2);
        let q = c.subject_params(&[0.3, -1.0]).unwrap();
        assert_eq!((q.phi(), q.lambda(), q.gamma(), q.kappa()), (1.0, 1.0, 1.0, 0.0));
    }

    #[test]
    fn covariate_design_from_simulation_study() {
        let c = RegressionCoefficients::from_blocks(
            vec![0.8, 0.6],
            vec![0.0, 0.0],
            vec![0.2, -0.5],
            vec![0.41, 0.0],
        )
        .unwrap();
        let q = c.subject_params(&[1.0]).unwrap();
        assert!((q.phi() - 1.4f64.exp()).abs() < 1e-14);
        assert!((q.gamma() - (-0.3f64).exp()).abs() < 1e-14);
        assert!((q.kappa() - (0.41f64.exp() - 1.0)).abs() < 1e-14);
        assert_eq!(q.lambda(), 1.0);
    }

    #[test]
    fn rounded_log_two_is_weibull_adjacent() {
        let mut c = RegressionCoefficients::zeros(0);
        c.nu[0] = 0.69;
        let k = c.subject_params(&[]).unwrap().kappa();
        assert!((k - 0.9937).abs() < 1e-4);
        c.nu[0] = 2f64.ln();
        assert!((c.subject_params(&[]).unwrap().kappa() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn link_overflow_names_block() {
        let mut c = RegressionCoefficients::zeros(1);
        c.alpha = vec![1.0, 800.0];
        match c.subject_params(&[1.0]) {
            Err(Error::LinkOverflow { block, .. }) => assert_eq!(block, Block::Alpha),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tau_intercept_shift_scales_phi() {
        let mut c = RegressionCoefficients::zeros(1);
        c.tau = vec![0.1, 0.4];
        let before = c.subject_params(&[2.0]).unwrap().phi();
        c.tau[0] += 0.7;
        let after = c.subject_params(&[2.0]).unwrap().phi();
        assert!((after / before - 0.7f64.exp()).abs() < 1e-13);
    }

    #[test]
    fn free_vector_sizes() {
        let s = ModelSpec::parse("M(tau,alpha)", names(1), false).unwrap();
        assert_eq!(s.free_names(), ["tau0", "tau1", "alpha0", "alpha1", "nu0"]);
        let s = ModelSpec::parse("M(beta)", names(4), false).unwrap();
        assert_eq!(s.n_free(), 7);
        let s = ModelSpec::parse("M(beta,alpha)", names(4), false).unwrap();
        assert_eq!(s.n_free(), 11);
    }

    #[test]
    fn two_scales_need_flag() {
        assert!(matches!(
            ModelSpec::parse("M(tau,beta)", names(1), false),
            Err(Error::Spec(_))
        ));
        let s = ModelSpec::parse("M(tau,beta,alpha,nu)", names(1), true).unwrap();
        assert_eq!(s.n_free(), 8);
        assert_eq!(s.warnings().len(), 1);
    }

    #[test]
    fn grammar_errors() {
        assert!(ModelSpec::parse("tau,alpha", vec![], false).is_err());
        assert!(ModelSpec::parse("M(tau,gamma)", vec![], false).is_err());
        assert!(ModelSpec::parse("M(tau,tau)", vec![], false).is_err());
        assert!(ModelSpec::parse("M( beta , alpha )", vec![], false).is_ok());
    }

    #[test]
    fn fixing_overrides_defaults() {
        let s = ModelSpec::parse("M(tau)", vec![], false)
            .unwrap()
            .fix_key("beta0", 0.5)
            .unwrap();
        assert_eq!(s.free_names(), ["tau0", "alpha0", "nu0"]);
        let c = s.unpack(&[0.8, -0.3, 0.1]).unwrap();
        assert_eq!(c.beta, vec![0.5]);
        let s = s.fix_key("nu0", 2f64.ln()).unwrap();
        assert_eq!(s.n_free(), 2);
        assert!(s.clone().fix_key("nu3", 1.0).is_err());
        assert!(s.fix_key("kappa0", 1.0).is_err());
    }

    #[test]
    fn unpack_rejects_wrong_length() {
        let s = ModelSpec::parse("M(beta)", names(2), false).unwrap();
        assert!(matches!(s.unpack(&[0.0; 3]), Err(Error::Dimension(_))));
        assert!(s.pack(&RegressionCoefficients::zeros(3)).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert!(SurvivalDataset::new(vec![1.0, 0.0], vec![true, false], vec![], vec![]).is_err());
        assert!(SurvivalDataset::new(vec![1.0], vec![true, false], vec![], vec![]).is_err());
        let d = SurvivalDataset::new(
            vec![1.0, 2.0],
            vec![true, false],
            vec![0.0, 1.0, 1.0, 0.5],
            names(2),
        )
        .unwrap();
        assert_eq!(d.row(1), &[1.0, 0.5]);
        assert_eq!(d.n_events(), 1);
    }
}
