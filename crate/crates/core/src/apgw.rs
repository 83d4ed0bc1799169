//! Adapted power generalised Weibull (APGW) distribution.
//!
//! The full model has cumulative hazard `H(t) = lambda * H0((phi t)^gamma; kappa)`
//! with baseline
//!
//! ```text
//! H0(z; k) = ((k + 1) / k) * ((1 + z / (k + 1))^k - 1)
//! ```
//!
//! `kappa = 0` is the log-logistic limit, `kappa = 1` the Weibull,
//! `kappa -> inf` the Gompertz-type limit and `-1 < kappa < 0` a defective
//! (cure) distribution whose survivor function plateaus at
//! `exp(lambda (kappa + 1) / kappa)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{exp_second_rel, exprel, log1prel};

/// Absolute tolerance for the `gamma = 1` / `kappa gamma = 1` ties in shape
/// classification.
pub const SHAPE_TIE_TOL: f64 = 1e-12;

/// Distributional parameters for one subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApgwParams {
    phi: f64,
    lambda: f64,
    gamma: f64,
    kappa: f64,
}

fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and positive",
        })
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be finite and positive, got {t}")))
    }
}

impl ApgwParams {
    pub fn new(phi: f64, lambda: f64, gamma: f64, kappa: f64) -> Result<Self> {
        positive("phi", phi)?;
        positive("lambda", lambda)?;
        positive("gamma", gamma)?;
        if !(kappa.is_finite() && kappa > -1.0) {
            return Err(Error::InvalidParameter {
                name: "kappa",
                value: kappa,
                reason: "must be finite and greater than -1",
            });
        }
        Ok(Self {
            phi,
            lambda,
            gamma,
            kappa,
        })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// True for `-1 < kappa < 0`, where the distribution has a cured fraction.
    pub fn is_cure(&self) -> bool {
        self.kappa < 0.0
    }

    /// `(phi t)^gamma`, the argument of the baseline.
    fn z(&self, t: f64) -> f64 {
        (self.gamma * (self.phi * t).ln()).exp()
    }

    pub fn cum_hazard(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.lambda * baseline_cum_hazard(self.z(t), self.kappa))
    }

    /// `lambda phi gamma (phi t)^(gamma-1) (1 + (phi t)^gamma/(kappa+1))^(kappa-1)`.
    pub fn hazard(&self, t: f64) -> Result<f64> {
        Ok(self.log_hazard(t)?.exp())
    }

    pub fn log_hazard(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        let log_z = self.gamma * (self.phi * t).ln();
        let z = log_z.exp();
        Ok(self.lambda.ln() + self.gamma.ln() + log_z - t.ln()
            + baseline_log_hazard(z, self.kappa))
    }

    pub fn survivor(&self, t: f64) -> Result<f64> {
        Ok((-self.cum_hazard(t)?).exp())
    }

    pub fn density(&self, t: f64) -> Result<f64> {
        let h = self.log_hazard(t)?;
        let ch = self.cum_hazard(t)?;
        Ok((h - ch).exp())
    }

    /// Supremum of the cumulative hazard: `lambda (kappa+1)/(-kappa)` for cure
    /// models, infinite otherwise.
    pub fn cum_hazard_supremum(&self) -> f64 {
        if self.is_cure() {
            self.lambda * (self.kappa + 1.0) / (-self.kappa)
        } else {
            f64::INFINITY
        }
    }

    /// Long-run survivor probability `exp(lambda (kappa+1)/kappa)`.
    pub fn cure_probability(&self) -> Result<f64> {
        if !self.is_cure() {
            return Err(Error::NotCureModel { kappa: self.kappa });
        }
        Ok((-self.cum_hazard_supremum()).exp())
    }

    /// Inverse of the distribution function.
    ///
    /// Closed form `t = (1/phi) * Q1(-ln(1-u)/lambda)^(1/gamma)` where `Q1`
    /// inverts the baseline with `gamma = 1`. For cure models the feasible
    /// range is `u < 1 - cure_probability`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!(
                "probability must lie in (0, 1), got {u}"
            )));
        }
        let target = -(-u).ln_1p() / self.lambda;
        if self.is_cure() {
            let sup = self.cum_hazard_supremum();
            if self.lambda * target >= sup {
                let max_u = -(-sup).exp_m1();
                return Err(Error::CurePlateau { u, max_u });
            }
        }
        let z = baseline_inverse(target, self.kappa);
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::Domain(format!(
                "quantile at u = {u} is not representable"
            )));
        }
        Ok(z.powf(1.0 / self.gamma) / self.phi)
    }

    pub fn classify_shape(&self) -> HazardShape {
        classify_shape(self.phi, self.gamma, self.kappa)
    }
}

/// Baseline cumulative hazard `H0(z; kappa) = H_A(z; 1, kappa)`.
///
/// Evaluated as `(kappa+1) L exprel(kappa L)` with `L = ln(1 + z/(kappa+1))`,
/// which reduces to `ln(1+z)` continuously at `kappa = 0`.
pub fn baseline_cum_hazard(z: f64, kappa: f64) -> f64 {
    let s = kappa + 1.0;
    let l = (z / s).ln_1p();
    s * l * exprel(kappa * l)
}

/// `m0(z; kappa) = ln h0(z; kappa) = (kappa - 1) ln(1 + z/(kappa+1))`.
pub fn baseline_log_hazard(z: f64, kappa: f64) -> f64 {
    (kappa - 1.0) * (z / (kappa + 1.0)).ln_1p()
}

/// `d m0 / dz = (kappa - 1) / (kappa + 1 + z)`.
pub fn baseline_log_hazard_dz(z: f64, kappa: f64) -> f64 {
    (kappa - 1.0) / (kappa + 1.0 + z)
}

/// `d H0 / d kappa` at fixed `z`.
///
/// With `L = ln(1 + z/s)`, `s = kappa + 1`, `E = exp(kappa L)`:
/// `L^2 g(kappa L) + E (L - z/(s+z))` where `g(y) = (e^y (y-1) + 1)/y^2`.
pub fn baseline_cum_hazard_dkappa(z: f64, kappa: f64) -> f64 {
    let s = kappa + 1.0;
    let l = (z / s).ln_1p();
    let y = kappa * l;
    let e = y.exp();
    l * l * exp_second_rel(y) + e * (l - z / (s + z))
}

/// Solves `H0(z; kappa) = target` for `z`.
///
/// `z = s * expm1((target/s) * log1prel(kappa target / s))`; the caller must
/// keep `target` below the supremum when `kappa < 0`.
pub fn baseline_inverse(target: f64, kappa: f64) -> f64 {
    let s = kappa + 1.0;
    let a = kappa * target / s;
    s * ((target / s) * log1prel(a)).exp_m1()
}

/// Cumulative hazard of the original (non-adapted) PGW distribution,
/// `(1 + t^gamma)^kappa - 1`.
pub fn pgw_cum_hazard(t: f64, gamma: f64, kappa: f64) -> Result<f64> {
    check_time(t)?;
    positive("gamma", gamma)?;
    positive("kappa", kappa)?;
    Ok(box_cox_transform(t.powf(gamma), kappa))
}

/// Box-Cox type transformation `w(y) = (1 + y)^kappa - 1` linking the PGW
/// family to a Weibull baseline.
pub fn box_cox_transform(y: f64, kappa: f64) -> f64 {
    (kappa * y.ln_1p()).exp_m1()
}

/// Qualitative shape of a hazard function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", content = "turning_point")]
pub enum HazardShape {
    Constant,
    Decreasing,
    /// Minimum at the carried time.
    DownThenUp(f64),
    /// Maximum at the carried time.
    UpThenDown(f64),
    Increasing,
}

impl HazardShape {
    pub fn turning_point(&self) -> Option<f64> {
        match *self {
            HazardShape::DownThenUp(t) | HazardShape::UpThenDown(t) => Some(t),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            HazardShape::Constant => "constant",
            HazardShape::Decreasing => "decreasing",
            HazardShape::DownThenUp(_) => "down-then-up",
            HazardShape::UpThenDown(_) => "up-then-down",
            HazardShape::Increasing => "increasing",
        }
    }
}

/// Classifies by `gamma` against 1 and `kappa gamma` against 1.
///
/// A tie on exactly one of the comparisons pushes the turning point to zero
/// or infinity, so it resolves to the adjacent monotone class; only strict
/// opposite-side comparisons give a non-monotone hazard. Cure models are
/// decreasing for `gamma <= 1` and up-then-down otherwise.
fn classify_shape(phi: f64, gamma: f64, kappa: f64) -> HazardShape {
    let turning = || {
        let z = (1.0 - gamma) * (kappa + 1.0) / (kappa * gamma - 1.0);
        z.powf(1.0 / gamma) / phi
    };
    let g = gamma - 1.0;
    if kappa < 0.0 {
        return if g <= SHAPE_TIE_TOL {
            HazardShape::Decreasing
        } else {
            HazardShape::UpThenDown(turning())
        };
    }
    let kg = kappa * gamma - 1.0;
    let g_eq = g.abs() <= SHAPE_TIE_TOL;
    let kg_eq = kg.abs() <= SHAPE_TIE_TOL;
    if g_eq && kg_eq {
        HazardShape::Constant
    } else if g < -SHAPE_TIE_TOL && kg > SHAPE_TIE_TOL {
        HazardShape::DownThenUp(turning())
    } else if g > SHAPE_TIE_TOL && kg < -SHAPE_TIE_TOL {
        HazardShape::UpThenDown(turning())
    } else if g <= SHAPE_TIE_TOL && kg <= SHAPE_TIE_TOL {
        HazardShape::Decreasing
    } else {
        HazardShape::Increasing
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(phi: f64, lambda: f64, gamma: f64, kappa: f64) -> ApgwParams {
        ApgwParams::new(phi, lambda, gamma, kappa).unwrap()
    }

    #[test]
    fn construction_rejects_invalid() {
        assert!(ApgwParams::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(ApgwParams::new(1.0, -1.0, 1.0, 1.0).is_err());
        assert!(ApgwParams::new(1.0, 1.0, f64::NAN, 1.0).is_err());
        assert!(ApgwParams::new(1.0, 1.0, 1.0, -1.0).is_err());
        assert!(ApgwParams::new(1.0, 1.0, 1.0, -0.999).unwrap().is_cure());
    }

    #[test]
    fn cum_hazard_table_rows() {
        assert!((p(1.0, 1.0, 2.0, 1.0).cum_hazard(3.0).unwrap() - 9.0).abs() < 1e-12);
        assert!((p(1.0, 1.0, 1.0, 0.0).cum_hazard(2.0).unwrap() - 3f64.ln()).abs() < 1e-15);
        let near = p(1.0, 1.0, 1.0, 1e-8).cum_hazard(2.0).unwrap();
        assert!((near - 3f64.ln()).abs() < 1e-6);
        let quad = p(1.0, 1.0, 1.0, 2.0).cum_hazard(1.0).unwrap();
        assert!((quad - (1.0 + 1.0 / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn cum_hazard_tends_to_zero_at_origin() {
        let q = p(0.7, 2.0, 1.5, 3.0);
        assert!(q.cum_hazard(1e-12).unwrap() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        let q = p(1.0, 1.0, 1.0, 1.0);
        assert!(matches!(q.cum_hazard(0.0), Err(Error::Domain(_))));
        assert!(matches!(q.hazard(-1.0), Err(Error::Domain(_))));
        assert!(matches!(q.quantile(1.0), Err(Error::Domain(_))));
        assert!(matches!(q.quantile(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn hazard_examples() {
        for &t in &[0.01, 1.0, 17.0] {
            assert!((p(1.0, 1.0, 1.0, 1.0).hazard(t).unwrap() - 1.0).abs() < 1e-14);
        }
        assert!((p(1.0, 1.0, 2.0, 1.0).hazard(2.0).unwrap() - 4.0).abs() < 1e-13);
    }

    #[test]
    fn hazard_matches_central_difference_at_quarter_kappa() {
        let q = p(1.0, 1.0, 2.0, 0.25);
        let h = 1e-6;
        let fd = (q.cum_hazard(1.0 + h).unwrap() - q.cum_hazard(1.0 - h).unwrap()) / (2.0 * h);
        let exact = q.hazard(1.0).unwrap();
        assert!(((exact - fd) / exact).abs() < 1e-6, "{exact} vs {fd}");
        // closed form: 2 (1 + 1/1.25)^(-0.75)
        assert!((exact - 2.0 * 1.8f64.powf(-0.75)).abs() < 1e-14);
    }

    #[test]
    fn unit_exponential_survivor_and_density() {
        let q = p(1.0, 1.0, 1.0, 1.0);
        let e1 = (-1.0f64).exp();
        assert!((q.survivor(1.0).unwrap() - e1).abs() < 1e-15);
        assert!((q.density(1.0).unwrap() - e1).abs() < 1e-15);
        assert!((q.quantile(1.0 - e1).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cure_probability_examples() {
        let e1 = (-1.0f64).exp();
        assert!((p(1.0, 1.0, 1.0, -0.5).cure_probability().unwrap() - e1).abs() < 1e-15);
        let two = p(3.0, 2.0, 0.4, -0.5).cure_probability().unwrap();
        assert!((two - (-2.0f64).exp()).abs() < 1e-15);
        let q = p(1.0, 1.0, 3.0, -0.2);
        let tail = q.survivor(1e30).unwrap();
        assert!((tail - q.cure_probability().unwrap()).abs() < 1e-6);
        assert!(matches!(
            p(1.0, 1.0, 1.0, 0.0).cure_probability(),
            Err(Error::NotCureModel { .. })
        ));
    }

    #[test]
    fn cure_probability_is_exp_of_minus_supremum() {
        // psi = kappa + 1; sup H_A = psi / (1 - psi)
        for &kappa in &[-0.9, -0.5, -0.1] {
            let q = p(1.3, 1.0, 0.8, kappa);
            let psi = kappa + 1.0;
            assert!((q.cum_hazard_supremum() - psi / (1.0 - psi)).abs() < 1e-12);
            assert!(
                (q.cure_probability().unwrap() - (-psi / (1.0 - psi)).exp()).abs() < 1e-15
            );
        }
    }

    #[test]
    fn quantile_on_cure_plateau_is_dedicated_error() {
        let q = p(1.0, 1.0, 2.0, -0.5);
        let cure = q.cure_probability().unwrap();
        assert!(q.quantile(1.0 - cure - 1e-6).is_ok());
        match q.quantile(1.0 - cure + 1e-6) {
            Err(Error::CurePlateau { max_u, .. }) => assert!((max_u - (1.0 - cure)).abs() < 1e-14),
            other => panic!("expected cure plateau error, got {other:?}"),
        }
    }

    #[test]
    fn quantile_log_logistic_median_against_bisection() {
        let q = p(1.0, 1.0, 2.0, 0.0);
        let (mut lo, mut hi) = (1e-6, 1e3);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if q.survivor(mid).unwrap() > 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = q.quantile(0.5).unwrap();
        assert!((t - 0.5 * (lo + hi)).abs() < 1e-8);
        // log-logistic median is 1 when phi = lambda = 1
        assert!((t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_table_rows() {
        assert_eq!(p(1.0, 1.0, 1.0, 1.0).classify_shape(), HazardShape::Constant);
        match p(1.0, 1.0, 0.5, 4.0).classify_shape() {
            HazardShape::DownThenUp(t) => assert!((t - 6.25).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        match p(1.0, 1.0, 2.0, 0.25).classify_shape() {
            HazardShape::UpThenDown(t) => assert!((t - 2.5f64.sqrt()).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert_eq!(p(1.0, 1.0, 0.5, 1.0).classify_shape(), HazardShape::Decreasing);
        assert_eq!(p(1.0, 1.0, 2.0, 1.0).classify_shape(), HazardShape::Increasing);
        // single ties resolve to the monotone neighbour
        assert_eq!(p(1.0, 1.0, 1.0, 3.0).classify_shape(), HazardShape::Increasing);
        assert_eq!(p(1.0, 1.0, 1.0, 0.5).classify_shape(), HazardShape::Decreasing);
        assert_eq!(p(1.0, 1.0, 0.5, 2.0).classify_shape(), HazardShape::Decreasing);
        assert_eq!(p(1.0, 1.0, 2.0, 0.5).classify_shape(), HazardShape::Increasing);
        // cure branch
        assert_eq!(p(1.0, 1.0, 0.9, -0.5).classify_shape(), HazardShape::Decreasing);
        assert!(matches!(
            p(1.0, 1.0, 1.5, -0.5).classify_shape(),
            HazardShape::UpThenDown(_)
        ));
    }

    #[test]
    fn turning_point_scales_with_phi() {
        let t1 = p(1.0, 1.0, 0.5, 4.0).classify_shape().turning_point().unwrap();
        let t2 = p(2.0, 1.0, 0.5, 4.0).classify_shape().turning_point().unwrap();
        assert!((t1 / t2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pgw_examples_and_rescaling() {
        assert!((pgw_cum_hazard(1.0, 1.0, 2.0).unwrap() - 3.0).abs() < 1e-14);
        assert_eq!(box_cox_transform(0.0, 3.7), 0.0);
        let (t, gamma, kappa) = (1.7f64, 1.4f64, 0.8f64);
        let lhs = p(1.0, 1.0, gamma, kappa).cum_hazard(t).unwrap();
        let rhs = (kappa + 1.0) / kappa
            * pgw_cum_hazard(t / (kappa + 1.0).powf(1.0 / gamma), gamma, kappa).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
        assert!(pgw_cum_hazard(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn kappa_derivative_matches_finite_difference() {
        for &(z, kappa) in &[(0.3, 0.0), (2.0, 1.0), (5.0, -0.6), (0.01, 7.0), (40.0, 0.2)] {
            let h = 1e-6;
            let fd = (baseline_cum_hazard(z, kappa + h) - baseline_cum_hazard(z, kappa - h))
                / (2.0 * h);
            let exact = baseline_cum_hazard_dkappa(z, kappa);
            assert!(
                (exact - fd).abs() < 1e-7 * (1.0 + exact.abs()),
                "z={z} kappa={kappa}: {exact} vs {fd}"
            );
        }
    }

    #[test]
    fn baseline_inverse_roundtrip() {
        for &kappa in &[-0.7, -1e-12, 0.0, 1e-9, 1.0, 50.0] {
            for &z in &[1e-6, 0.2, 3.0] {
                let back = baseline_inverse(baseline_cum_hazard(z, kappa), kappa);
                assert!(((back - z) / z).abs() < 1e-10, "kappa={kappa} z={z} back={back}");
            }
        }
    }
}
