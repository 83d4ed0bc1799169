//! Cancellation-free building blocks for the APGW closed forms.
//!
//! The baseline cumulative hazard `((k+1)/k) * ((1 + z/(k+1))^k - 1)` has a
//! removable singularity at `k = 0` and loses every significant digit when
//! evaluated literally for small `|k|`. Everything here is expressed through
//! `ln_1p`/`exp_m1` plus the relative forms below.

/// `(e^y - 1) / y`, equal to 1 at `y = 0`.
pub fn exprel(y: f64) -> f64 {
    if y.abs() < 1e-5 {
        // three terms leave an error below y^3/24 < 1e-16
        1.0 + y * (0.5 + y / 6.0)
    } else {
        y.exp_m1() / y
    }
}

/// `ln(1 + a) / a`, equal to 1 at `a = 0`.
pub fn log1prel(a: f64) -> f64 {
    if a.abs() < 1e-5 {
        1.0 + a * (-0.5 + a / 3.0)
    } else {
        a.ln_1p() / a
    }
}

/// `(e^y (y - 1) + 1) / y^2`, equal to 1/2 at `y = 0`.
///
/// Power series `sum_{k>=2} (k-1) y^(k-2) / k!` near the origin.
pub fn exp_second_rel(y: f64) -> f64 {
    if y.abs() < 0.05 {
        let mut term = 1.0; // y^(k-2) / k! * k!, accumulated below
        let mut sum = 0.0;
        let mut fact = 2.0; // k!
        for k in 2..14 {
            if k > 2 {
                term *= y;
                fact *= k as f64;
            }
            sum += (k as f64 - 1.0) * term / fact;
        }
        sum
    } else {
        (y.exp() * (y - 1.0) + 1.0) / (y * y)
    }
}
