//! Standard normal CDF and quantile.
//!
//! Both go through `erfc` and its inverse, so upper tails keep full
//! relative precision.

use std::f64::consts::SQRT_2;

use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

/// `Phi^{-1}(p)` for `p` in the open unit interval, with no range check.
fn quantile(p: f64) -> f64 {
    if p < 0.5 {
        -SQRT_2 * erfc_inv(2.0 * p)
    } else {
        SQRT_2 * erfc_inv(2.0 * (1.0 - p))
    }
}

/// Standard normal quantile `Phi^{-1}(p)`.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::param("p", format!("must lie in (0, 1), got {p}")));
    }
    Ok(quantile(p))
}

/// `Phi^{-1}(1 - q)` evaluated without forming `1 - q`, so tiny tail masses
/// such as `delta / T` keep their precision.
pub fn normal_upper_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::param("q", format!("must lie in (0, 1), got {q}")));
    }
    Ok(SQRT_2 * erfc_inv(2.0 * q))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal survival function `1 - Phi(x)`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}
