//! Small statistical helpers for Monte Carlo checks.

use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{check_open_unit, Error, Result};

/// One-sided Clopper-Pearson upper confidence bound for a binomial rate.
pub fn clopper_pearson_upper(hits: u64, trials: u64, confidence: f64) -> Result<f64> {
    check_open_unit("confidence", confidence)?;
    if trials == 0 || hits > trials {
        return Err(Error::param(
            "trials",
            format!("need hits <= trials > 0, got {hits}/{trials}"),
        ));
    }
    if hits == trials {
        return Ok(1.0);
    }
    let b = Beta::new((hits + 1) as f64, (trials - hits) as f64)
        .map_err(|e| Error::param("trials", e.to_string()))?;
    Ok(b.inverse_cdf(confidence))
}

/// `c(alpha) = sqrt(-ln(alpha / 2) / 2)`, the two-sample KS coefficient.
pub fn ks_coefficient(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical: f64,
    pub n: usize,
    pub m: usize,
    pub reject: bool,
}

/// Two-sample Kolmogorov-Smirnov test at level `alpha`.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::param("samples", "both samples must be non-empty"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let (nf, mf) = (n as f64, m as f64);
    let critical = ks_coefficient(alpha) * ((nf + mf) / (nf * mf)).sqrt();
    Ok(KsResult {
        statistic: d,
        critical,
        n,
        m,
        reject: d > critical,
    })
}

/// Two-proportion comparison with a pooled binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProportionCheck {
    pub p1: f64,
    pub p2: f64,
    pub sigma: f64,
    pub z: f64,
}

impl ProportionCheck {
    pub fn new(x1: u64, n1: u64, x2: u64, n2: u64) -> Self {
        let (p1, p2) = (x1 as f64 / n1 as f64, x2 as f64 / n2 as f64);
        let p = (x1 + x2) as f64 / (n1 + n2) as f64;
        let sigma = (p * (1.0 - p) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
        let z = if sigma > 0.0 {
            (p1 - p2).abs() / sigma
        } else {
            0.0
        };
        ProportionCheck { p1, p2, sigma, z }
    }

    pub fn within(&self, k_sigma: f64) -> bool {
        self.z <= k_sigma
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clopper_pearson_values() {
        // Zero hits: 1 - alpha^(1/n).
        let u = clopper_pearson_upper(0, 1000, 0.99).unwrap();
        assert!((u - (1.0 - 0.01f64.powf(1.0 / 1000.0))).abs() < 1e-9);
        let u = clopper_pearson_upper(10, 1000, 0.99).unwrap();
        assert!(u > 0.01 && u < 0.022, "{u}");
        assert_eq!(clopper_pearson_upper(5, 5, 0.99).unwrap(), 1.0);
        assert!(clopper_pearson_upper(6, 5, 0.99).is_err());
    }

    #[test]
    fn ks_coefficient_at_one_percent() {
        assert!((ks_coefficient(0.01) - 1.628).abs() < 1e-3);
    }

    #[test]
    fn ks_detects_shift_only() {
        let a: Vec<f64> = (0..2000).map(|i| i as f64 / 2000.0).collect();
        let b: Vec<f64> = (0..1500).map(|i| (i as f64 + 0.5) / 1500.0).collect();
        assert!(!ks_two_sample(&a, &b, 0.01).unwrap().reject);
        let c: Vec<f64> = b.iter().map(|x| x + 0.2).collect();
        let r = ks_two_sample(&a, &c, 0.01).unwrap();
        assert!(r.reject);
        assert!((r.statistic - 0.2).abs() < 0.01);
    }

    #[test]
    fn proportion_z() {
        let c = ProportionCheck::new(500, 1000, 500, 1000);
        assert_eq!(c.z, 0.0);
        let c = ProportionCheck::new(600, 1000, 500, 1000);
        assert!(!c.within(3.0));
        assert!(ProportionCheck::new(0, 10, 0, 10).within(3.0));
    }
}
