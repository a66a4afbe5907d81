//! zCDP bookkeeping: composition, conversion to (epsilon, delta)-DP, and
//! calibration of the noise scale from a target budget.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, Error, Result};

/// A `delta_event`-approximate `rho`-zCDP guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZcdpBudget {
    pub rho: f64,
    pub delta_event: f64,
}

impl ZcdpBudget {
    pub const ZERO: ZcdpBudget = ZcdpBudget {
        rho: 0.0,
        delta_event: 0.0,
    };

    pub fn new(rho: f64, delta_event: f64) -> Result<Self> {
        if !(rho >= 0.0) {
            return Err(Error::param("rho", format!("must be >= 0, got {rho}")));
        }
        if !(0.0..1.0).contains(&delta_event) {
            return Err(Error::param(
                "delta_event",
                format!("must lie in [0, 1), got {delta_event}"),
            ));
        }
        Ok(ZcdpBudget { rho, delta_event })
    }

    /// Pure zCDP, no approximate mass.
    pub fn pure(rho: f64) -> Result<Self> {
        Self::new(rho, 0.0)
    }
}

/// An `(epsilon, delta)`-DP guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl DpBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::param(
                "epsilon",
                format!("must be >= 0, got {epsilon}"),
            ));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::param(
                "delta",
                format!("must lie in [0, 1), got {delta}"),
            ));
        }
        Ok(DpBudget { epsilon, delta })
    }
}

/// Result of [`compose`]. When the summed `delta_event` reaches 1 it is
/// clamped to 1 and `saturated` is set; the guarantee is then vacuous but
/// the caller keeps running.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Composition {
    pub budget: ZcdpBudget,
    pub saturated: bool,
}

/// Sequential composition: both parameters add.
pub fn compose(budgets: &[ZcdpBudget]) -> Result<Composition> {
    if budgets.is_empty() {
        return Err(Error::EmptyComposition);
    }
    let rho = budgets.iter().map(|b| b.rho).sum();
    let delta: f64 = budgets.iter().map(|b| b.delta_event).sum();
    let saturated = delta >= 1.0;
    Ok(Composition {
        budget: ZcdpBudget {
            rho,
            delta_event: if saturated { 1.0 } else { delta },
        },
        saturated,
    })
}

/// `epsilon(rho, delta') = rho + 2 sqrt(rho ln(1/delta'))`.
pub fn epsilon_of(rho: f64, delta_prime: f64) -> f64 {
    rho + 2.0 * (rho * (1.0 / delta_prime).ln()).sqrt()
}

/// Convert to `(epsilon(rho, delta'), delta_event + delta')`-DP.
pub fn zcdp_to_dp(b: ZcdpBudget, delta_prime: f64) -> Result<DpBudget> {
    check_open_unit("delta_prime", delta_prime)?;
    let delta = b.delta_event + delta_prime;
    if delta >= 1.0 {
        return Err(Error::param(
            "delta_prime",
            format!("delta_event + delta_prime = {delta} is not below 1"),
        ));
    }
    Ok(DpBudget {
        epsilon: epsilon_of(b.rho, delta_prime),
        delta,
    })
}

/// Largest `rho` whose conversion at `delta_prime` meets `target.epsilon`.
///
/// Closed form: with `L = ln(1/delta')`, `sqrt(rho) = sqrt(L + eps) - sqrt(L)`,
/// evaluated as `eps / (sqrt(L + eps) + sqrt(L))` to avoid cancellation.
pub fn calibrate_rho(target: DpBudget, delta_prime: f64) -> Result<f64> {
    if !(target.epsilon > 0.0) || !target.epsilon.is_finite() {
        return Err(Error::param(
            "epsilon",
            format!("must be positive and finite, got {}", target.epsilon),
        ));
    }
    if !(delta_prime > 0.0 && delta_prime <= target.delta && delta_prime < 1.0) {
        return Err(Error::param(
            "delta_prime",
            format!("must lie in (0, {}], got {delta_prime}", target.delta),
        ));
    }
    let l = (1.0 / delta_prime).ln();
    let root = target.epsilon / ((l + target.epsilon).sqrt() + l.sqrt());
    Ok(root * root)
}

/// Noise scale and privacy parameters shared by a mechanism run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub tau: f64,
    pub delta: f64,
    pub delta_prime: f64,
}

impl PrivacyParams {
    pub fn new(tau: f64, delta: f64, delta_prime: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::param(
                "tau",
                format!("must be positive (use PrivacyParams::noiseless for tau = 0), got {tau}"),
            ));
        }
        check_open_unit("delta", delta)?;
        check_open_unit("delta_prime", delta_prime)?;
        Ok(PrivacyParams {
            tau,
            delta,
            delta_prime,
        })
    }

    /// `tau = 0`. Only for testing exactness; the budget is infinite.
    pub fn noiseless(delta: f64, delta_prime: f64) -> Result<Self> {
        check_open_unit("delta", delta)?;
        check_open_unit("delta_prime", delta_prime)?;
        Ok(PrivacyParams {
            tau: 0.0,
            delta,
            delta_prime,
        })
    }

    pub fn is_noiseless(&self) -> bool {
        self.tau == 0.0
    }
}

/// Which quadrant of the known/unknown x restricted/unrestricted grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrant {
    /// Known domain, at most `delta0` items per event.
    KnownRestricted { delta0: usize },
    /// Known domain, arbitrary events, top-`k` per cell.
    KnownUnrestricted { k: usize },
    /// Unknown domain, at most `delta0` items per event.
    UnknownRestricted { delta0: usize },
    /// Unknown domain, arbitrary events, top-`k` per cell.
    UnknownUnrestricted { k: usize },
}

impl Quadrant {
    pub fn code(&self) -> &'static str {
        match self {
            Quadrant::KnownRestricted { .. } => "kr",
            Quadrant::KnownUnrestricted { .. } => "ku",
            Quadrant::UnknownRestricted { .. } => "ur",
            Quadrant::UnknownUnrestricted { .. } => "uu",
        }
    }

    pub fn domain_known(&self) -> bool {
        matches!(
            self,
            Quadrant::KnownRestricted { .. } | Quadrant::KnownUnrestricted { .. }
        )
    }

    pub fn restricted(&self) -> bool {
        matches!(
            self,
            Quadrant::KnownRestricted { .. } | Quadrant::UnknownRestricted { .. }
        )
    }

    /// Build from a two-letter code and the matching size parameter.
    pub fn from_code(code: &str, delta0: usize, k: usize) -> Result<Self> {
        match code {
            "kr" => Ok(Quadrant::KnownRestricted { delta0 }),
            "ku" => Ok(Quadrant::KnownUnrestricted { k }),
            "ur" => Ok(Quadrant::UnknownRestricted { delta0 }),
            "uu" => Ok(Quadrant::UnknownUnrestricted { k }),
            other => Err(Error::Usage(format!(
                "unknown quadrant `{other}` (expected kr, ku, ur or uu)"
            ))),
        }
    }
}

/// Mechanism descriptor for budget lookups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Mechanism {
    BinMech,
    KnownGauss { delta0: usize },
    KnownGumbel { k: usize },
    KnownBase { delta0: usize },
    UnkGauss { delta0: usize },
    UnkGumbel { k: usize, k_bar: usize },
    UnkBase { delta0: usize },
    SparseGumb { k: usize },
    Meta { quadrant: Quadrant },
}

impl Mechanism {
    /// `c` such that the zCDP parameter is `c / tau^2`.
    pub fn rho_coefficient(&self) -> f64 {
        match *self {
            Mechanism::BinMech => 0.5,
            Mechanism::KnownGauss { delta0 }
            | Mechanism::KnownBase { delta0 }
            | Mechanism::UnkGauss { delta0 }
            | Mechanism::UnkBase { delta0 } => delta0 as f64 / 2.0,
            Mechanism::KnownGumbel { k } | Mechanism::UnkGumbel { k, .. } => k as f64,
            Mechanism::SparseGumb { k } => (2 * k + 4) as f64 / 2.0,
            Mechanism::Meta { quadrant } => match quadrant {
                Quadrant::KnownRestricted { delta0 } | Quadrant::UnknownRestricted { delta0 } => {
                    delta0 as f64 / 2.0
                }
                Quadrant::KnownUnrestricted { k } | Quadrant::UnknownUnrestricted { k } => k as f64,
            },
        }
    }

    /// `m` such that the approximate mass is `m * delta`.
    pub fn delta_multiplier(&self) -> f64 {
        match *self {
            Mechanism::UnkGauss { delta0 } | Mechanism::UnkBase { delta0 } => delta0 as f64,
            Mechanism::UnkGumbel { k_bar, .. } => k_bar as f64,
            Mechanism::Meta { quadrant } => match quadrant {
                Quadrant::UnknownRestricted { delta0 } => delta0 as f64,
                Quadrant::UnknownUnrestricted { k } => 2.0 * k as f64,
                _ => 0.0,
            },
            _ => 0.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mechanism::BinMech => "bin-mech",
            Mechanism::KnownGauss { .. } => "known-gauss",
            Mechanism::KnownGumbel { .. } => "known-gumbel",
            Mechanism::KnownBase { .. } => "known-base",
            Mechanism::UnkGauss { .. } => "unk-gauss",
            Mechanism::UnkGumbel { .. } => "unk-gumbel",
            Mechanism::UnkBase { .. } => "unk-base",
            Mechanism::SparseGumb { .. } => "sparse-gumb",
            Mechanism::Meta { .. } => "meta",
        }
    }

    /// Build a descriptor from a CLI name and the size parameters. Only the
    /// parameters the mechanism uses are read.
    pub fn from_name(name: &str, args: MechanismArgs) -> Result<Self> {
        let MechanismArgs {
            delta0,
            k,
            k_bar,
            quadrant,
        } = args;
        Ok(match name {
            "bin-mech" => Mechanism::BinMech,
            "known-gauss" => Mechanism::KnownGauss { delta0 },
            "known-gumbel" => Mechanism::KnownGumbel { k },
            "known-base" => Mechanism::KnownBase { delta0 },
            "unk-gauss" => Mechanism::UnkGauss { delta0 },
            "unk-gumbel" => Mechanism::UnkGumbel { k, k_bar },
            "unk-base" => Mechanism::UnkBase { delta0 },
            "sparse-gumb" => Mechanism::SparseGumb { k },
            "meta" => Mechanism::Meta {
                quadrant: Quadrant::from_code(quadrant.as_deref().unwrap_or("kr"), delta0, k)?,
            },
            other => return Err(Error::Usage(format!("unknown mechanism `{other}`"))),
        })
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Size parameters for [`Mechanism::from_name`].
#[derive(Debug, Clone, Default)]
pub struct MechanismArgs {
    pub delta0: usize,
    pub k: usize,
    pub k_bar: usize,
    pub quadrant: Option<String>,
}

impl FromStr for Quadrant {
    type Err = Error;

    /// Parses a bare code with unit size parameters.
    fn from_str(s: &str) -> Result<Self> {
        Quadrant::from_code(s, 1, 1)
    }
}

/// Closed-form budget of `mech` run at `params`.
pub fn mechanism_budget(mech: Mechanism, params: &PrivacyParams) -> ZcdpBudget {
    let tau2 = params.tau * params.tau;
    let coef = mech.rho_coefficient();
    let rho = if coef == 0.0 { 0.0 } else { coef / tau2 };
    ZcdpBudget {
        rho,
        delta_event: mech.delta_multiplier() * params.delta,
    }
}

/// Noise scale and parameter split that meet a total `(epsilon, delta)` target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub mechanism: Mechanism,
    pub tau: f64,
    pub rho: f64,
    /// Threshold mass parameter passed to the mechanism; 0 when unused.
    pub delta: f64,
    pub delta_prime: f64,
    pub budget: ZcdpBudget,
    pub dp: DpBudget,
}

/// Solve for `tau` so that `mech` meets `target`.
///
/// When the mechanism carries an approximate mass `m * delta`, half of
/// `target.delta` goes to it and half to the conversion slack `delta'`.
/// Otherwise all of it is conversion slack.
pub fn calibrate(target: DpBudget, mech: Mechanism) -> Result<Calibration> {
    check_open_unit("delta", target.delta)?;
    let mult = mech.delta_multiplier();
    let (delta_prime, delta) = if mult > 0.0 {
        (target.delta / 2.0, target.delta / (2.0 * mult))
    } else {
        (target.delta, 0.0)
    };
    let rho = calibrate_rho(target, delta_prime)?;
    let coef = mech.rho_coefficient();
    if coef == 0.0 {
        return Err(Error::Usage(format!(
            "mechanism `{mech}` has a zero size parameter; nothing to calibrate"
        )));
    }
    let tau = (coef / rho).sqrt();
    let budget = ZcdpBudget {
        rho,
        delta_event: mult * delta,
    };
    let dp = DpBudget {
        epsilon: epsilon_of(rho, delta_prime),
        delta: budget.delta_event + delta_prime,
    };
    Ok(Calibration {
        mechanism: mech,
        tau,
        rho,
        delta,
        delta_prime,
        budget,
        dp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn z(rho: f64, d: f64) -> ZcdpBudget {
        ZcdpBudget::new(rho, d).unwrap()
    }

    #[test]
    fn compose_examples() {
        let c = compose(&[z(0.5, 0.0), z(0.25, 0.0)]).unwrap();
        assert_eq!(c.budget, z(0.75, 0.0));
        assert!(!c.saturated);
        assert_eq!(compose(&[z(0.0, 0.0)]).unwrap().budget, ZcdpBudget::ZERO);
        let c = compose(&[z(0.1, 1e-6), z(0.2, 2e-6)]).unwrap().budget;
        assert_relative_eq!(c.rho, 0.3, max_relative = 1e-15);
        assert_relative_eq!(c.delta_event, 3e-6, max_relative = 1e-15);
        assert!(matches!(compose(&[]), Err(Error::EmptyComposition)));
    }

    #[test]
    fn compose_saturates() {
        let c = compose(&[z(1.0, 0.6), z(1.0, 0.7)]).unwrap();
        assert!(c.saturated);
        assert_eq!(c.budget.delta_event, 1.0);
        assert_eq!(c.budget.rho, 2.0);
    }

    #[test]
    fn conversion_examples() {
        assert_eq!(zcdp_to_dp(ZcdpBudget::ZERO, 0.3).unwrap().epsilon, 0.0);
        // 60-digit reference value.
        let e = zcdp_to_dp(z(0.5, 0.0), 1e-6).unwrap();
        assert_relative_eq!(e.epsilon, 5.756_521_769_756_932, max_relative = 1e-14);
        assert_eq!(e.delta, 1e-6);
        let e = zcdp_to_dp(z(1.0, 0.0), (-1.0f64).exp()).unwrap();
        assert_relative_eq!(e.epsilon, 3.0, max_relative = 1e-15);
        assert!(zcdp_to_dp(z(1.0, 0.0), 0.0).is_err());
        assert!(zcdp_to_dp(z(1.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn calibration_examples() {
        let e1 = (-1.0f64).exp();
        let rho = calibrate_rho(DpBudget::new(3.0, e1).unwrap(), e1).unwrap();
        assert_relative_eq!(rho, 1.0, max_relative = 1e-14);
        let rho = calibrate_rho(DpBudget::new(5.756_521_769_756_932, 1e-6).unwrap(), 1e-6).unwrap();
        assert_relative_eq!(rho, 0.5, max_relative = 1e-12);
        let eps = 1e-4;
        let rho = calibrate_rho(DpBudget::new(eps, 1e-6).unwrap(), 1e-6).unwrap();
        let asym = eps * eps / (4.0 * (1e6f64).ln());
        assert_relative_eq!(rho, asym, max_relative = 1e-3);
        assert!(calibrate_rho(DpBudget::new(0.0, 1e-6).unwrap(), 1e-6).is_err());
        assert!(calibrate_rho(DpBudget::new(1.0, 1e-6).unwrap(), 1e-5).is_err());
    }

    #[test]
    fn calibration_round_trips_on_grid() {
        for i in 0..=50 {
            let rho = 1e-4 * (1e5f64).powf(f64::from(i) / 50.0);
            for j in 0..=22 {
                let dp = 1e-12 * (1e11f64).powf(f64::from(j) / 22.0);
                let eps = zcdp_to_dp(z(rho, 0.0), dp).unwrap().epsilon;
                let back = calibrate_rho(DpBudget::new(eps, dp).unwrap(), dp).unwrap();
                assert_relative_eq!(back, rho, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn closed_form_budgets() {
        let p = PrivacyParams::new(1.0, 0.01, 1e-6).unwrap();
        assert_eq!(mechanism_budget(Mechanism::BinMech, &p), z(0.5, 0.0));
        assert_eq!(
            mechanism_budget(Mechanism::KnownBase { delta0: 4 }, &p),
            z(2.0, 0.0)
        );
        assert_eq!(
            mechanism_budget(Mechanism::SparseGumb { k: 1 }, &p),
            z(3.0, 0.0)
        );
        let ug = mechanism_budget(Mechanism::UnkGauss { delta0: 3 }, &p);
        assert_eq!(ug, z(1.5, 0.03));
    }

    #[test]
    fn calibrate_splits_delta() {
        let target = DpBudget::new(1.0, 1e-6).unwrap();
        let c = calibrate(target, Mechanism::UnkBase { delta0: 2 }).unwrap();
        assert_eq!(c.delta_prime, 5e-7);
        assert_eq!(c.delta, 2.5e-7);
        assert_relative_eq!(c.dp.epsilon, 1.0, max_relative = 1e-12);
        assert_relative_eq!(c.dp.delta, 1e-6, max_relative = 1e-12);
        let p = PrivacyParams::new(c.tau, c.delta, c.delta_prime).unwrap();
        let b = mechanism_budget(c.mechanism, &p);
        assert_relative_eq!(b.rho, c.rho, max_relative = 1e-12);

        let c = calibrate(target, Mechanism::BinMech).unwrap();
        assert_eq!(c.delta_prime, 1e-6);
        assert_eq!(c.delta, 0.0);
    }

    #[test]
    fn names_round_trip() {
        for name in [
            "bin-mech",
            "known-gauss",
            "known-gumbel",
            "known-base",
            "unk-gauss",
            "unk-gumbel",
            "unk-base",
            "sparse-gumb",
            "meta",
        ] {
            let m = Mechanism::from_name(name, MechanismArgs::default()).unwrap();
            assert_eq!(m.name(), name);
        }
        assert!(Mechanism::from_name("laplace", MechanismArgs::default()).is_err());
        assert!("zz".parse::<Quadrant>().is_err());
    }

    #[test]
    fn params_validation() {
        assert!(PrivacyParams::new(0.0, 0.1, 0.1).is_err());
        assert!(PrivacyParams::noiseless(0.1, 0.1).unwrap().is_noiseless());
        assert!(PrivacyParams::new(1.0, 0.0, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn compose_is_commutative_and_associative(
            a in (0.0f64..10.0, 0.0f64..0.3),
            b in (0.0f64..10.0, 0.0f64..0.3),
            c in (0.0f64..10.0, 0.0f64..0.3),
        ) {
            let (a, b, c) = (z(a.0, a.1), z(b.0, b.1), z(c.0, c.1));
            let abc = compose(&[a, b, c]).unwrap().budget;
            let cba = compose(&[c, b, a]).unwrap().budget;
            let ab_c = compose(&[compose(&[a, b]).unwrap().budget, c]).unwrap().budget;
            prop_assert!((abc.rho - cba.rho).abs() <= 1e-12);
            prop_assert!((abc.rho - ab_c.rho).abs() <= 1e-12);
            prop_assert!((abc.delta_event - ab_c.delta_event).abs() <= 1e-15);
        }

        #[test]
        fn epsilon_is_monotone(rho in 1e-4f64..10.0, drho in 0.0f64..1.0, dp in 1e-12f64..0.1, shrink in 1.0f64..100.0) {
            let base = epsilon_of(rho, dp);
            prop_assert!(epsilon_of(rho + drho, dp) >= base);
            prop_assert!(epsilon_of(rho, dp / shrink) >= base);
        }
    }
}
