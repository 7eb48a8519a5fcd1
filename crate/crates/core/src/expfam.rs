//! Exponential-family kernels for the normal, binomial and Poisson families.
//!
//! Every family is used with its canonical link, so `dμ/dθ` equals the unit
//! variance function and the IRLS weights simplify accordingly. Binomial
//! means live on the per-trial proportion scale; the count scale only
//! appears when a likelihood is evaluated.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GlmfError, Result};

/// Logistic evaluations saturate beyond this magnitude of the natural parameter.
pub const LOGISTIC_SATURATION: f64 = 30.0;
const POISSON_SATURATION: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Normal,
    Binomial,
    Poisson,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::Binomial => "binomial",
            Family::Poisson => "poisson",
        }
    }

    pub fn is_identity_link(self) -> bool {
        matches!(self, Family::Normal)
    }

    /// Canonical link `g(μ)`: identity, logit or log.
    pub fn link(self, mu: f64) -> Result<f64> {
        match self {
            Family::Normal => {
                if mu.is_finite() {
                    Ok(mu)
                } else {
                    Err(self.domain(mu))
                }
            }
            Family::Binomial => {
                if mu > 0.0 && mu < 1.0 {
                    Ok((mu / (1.0 - mu)).ln())
                } else {
                    Err(self.domain(mu))
                }
            }
            Family::Poisson => {
                if mu > 0.0 && mu.is_finite() {
                    Ok(mu.ln())
                } else {
                    Err(self.domain(mu))
                }
            }
        }
    }

    /// Inverse canonical link `b'(θ)`.
    pub fn inverse_link(self, theta: f64) -> f64 {
        match self {
            Family::Normal => theta,
            Family::Binomial => logistic(theta),
            Family::Poisson => theta.min(POISSON_SATURATION).exp(),
        }
    }

    /// Unit variance `b''(θ)` expressed in terms of the mean. For the normal
    /// family this is the dispersion itself.
    pub fn variance(self, mu: f64, dispersion: f64) -> f64 {
        match self {
            Family::Normal => dispersion,
            Family::Binomial => mu * (1.0 - mu),
            Family::Poisson => mu,
        }
    }

    /// `dμ/dθ` under the canonical link.
    pub fn mean_derivative(self, mu: f64) -> f64 {
        match self {
            Family::Normal => 1.0,
            Family::Binomial => mu * (1.0 - mu),
            Family::Poisson => mu,
        }
    }

    /// Cumulant function `b(θ)` per unit trial.
    pub fn cumulant(self, theta: f64) -> f64 {
        match self {
            Family::Normal => 0.5 * theta * theta,
            Family::Binomial => softplus(theta),
            Family::Poisson => theta.min(POISSON_SATURATION).exp(),
        }
    }

    fn domain(self, value: f64) -> GlmfError {
        GlmfError::MeanDomain {
            family: self.name(),
            value,
        }
    }

    fn support(self, value: f64) -> GlmfError {
        GlmfError::Support {
            family: self.name(),
            value,
        }
    }

    /// Exact log density (or mass) of `x` at natural parameter `theta`,
    /// including the base-measure term. `trials` is only read for the
    /// binomial family, where `x` is a count; `dispersion` only for normal.
    pub fn log_density(self, x: f64, theta: f64, trials: f64, dispersion: f64) -> Result<f64> {
        match self {
            Family::Normal => {
                if !x.is_finite() || !(dispersion > 0.0) {
                    return Err(self.support(x));
                }
                let r = x - theta;
                Ok(-0.5 * (2.0 * PI * dispersion).ln() - r * r / (2.0 * dispersion))
            }
            Family::Binomial => {
                let n = as_count(trials).ok_or_else(|| self.support(trials))?;
                let k = as_count(x).ok_or_else(|| self.support(x))?;
                if k > n {
                    return Err(self.support(x));
                }
                let theta = theta.clamp(-LOGISTIC_SATURATION, LOGISTIC_SATURATION);
                Ok(ln_choose(n, k) + x * theta - trials * softplus(theta))
            }
            Family::Poisson => {
                let k = as_count(x).ok_or_else(|| self.support(x))?;
                Ok(x * theta - self.cumulant(theta) - ln_factorial(k))
            }
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How the dispersion of a family is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "value")]
pub enum Dispersion {
    /// Held at the given value.
    Fixed(f64),
    /// Re-estimated by maximum likelihood while fitting (normal only).
    Estimated,
}

/// A family together with its dispersion handling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub family: Family,
    pub dispersion: Dispersion,
}

impl DistributionSpec {
    pub fn binomial() -> Self {
        Self {
            family: Family::Binomial,
            dispersion: Dispersion::Fixed(1.0),
        }
    }

    pub fn poisson() -> Self {
        Self {
            family: Family::Poisson,
            dispersion: Dispersion::Fixed(1.0),
        }
    }

    pub fn normal(variance: f64) -> Self {
        Self {
            family: Family::Normal,
            dispersion: Dispersion::Fixed(variance),
        }
    }

    pub fn normal_estimated() -> Self {
        Self {
            family: Family::Normal,
            dispersion: Dispersion::Estimated,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.family, self.dispersion) {
            (Family::Normal, Dispersion::Fixed(v)) if !(v > 0.0 && v.is_finite()) => Err(
                GlmfError::InvalidConfig(format!("normal dispersion must be positive, got {v}")),
            ),
            (Family::Binomial | Family::Poisson, Dispersion::Estimated) => {
                Err(GlmfError::InvalidConfig(format!(
                    "dispersion of the {} family is fixed at 1",
                    self.family
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn fixed_dispersion(&self) -> Option<f64> {
        match self.dispersion {
            Dispersion::Fixed(v) => Some(v),
            Dispersion::Estimated => None,
        }
    }
}

pub fn link(family: Family, mu: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = mu.clone();
    for v in out.iter_mut() {
        *v = family.link(*v)?;
    }
    Ok(out)
}

pub fn inverse_link(family: Family, theta: &DMatrix<f64>) -> DMatrix<f64> {
    theta.map(|t| family.inverse_link(t))
}

pub fn variance_fn(family: Family, mu: &DMatrix<f64>, dispersion: f64) -> DMatrix<f64> {
    mu.map(|m| family.variance(m, dispersion))
}

/// Numerically stable logistic function, saturating at the configured bound.
pub fn logistic(theta: f64) -> f64 {
    let t = theta.clamp(-LOGISTIC_SATURATION, LOGISTIC_SATURATION);
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^θ)` without overflow.
pub fn softplus(theta: f64) -> f64 {
    if theta > 0.0 {
        theta + (-theta).exp().ln_1p()
    } else {
        theta.exp().ln_1p()
    }
}

/// Binomial log-pmf on the probability scale, `p` strictly inside (0, 1).
pub fn binomial_log_pmf(x: f64, trials: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(GlmfError::Probability(p));
    }
    let n = as_count(trials).ok_or(GlmfError::Support {
        family: "binomial",
        value: trials,
    })?;
    let k = as_count(x).ok_or(GlmfError::Support {
        family: "binomial",
        value: x,
    })?;
    if k > n {
        return Err(GlmfError::Support {
            family: "binomial",
            value: x,
        });
    }
    let mut ll = ln_choose(n, k);
    if k > 0 {
        ll += x * p.ln();
    }
    if n > k {
        ll += (trials - x) * (-p).ln_1p();
    }
    Ok(ll)
}

fn as_count(v: f64) -> Option<u64> {
    if v.is_finite() && v >= 0.0 && (v - v.round()).abs() < 1e-9 {
        Some(v.round() as u64)
    } else {
        None
    }
}

/// `ln C(n, k)`, summed term by term over the shorter side.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (1..=k)
        .map(|i| ((n - k + i) as f64 / i as f64).ln())
        .sum()
}

pub fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_links_at_reference_points() {
        assert_eq!(Family::Binomial.link(0.5).unwrap(), 0.0);
        assert_eq!(Family::Normal.link(1.7).unwrap(), 1.7);
        assert_eq!(Family::Poisson.link(1.0).unwrap(), 0.0);
        assert_eq!(Family::Binomial.inverse_link(0.0), 0.5);
        assert_eq!(Family::Poisson.inverse_link(0.0), 1.0);
    }

    #[test]
    fn logit_rejects_boundary_proportions() {
        assert!(Family::Binomial.link(0.0).is_err());
        assert!(Family::Binomial.link(1.0).is_err());
        assert!(Family::Poisson.link(0.0).is_err());
    }

    #[test]
    fn logistic_approaches_one_monotonically() {
        let mut prev = 0.0;
        for t in 0..80 {
            let p = Family::Binomial.inverse_link(t as f64);
            assert!(p >= prev && p <= 1.0);
            prev = p;
        }
        assert!(1.0 - prev < 1e-13);
        assert!(Family::Binomial.inverse_link(-1e6) > 0.0);
    }

    #[test]
    fn variance_functions() {
        assert_eq!(Family::Normal.variance(3.0, 0.09), 0.09);
        assert_eq!(Family::Binomial.variance(0.5, 1.0), 0.25);
        assert_eq!(Family::Poisson.variance(2.0, 1.0), 2.0);
    }

    #[test]
    fn log_density_examples() {
        let ll = Family::Binomial.log_density(1.0, 0.0, 2.0, 1.0).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-12);
        let ll = binomial_log_pmf(5.0, 5.0, 0.999).unwrap();
        assert!((ll - 5.0 * 0.999f64.ln()).abs() < 1e-12);
        let ll = Family::Normal.log_density(0.3, 0.3, 1.0, 1.0).unwrap();
        assert!((ll + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn invalid_support_is_rejected() {
        assert!(Family::Binomial.log_density(3.0, 0.0, 2.0, 1.0).is_err());
        assert!(Family::Binomial.log_density(0.5, 0.0, 2.0, 1.0).is_err());
        assert!(Family::Poisson.log_density(-1.0, 0.0, 1.0, 1.0).is_err());
        assert!(binomial_log_pmf(1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn binomial_mass_sums_to_one() {
        for n in 1..=10u64 {
            for &theta in &[-2.0, -0.3, 0.0, 0.8, 3.1] {
                let total: f64 = (0..=n)
                    .map(|k| {
                        Family::Binomial
                            .log_density(k as f64, theta, n as f64, 1.0)
                            .unwrap()
                            .exp()
                    })
                    .sum();
                assert!((total - 1.0).abs() < 1e-12, "n={n} theta={theta} total={total}");
            }
        }
    }

    #[test]
    fn poisson_log_density_matches_pmf() {
        // e^{-2} 2^3 / 3!
        let expected = (-2.0f64).exp() * 8.0 / 6.0;
        let ll = Family::Poisson.log_density(3.0, 2.0f64.ln(), 1.0, 1.0).unwrap();
        assert!((ll.exp() - expected).abs() < 1e-14);
    }

    #[test]
    fn spec_validation() {
        assert!(DistributionSpec::normal(0.0).validate().is_err());
        assert!(DistributionSpec::normal(0.09).validate().is_ok());
        assert!(DistributionSpec {
            family: Family::Binomial,
            dispersion: Dispersion::Estimated
        }
        .validate()
        .is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn link_round_trip(p in 1e-9f64..(1.0 - 1e-9), lam in 1e-6f64..1e6, x in -1e3f64..1e3) {
                let b = Family::Binomial;
                prop_assert!((b.inverse_link(b.link(p).unwrap()) - p).abs() < 1e-12);
                let po = Family::Poisson;
                prop_assert!((po.inverse_link(po.link(lam).unwrap()) - lam).abs() <= 1e-12 * lam.max(1.0));
                prop_assert_eq!(Family::Normal.inverse_link(Family::Normal.link(x).unwrap()), x);
            }

            #[test]
            fn derivative_of_inverse_link_is_variance(theta in -8.0f64..8.0) {
                let h = 1e-5;
                for fam in [Family::Binomial, Family::Poisson] {
                    let fd = (fam.inverse_link(theta + h) - fam.inverse_link(theta - h)) / (2.0 * h);
                    let mu = fam.inverse_link(theta);
                    let v = fam.variance(mu, 1.0);
                    prop_assert!((fd - v).abs() <= 1e-6 * v.max(1.0), "{fam}: fd={fd} v={v}");
                }
            }
        }
    }
}
