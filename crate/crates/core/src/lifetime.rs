//! Parametric lifetime families evaluated as pure functions.
//!
//! The Logistic-Exponential (LE) law has
//! `F(t) = 1 - 1 / (1 + (e^{λt} - 1)^α)`. Writing `u = α ln(e^{λt} - 1)` gives
//! `F = 1 / (1 + e^{-u})`, which is how it is evaluated here: no power of a large
//! exponential is ever formed, so `λt` well beyond 700 stays finite.
//!
//! Weibull is parameterised with rate `λ`: `F(t) = 1 - exp(-(λt)^α)`.
//! Gamma is parameterised with shape `α` and rate `λ`: `F(t) = P(α, λt)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// Survival below this is treated as numerically zero by [`hazard`].
pub const SURVIVAL_FLOOR: f64 = 1e-300;

/// Shape `alpha` (dimensionless) and scale `lambda` (1/time) of a two-parameter family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeScale {
    pub alpha: f64,
    pub lambda: f64,
}

impl ShapeScale {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        let p = ShapeScale { alpha, lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Domain(format!("shape must be finite and > 0, got {}", self.alpha)));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::Domain(format!("scale must be finite and > 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    LogisticExponential,
    Weibull,
    Gamma,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::LogisticExponential, Family::Weibull, Family::Gamma];

    pub fn short_name(&self) -> &'static str {
        match self {
            Family::LogisticExponential => "le",
            Family::Weibull => "weibull",
            Family::Gamma => "gamma",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "le" | "logistic-exponential" | "logistic_exponential" => Ok(Family::LogisticExponential),
            "weibull" | "wb" => Ok(Family::Weibull),
            "gamma" | "ga" => Ok(Family::Gamma),
            other => Err(Error::Domain(format!("unknown lifetime family '{other}'"))),
        }
    }
}

/// `ln(e^x - 1)` for `x >= 0`, without cancellation for small `x` or overflow for large `x`.
pub(crate) fn ln_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// Logistic function `1 / (1 + e^{-u})`.
pub(crate) fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^u)`.
pub(crate) fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// The LE log-odds `u = α ln(e^{λt} - 1)`, so that `F = logistic(u)`.
pub(crate) fn le_log_odds(t: f64, p: ShapeScale) -> f64 {
    p.alpha * ln_expm1(p.lambda * t)
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() {
        return Err(Error::Domain(format!("time must be finite, got {t}")));
    }
    Ok(())
}

/// Failure probability by time `t` (the CDF) together with its complement.
fn cdf_pair(family: Family, t: f64, p: ShapeScale) -> Result<(f64, f64)> {
    check_time(t)?;
    p.validate()?;
    if t < 0.0 {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok((0.0, 1.0));
    }
    let pair = match family {
        Family::LogisticExponential => {
            let u = le_log_odds(t, p);
            (logistic(u), logistic(-u))
        }
        Family::Weibull => {
            let v = (p.lambda * t).powf(p.alpha);
            (-(-v).exp_m1(), (-v).exp())
        }
        Family::Gamma => {
            let z = p.lambda * t;
            (gamma_lr(p.alpha, z), gamma_ur(p.alpha, z))
        }
    };
    Ok(pair)
}

/// Cumulative distribution function.
pub fn cdf(family: Family, t: f64, p: ShapeScale) -> Result<f64> {
    cdf_pair(family, t, p).map(|(f, _)| f)
}

/// Survival function `1 - F(t)`, evaluated without subtracting from one.
pub fn survival(family: Family, t: f64, p: ShapeScale) -> Result<f64> {
    cdf_pair(family, t, p).map(|(_, s)| s)
}

/// Density. Requires `t > 0`.
pub fn pdf(family: Family, t: f64, p: ShapeScale) -> Result<f64> {
    check_time(t)?;
    p.validate()?;
    if t <= 0.0 {
        return Err(Error::Domain(format!("density needs t > 0, got {t}")));
    }
    let ShapeScale { alpha, lambda } = p;
    let y = lambda * t;
    let value = match family {
        Family::LogisticExponential => {
            // α λ e^{y} E^{α-1} / (1 + E^α)^2 = α λ F F̄ / (1 - e^{-y})
            let u = le_log_odds(t, p);
            alpha * lambda * logistic(u) * logistic(-u) / -(-y).exp_m1()
        }
        Family::Weibull => {
            let ln_v = alpha * y.ln();
            (alpha.ln() + lambda.ln() + (alpha - 1.0) * y.ln() - ln_v.exp()).exp()
        }
        Family::Gamma => (alpha * lambda.ln() + (alpha - 1.0) * t.ln() - y - ln_gamma(alpha)).exp(),
    };
    Ok(value)
}

/// Hazard rate `f(t) / (1 - F(t))`.
///
/// Returns [`Error::SurvivalUnderflow`] rather than an infinite or NaN rate when the
/// survival probability is below [`SURVIVAL_FLOOR`].
pub fn hazard(family: Family, t: f64, p: ShapeScale) -> Result<f64> {
    let f = pdf(family, t, p)?;
    let s = survival(family, t, p)?;
    if s < SURVIVAL_FLOOR {
        return Err(Error::SurvivalUnderflow { t });
    }
    Ok(f / s)
}
