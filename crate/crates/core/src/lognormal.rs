//! Black–Scholes call pricing with zero drift and zero rates, and the
//! closed-form bias / variance corrections of the call price when the total
//! volatility `ς√T` carries an error structure.
//!
//! Prices are expressed in units of the riskless numeraire, so no discounting
//! appears anywhere.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_non_negative, ensure_positive, Error, Result};
use crate::normal;

/// Tie band used when comparing a ratio with a threshold.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LognormalMarket {
    pub spot: f64,
    pub sigma0: f64,
    #[serde(default)]
    pub mu: f64,
}

impl LognormalMarket {
    pub fn new(spot: f64, sigma0: f64) -> Result<Self> {
        Self::with_drift(spot, sigma0, 0.0)
    }

    pub fn with_drift(spot: f64, sigma0: f64, mu: f64) -> Result<Self> {
        let m = Self { spot, sigma0, mu };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("spot", self.spot)?;
        ensure_positive("sigma0", self.sigma0)?;
        ensure_finite("mu", self.mu)
    }

    pub fn with_sigma(&self, sigma0: f64) -> Self {
        Self { sigma0, ..*self }
    }

    pub fn with_spot(&self, spot: f64) -> Self {
        Self { spot, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallSpec {
    pub strike: f64,
    pub maturity: f64,
}

impl CallSpec {
    pub fn new(strike: f64, maturity: f64) -> Result<Self> {
        let c = Self { strike, maturity };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("strike", self.strike)?;
        ensure_positive("maturity", self.maturity)
    }

    pub fn with_strike(&self, strike: f64) -> Self {
        Self { strike, ..*self }
    }
}

/// Error data on the total volatility `ς√T`, evaluated at `ς = σ₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TotalVolUncertainty {
    pub gamma_sig_sqrt_t: f64,
    pub bias_sig_sqrt_t: f64,
    pub epsilon: f64,
}

impl TotalVolUncertainty {
    pub fn new(gamma_sig_sqrt_t: f64, bias_sig_sqrt_t: f64, epsilon: f64) -> Result<Self> {
        let u = Self {
            gamma_sig_sqrt_t,
            bias_sig_sqrt_t,
            epsilon,
        };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_non_negative("gamma_sig_sqrt_t", self.gamma_sig_sqrt_t)?;
        ensure_finite("bias_sig_sqrt_t", self.bias_sig_sqrt_t)?;
        ensure_non_negative("epsilon", self.epsilon)
    }

    /// Converts error data on the volatility `ς` itself into data on `ς√T`:
    /// `Γ[ς√T] = T Γ[ς]` and `𝒜[ς√T] = √T 𝒜[ς]`.
    pub fn from_sigma(gamma_sigma: f64, bias_sigma: f64, epsilon: f64, maturity: f64) -> Result<Self> {
        ensure_positive("maturity", maturity)?;
        Self::new(maturity * gamma_sigma, maturity.sqrt() * bias_sigma, epsilon)
    }

    /// Builds the data whose ratio `r_r` equals `rr` for a given `Γ[ς√T]`.
    pub fn from_rr(rr: f64, gamma_sig_sqrt_t: f64, epsilon: f64, m: &LognormalMarket, c: &CallSpec) -> Result<Self> {
        let total_vol = m.sigma0 * c.maturity.sqrt();
        Self::new(gamma_sig_sqrt_t, rr * gamma_sig_sqrt_t / (2.0 * total_vol), epsilon)
    }

    pub fn none(epsilon: f64) -> Self {
        Self {
            gamma_sig_sqrt_t: 0.0,
            bias_sig_sqrt_t: 0.0,
            epsilon,
        }
    }
}

/// Three-way outcome of a threshold comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Positive,
    Zero,
    Negative,
}

fn check(m: &LognormalMarket, c: &CallSpec) -> Result<()> {
    m.validate()?;
    c.validate()
}

#[inline]
fn total_vol(m: &LognormalMarket, c: &CallSpec) -> f64 {
    m.sigma0 * c.maturity.sqrt()
}

pub fn d1_d2(m: &LognormalMarket, c: &CallSpec) -> Result<(f64, f64)> {
    check(m, c)?;
    Ok(d1_d2_unchecked(m.spot, c.strike, total_vol(m, c)))
}

#[inline]
pub(crate) fn d1_d2_unchecked(spot: f64, strike: f64, total_vol: f64) -> (f64, f64) {
    let d1 = ((spot / strike).ln() + 0.5 * total_vol * total_vol) / total_vol;
    (d1, d1 - total_vol)
}

/// Call price as a function of spot, strike and total volatility `σ√τ`.
/// A zero total volatility returns intrinsic value.
#[inline]
pub(crate) fn call_price_raw(spot: f64, strike: f64, total_vol: f64) -> f64 {
    if total_vol <= 0.0 {
        return (spot - strike).max(0.0);
    }
    let (d1, d2) = d1_d2_unchecked(spot, strike, total_vol);
    // Evaluate on the out-of-the-money side and restore the call through parity.
    if spot < strike {
        spot * normal::cdf(d1) - strike * normal::cdf(d2)
    } else {
        spot - strike + strike * normal::cdf(-d2) - spot * normal::cdf(-d1)
    }
}

#[inline]
pub(crate) fn call_delta_raw(spot: f64, strike: f64, total_vol: f64) -> f64 {
    if total_vol <= 0.0 {
        return if spot > strike { 1.0 } else { 0.0 };
    }
    normal::cdf(d1_d2_unchecked(spot, strike, total_vol).0)
}

/// `x 𝒩(d₁) − K 𝒩(d₂)`.
pub fn call_price(m: &LognormalMarket, c: &CallSpec) -> Result<f64> {
    check(m, c)?;
    Ok(call_price_raw(m.spot, c.strike, total_vol(m, c)))
}

/// `𝒩(d₁)`.
pub fn call_delta(m: &LognormalMarket, c: &CallSpec) -> Result<f64> {
    check(m, c)?;
    Ok(call_delta_raw(m.spot, c.strike, total_vol(m, c)))
}

/// Sensitivity to `σ₀`: `x φ(d₁) √T`.
pub fn call_vega(m: &LognormalMarket, c: &CallSpec) -> Result<f64> {
    let (d1, _) = d1_d2(m, c)?;
    Ok(m.spot * normal::pdf(d1) * c.maturity.sqrt())
}

/// Generator of the call price,
/// `x φ(d₁) { 𝒜[ς√T] + d₁d₂/(2σ₀√T) Γ[ς√T] }`. Not scaled by ε.
pub fn call_bias(m: &LognormalMarket, c: &CallSpec, u: &TotalVolUncertainty) -> Result<f64> {
    u.validate()?;
    let (d1, d2) = d1_d2(m, c)?;
    let v = total_vol(m, c);
    Ok(m.spot * normal::pdf(d1) * (u.bias_sig_sqrt_t + d1 * d2 / (2.0 * v) * u.gamma_sig_sqrt_t))
}

/// Carré du champ of the call price, `x² e^{−d₁²}/(2π) Γ[ς√T]`.
pub fn call_variance(m: &LognormalMarket, c: &CallSpec, u: &TotalVolUncertainty) -> Result<f64> {
    u.validate()?;
    let (d1, _) = d1_d2(m, c)?;
    let density = normal::pdf(d1);
    Ok(m.spot * m.spot * density * density * u.gamma_sig_sqrt_t)
}

/// `r_r = 2σ₀√T 𝒜[ς√T] / Γ[ς√T]`.
pub fn rr_ratio(m: &LognormalMarket, c: &CallSpec, u: &TotalVolUncertainty) -> Result<f64> {
    check(m, c)?;
    u.validate()?;
    if u.gamma_sig_sqrt_t == 0.0 {
        return Err(Error::Domain("r_r is undefined when Γ[ς√T] = 0".into()));
    }
    Ok(2.0 * total_vol(m, c) * u.bias_sig_sqrt_t / u.gamma_sig_sqrt_t)
}

/// Strike derivative of [`call_bias`]:
/// `d₁ 𝒜[C]/(Kσ₀√T) − x/(2Kσ₀²T) φ(d₁) (d₁+d₂) Γ[ς√T]`.
pub fn bias_strike_derivative(m: &LognormalMarket, c: &CallSpec, u: &TotalVolUncertainty) -> Result<f64> {
    let bias = call_bias(m, c, u)?;
    let (d1, d2) = d1_d2(m, c)?;
    let v = total_vol(m, c);
    let k = c.strike;
    Ok(d1 * bias / (k * v) - m.spot / (2.0 * k * v * v) * normal::pdf(d1) * (d1 + d2) * u.gamma_sig_sqrt_t)
}

/// Sign of the at-the-money bias (and of its strike derivative): compares
/// `r_r` with `σ₀²T/4`.
pub fn atm_sign_condition(m: &LognormalMarket, c: &CallSpec, u: &TotalVolUncertainty) -> Result<Sign> {
    let rr = rr_ratio(m, c, u)?;
    let w = total_vol(m, c).powi(2);
    Ok(compare(rr, 0.25 * w))
}

/// True when the bias is convex in the strike at the money:
/// `r_r < (w² + 4w + 32)/(4w + 16)` with `w = σ₀²T`.
pub fn atm_convexity_condition(m: &LognormalMarket, c: &CallSpec, u: &TotalVolUncertainty) -> Result<bool> {
    let rr = rr_ratio(m, c, u)?;
    Ok(compare(rr, convexity_threshold(total_vol(m, c).powi(2))) == Sign::Negative)
}

/// True when `∂³𝒜/∂K²∂T` is positive at the money:
/// `r_r > ¼ (w(w−4)² + 128)/(16 + w²)` with `w = σ₀²T`.
pub fn time_evolution_condition(m: &LognormalMarket, c: &CallSpec, u: &TotalVolUncertainty) -> Result<bool> {
    let rr = rr_ratio(m, c, u)?;
    Ok(compare(rr, time_evolution_threshold(total_vol(m, c).powi(2))) == Sign::Positive)
}

pub fn convexity_threshold(total_variance: f64) -> f64 {
    let w = total_variance;
    (w * w + 4.0 * w + 32.0) / (4.0 * w + 16.0)
}

pub fn time_evolution_threshold(total_variance: f64) -> f64 {
    let w = total_variance;
    0.25 * (w * (w - 4.0).powi(2) + 128.0) / (16.0 + w * w)
}

fn compare(value: f64, threshold: f64) -> Sign {
    let diff = value - threshold;
    if diff.abs() <= TIE_TOLERANCE {
        Sign::Zero
    } else if diff > 0.0 {
        Sign::Positive
    } else {
        Sign::Negative
    }
}
