//! Bid / mid / ask quotes from a fair price and the bias and variance of the
//! hedging P&L expectation, at a tolerable risk probability.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::lognormal::{self, CallSpec, LognormalMarket, TotalVolUncertainty};
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileMode {
    /// Standard normal `(1−α)`-quantile.
    Gaussian,
    /// `k` with `1/(1+k²) = α`.
    Chebyshev,
}

/// Seller's tolerable probability of losing money, with the quantile rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskPolicy {
    pub alpha: f64,
    pub quantile_mode: QuantileMode,
}

impl RiskPolicy {
    pub fn new(alpha: f64, quantile_mode: QuantileMode) -> Result<Self> {
        let p = Self { alpha, quantile_mode };
        p.validate()?;
        Ok(p)
    }

    pub fn gaussian(alpha: f64) -> Result<Self> {
        Self::new(alpha, QuantileMode::Gaussian)
    }

    pub fn chebyshev(alpha: f64) -> Result<Self> {
        Self::new(alpha, QuantileMode::Chebyshev)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha > 0.0 && self.alpha < 0.5 {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "risk probability alpha must lie in (0, 0.5), got {}",
                self.alpha
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuoteTriple {
    pub bid: f64,
    pub mid: f64,
    pub ask: f64,
    /// Price without uncertainty.
    pub fair: f64,
    /// `ε · bias`.
    pub bias_component: f64,
    /// `√(ε · variance) · quantile`, the half spread.
    pub spread_component: f64,
    /// Set when the bid falls below the intrinsic value supplied by the caller.
    #[serde(default)]
    pub below_intrinsic: bool,
}

impl QuoteTriple {
    pub fn spread(&self) -> f64 {
        self.ask - self.bid
    }

    /// Flags quotes whose bid undercuts `intrinsic`. Prices are not altered.
    pub fn flag_intrinsic(mut self, intrinsic: f64) -> Self {
        self.below_intrinsic = self.bid < intrinsic;
        self
    }
}

/// Spread multiplier for a policy.
pub fn quantile(policy: &RiskPolicy) -> Result<f64> {
    policy.validate()?;
    Ok(match policy.quantile_mode {
        QuantileMode::Gaussian => -normal::inverse_cdf(policy.alpha),
        QuantileMode::Chebyshev => (1.0 / policy.alpha - 1.0).sqrt(),
    })
}

/// `ask = fair + ε·bias + √(ε·variance)·q`, `bid` symmetric, `mid` their average.
pub fn make_quote(fair: f64, bias: f64, variance: f64, epsilon: f64, policy: &RiskPolicy) -> Result<QuoteTriple> {
    ensure_finite("fair", fair)?;
    ensure_finite("bias", bias)?;
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::Domain(format!("variance must be finite and >= 0, got {variance}")));
    }
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::Domain(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    let q = quantile(policy)?;
    let bias_component = epsilon * bias;
    let spread_component = (epsilon * variance).sqrt() * q;
    let mid = fair + bias_component;
    Ok(QuoteTriple {
        bid: mid - spread_component,
        mid,
        ask: mid + spread_component,
        fair,
        bias_component,
        spread_component,
        below_intrinsic: false,
    })
}

/// Quote for the opposite position. A buyer hedging the reversed strategy
/// faces the P&L expectation with flipped sign, so the seller's formula
/// applied to `(−fair, −bias)` and negated reproduces `(bid, ask)` swapped.
pub fn mirror(q: &QuoteTriple) -> QuoteTriple {
    QuoteTriple {
        bid: -q.ask,
        mid: -q.mid,
        ask: -q.bid,
        fair: -q.fair,
        bias_component: -q.bias_component,
        spread_component: q.spread_component,
        below_intrinsic: false,
    }
}

/// Bid / mid / ask for a call under log-normal dynamics with uncertain
/// total volatility.
pub fn quote_call(
    m: &LognormalMarket,
    c: &CallSpec,
    u: &TotalVolUncertainty,
    policy: &RiskPolicy,
) -> Result<QuoteTriple> {
    let fair = lognormal::call_price(m, c)?;
    let bias = lognormal::call_bias(m, c, u)?;
    let variance = lognormal::call_variance(m, c, u)?;
    let q = make_quote(fair, bias, variance, u.epsilon, policy)?;
    Ok(q.flag_intrinsic((m.spot - c.strike).max(0.0)))
}
