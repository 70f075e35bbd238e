use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Payoff {
    /// `(s − K)⁺`.
    Call { strike: f64 },
    /// `κ ln(1 + e^{(s−K)/κ})`, a C^∞ call with bounded first two derivatives.
    SmoothedCall { strike: f64, kappa: f64 },
}

#[inline]
fn logistic(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

impl Payoff {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Payoff::Call { strike } => ensure_positive("strike", strike),
            Payoff::SmoothedCall { strike, kappa } => {
                ensure_positive("strike", strike)?;
                ensure_positive("kappa", kappa)
            }
        }
    }

    pub fn strike(&self) -> f64 {
        match *self {
            Payoff::Call { strike } | Payoff::SmoothedCall { strike, .. } => strike,
        }
    }

    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        match *self {
            Payoff::Call { strike } => (s - strike).max(0.0),
            Payoff::SmoothedCall { strike, kappa } => {
                let y = (s - strike) / kappa;
                kappa * (y.max(0.0) + (-y.abs()).exp().ln_1p())
            }
        }
    }

    /// First derivative; the call uses ½ at the kink.
    #[inline]
    pub fn d1(&self, s: f64) -> f64 {
        match *self {
            Payoff::Call { strike } => {
                if s > strike {
                    1.0
                } else if s < strike {
                    0.0
                } else {
                    0.5
                }
            }
            Payoff::SmoothedCall { strike, kappa } => logistic((s - strike) / kappa),
        }
    }

    #[inline]
    pub fn d2(&self, s: f64) -> f64 {
        match *self {
            Payoff::Call { .. } => 0.0,
            Payoff::SmoothedCall { strike, kappa } => {
                let l = logistic((s - strike) / kappa);
                l * (1.0 - l) / kappa
            }
        }
    }

    /// `(Φ, Φ', Φ'')` sharing one exponential.
    #[inline]
    pub fn jet(&self, s: f64) -> (f64, f64, f64) {
        match *self {
            Payoff::Call { .. } => (self.value(s), self.d1(s), 0.0),
            Payoff::SmoothedCall { strike, kappa } => {
                let y = (s - strike) / kappa;
                let e = (-y.abs()).exp();
                let l_small = e / (1.0 + e);
                let l = if y >= 0.0 { 1.0 - l_small } else { l_small };
                (kappa * (y.max(0.0) + e.ln_1p()), l, l_small * (1.0 - l_small) / kappa)
            }
        }
    }

    /// Where the payoff bends, as `(ln K, width in log-spot)`; width 0 marks a kink.
    pub(crate) fn feature(&self) -> (f64, f64) {
        match *self {
            Payoff::Call { strike } => (strike.ln(), 0.0),
            Payoff::SmoothedCall { strike, kappa } => (strike.ln(), kappa / strike),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionSpec {
    pub payoff: Payoff,
    pub maturity: f64,
}

impl OptionSpec {
    pub fn new(payoff: Payoff, maturity: f64) -> Result<Self> {
        let o = Self { payoff, maturity };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        self.payoff.validate()?;
        ensure_positive("maturity", self.maturity)
    }
}
