//! Volatility as a finite linear combination `σ(t, s) = Σ aᵢ φᵢ(t, s)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_calculus::UncertainParameter;

pub type BasisFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A deterministic function of `(t, s)`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisFunction {
    Constant { value: f64 },
    /// `φ(t, s) = t`.
    Time,
    /// `φ(t, s) = ln(s / anchor)`.
    LogMoneyness { anchor: f64 },
    #[serde(skip)]
    Custom(BasisFn),
}

impl fmt::Debug for BasisFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisFunction::Constant { value } => write!(f, "Constant({value})"),
            BasisFunction::Time => write!(f, "Time"),
            BasisFunction::LogMoneyness { anchor } => write!(f, "LogMoneyness({anchor})"),
            BasisFunction::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl BasisFunction {
    #[inline]
    pub fn eval(&self, t: f64, s: f64) -> f64 {
        match self {
            BasisFunction::Constant { value } => *value,
            BasisFunction::Time => t,
            BasisFunction::LogMoneyness { anchor } => (s / anchor).ln(),
            BasisFunction::Custom(f) => f(t, s),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            BasisFunction::Constant { value } if !value.is_finite() => {
                Err(Error::InvalidInput(format!("constant basis value must be finite, got {value}")))
            }
            BasisFunction::LogMoneyness { anchor } if !(*anchor > 0.0 && anchor.is_finite()) => {
                Err(Error::InvalidInput(format!("log-moneyness anchor must be > 0, got {anchor}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisComponent {
    pub function: BasisFunction,
    pub coefficient: UncertainParameter,
}

impl BasisComponent {
    pub fn new(function: BasisFunction, coefficient: UncertainParameter) -> Self {
        Self { function, coefficient }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolatilityBasis {
    pub components: Vec<BasisComponent>,
}

impl VolatilityBasis {
    pub fn new(components: Vec<BasisComponent>) -> Result<Self> {
        let b = Self { components };
        b.validate()?;
        Ok(b)
    }

    /// A single constant component `σ = a · 1`.
    pub fn constant(coefficient: UncertainParameter) -> Self {
        Self {
            components: vec![BasisComponent::new(BasisFunction::Constant { value: 1.0 }, coefficient)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidInput("volatility basis must have at least one component".into()));
        }
        for c in &self.components {
            c.function.validate()?;
            let u = &c.coefficient;
            UncertainParameter::new(u.value, u.gamma, u.bias, u.epsilon)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.coefficient.value).collect()
    }

    /// Same functions and uncertainties, new coefficient values.
    pub fn with_coefficients(&self, coeffs: &[f64]) -> Self {
        let mut b = self.clone();
        for (c, &a) in b.components.iter_mut().zip(coeffs) {
            c.coefficient.value = a;
        }
        b
    }

    pub fn is_constant(&self) -> bool {
        self.components
            .iter()
            .all(|c| matches!(c.function, BasisFunction::Constant { .. }))
    }

    /// `σ` for a basis made only of constants.
    pub fn constant_sigma(&self, coeffs: &[f64]) -> Option<f64> {
        if !self.is_constant() {
            return None;
        }
        Some(self.components.iter().zip(coeffs).map(|(c, a)| a * c.function.eval(0.0, 0.0)).sum())
    }

    #[inline]
    pub fn sigma(&self, coeffs: &[f64], t: f64, s: f64) -> f64 {
        self.components
            .iter()
            .zip(coeffs)
            .map(|(c, a)| a * c.function.eval(t, s))
            .sum()
    }

    /// `σ(t, s)`, rejecting negative or non-finite values.
    #[inline]
    pub fn checked_sigma(&self, coeffs: &[f64], t: f64, s: f64) -> Result<f64> {
        let v = self.sigma(coeffs, t, s);
        if v >= 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("volatility {v} at (t={t}, s={s}) is not admissible")))
        }
    }

    /// Components whose coefficient carries a correction.
    pub fn uncertain_indices(&self) -> Vec<usize> {
        self.components
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.coefficient.is_certain())
            .map(|(i, _)| i)
            .collect()
    }

    /// The common `ε` of the uncertain components, zero when there are none.
    pub fn epsilon(&self) -> Result<f64> {
        let mut eps: Option<f64> = None;
        for c in &self.components {
            let e = c.coefficient.epsilon;
            if c.coefficient.gamma == 0.0 && c.coefficient.bias == 0.0 {
                continue;
            }
            match eps {
                None => eps = Some(e),
                Some(prev) if prev != e => {
                    return Err(Error::InvalidInput(format!(
                        "uncertain coefficients disagree on epsilon ({prev} vs {e})"
                    )))
                }
                _ => {}
            }
        }
        Ok(eps.unwrap_or(0.0))
    }
}
