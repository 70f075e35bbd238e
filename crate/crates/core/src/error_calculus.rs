//! Scalar error calculus: propagation of bias and variance through smooth
//! maps, finite products of independent error structures, the Gaussian
//! reading of a propagated error and the Chebyshev tail bound.
//!
//! Every quantity is carried as the carré du champ and generator *evaluated
//! at the estimate*: `gamma = Γ[a](a)` and `bias = 𝒜[a](a)`. The scale
//! `epsilon` multiplies both when the error is turned into a distribution.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_non_negative, Error, Result};

/// An estimated value together with its normalized error variance and bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertainParameter {
    pub value: f64,
    pub gamma: f64,
    pub bias: f64,
    pub epsilon: f64,
}

impl UncertainParameter {
    pub fn new(value: f64, gamma: f64, bias: f64, epsilon: f64) -> Result<Self> {
        ensure_finite("value", value)?;
        ensure_non_negative("gamma", gamma)?;
        ensure_finite("bias", bias)?;
        ensure_non_negative("epsilon", epsilon)?;
        Ok(Self {
            value,
            gamma,
            bias,
            epsilon,
        })
    }

    /// A parameter known exactly.
    pub fn certain(value: f64) -> Self {
        Self {
            value,
            gamma: 0.0,
            bias: 0.0,
            epsilon: 0.0,
        }
    }

    /// True when no correction can flow from this parameter.
    pub fn is_certain(&self) -> bool {
        self.epsilon == 0.0 || (self.gamma == 0.0 && self.bias == 0.0)
    }
}

/// Value and first two derivatives of a C² map at the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothFunctionJet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl SmoothFunctionJet {
    pub fn new(value: f64, d1: f64, d2: f64) -> Self {
        Self { value, d1, d2 }
    }

    /// Jet of `g ∘ f` from the jet of `f` at `x` and the jet of `g` at `f(x)`.
    pub fn compose(outer: &SmoothFunctionJet, inner: &SmoothFunctionJet) -> Self {
        Self {
            value: outer.value,
            d1: outer.d1 * inner.d1,
            d2: outer.d2 * inner.d1 * inner.d1 + outer.d1 * inner.d2,
        }
    }

    fn check(&self) -> Result<()> {
        if self.value.is_finite() && self.d1.is_finite() && self.d2.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "jet entries must be finite, got ({}, {}, {})",
                self.value, self.d1, self.d2
            )))
        }
    }
}

/// `F(X) ≈ center + bias_term + stddev_term · G` with `G` standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianExpansion {
    pub center: f64,
    pub bias_term: f64,
    pub stddev_term: f64,
}

impl GaussianExpansion {
    /// The expansion evaluated at a standard normal draw.
    pub fn sample(&self, g: f64) -> f64 {
        self.center + self.bias_term + self.stddev_term * g
    }
}

/// Pushes the error on `u` through a C² map described by its jet.
///
/// `Γ[f(u)] = f'² Γ[u]` and `𝒜[f(u)] = f' 𝒜[u] + ½ f'' Γ[u]`.
pub fn propagate(jet: &SmoothFunctionJet, u: &UncertainParameter) -> Result<UncertainParameter> {
    jet.check()?;
    Ok(UncertainParameter {
        value: jet.value,
        gamma: jet.d1 * jet.d1 * u.gamma,
        bias: jet.d1 * u.bias + 0.5 * jet.d2 * u.gamma,
        epsilon: u.epsilon,
    })
}

/// Linear combination of independent errors through their sharps.
///
/// Only first-order sensitivities are combined: `Γ = Σ sᵢ² Γᵢ` and
/// `𝒜 = Σ sᵢ 𝒜ᵢ`. Curvature contributions `½ ∂ᵢᵢF Γᵢ` belong to the caller,
/// which holds the Hessian. The returned `value` is `Σ sᵢ valueᵢ`.
pub fn combine_independent(components: &[(f64, UncertainParameter)]) -> Result<UncertainParameter> {
    let Some((_, first)) = components.first() else {
        return Ok(UncertainParameter::certain(0.0));
    };
    let epsilon = first.epsilon;
    let mut out = UncertainParameter {
        value: 0.0,
        gamma: 0.0,
        bias: 0.0,
        epsilon,
    };
    for (i, (sensitivity, u)) in components.iter().enumerate() {
        ensure_finite("sensitivity", *sensitivity)?;
        if u.epsilon != epsilon {
            return Err(Error::InvalidInput(format!(
                "component {i} has epsilon {} but component 0 has {epsilon}",
                u.epsilon
            )));
        }
        out.value += sensitivity * u.value;
        out.gamma += sensitivity * sensitivity * u.gamma;
        out.bias += sensitivity * u.bias;
    }
    Ok(out)
}

pub fn gaussian_expansion(u: &UncertainParameter) -> GaussianExpansion {
    GaussianExpansion {
        center: u.value,
        bias_term: u.epsilon * u.bias,
        stddev_term: (u.epsilon * u.gamma).sqrt(),
    }
}

/// Upper bound `1/(1+k²)` on the probability that the bias-corrected value
/// exceeds `k` standard deviations.
pub fn chebyshev_tail(k: f64) -> Result<f64> {
    if !(k >= 1.0) || !k.is_finite() {
        return Err(Error::Domain(format!("chebyshev_tail needs finite k >= 1, got {k}")));
    }
    Ok(1.0 / (1.0 + k * k))
}
