//! Price and delta of a European payoff as functions of the volatility
//! coefficients, spot and time.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basis::VolatilityBasis;
use super::payoff::{OptionSpec, Payoff};
use super::quadrature::lognormal_moments;
use super::rng::{pricer_rng, standard_normal};
use crate::error::{ensure_positive, Error, Result};
use crate::lognormal::{call_delta_raw, call_price_raw};

/// Price `F(a; s, t)` and delta `Δ(a; s, t)` under coefficients `a`.
pub trait HedgePricer: Send + Sync {
    fn price(&self, coeffs: &[f64], s: f64, t: f64) -> Result<f64>;
    fn delta(&self, coeffs: &[f64], s: f64, t: f64) -> Result<f64>;
}

fn constant_sigma(basis: &VolatilityBasis, coeffs: &[f64]) -> Result<f64> {
    let sigma = basis
        .constant_sigma(coeffs)
        .ok_or_else(|| Error::InvalidInput("pricer requires a constant volatility basis".into()))?;
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(sigma)
    } else {
        Err(Error::Domain(format!("volatility {sigma} is not admissible")))
    }
}

fn check_state(s: f64, t: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("pricer called at (t={t}, s={s})")))
    }
}

/// Closed-form call under a constant volatility basis.
#[derive(Debug, Clone)]
pub struct BlackScholesCall {
    basis: VolatilityBasis,
    strike: f64,
    maturity: f64,
}

impl BlackScholesCall {
    pub fn new(basis: &VolatilityBasis, strike: f64, maturity: f64) -> Result<Self> {
        if !basis.is_constant() {
            return Err(Error::InvalidInput("closed-form pricer needs a constant basis".into()));
        }
        ensure_positive("strike", strike)?;
        ensure_positive("maturity", maturity)?;
        Ok(Self {
            basis: basis.clone(),
            strike,
            maturity,
        })
    }

    fn total_vol(&self, coeffs: &[f64], t: f64) -> Result<f64> {
        Ok(constant_sigma(&self.basis, coeffs)? * (self.maturity - t).max(0.0).sqrt())
    }
}

impl HedgePricer for BlackScholesCall {
    fn price(&self, coeffs: &[f64], s: f64, t: f64) -> Result<f64> {
        check_state(s, t)?;
        Ok(call_price_raw(s, self.strike, self.total_vol(coeffs, t)?))
    }

    fn delta(&self, coeffs: &[f64], s: f64, t: f64) -> Result<f64> {
        check_state(s, t)?;
        Ok(call_delta_raw(s, self.strike, self.total_vol(coeffs, t)?))
    }
}

/// Delta on a `(ln s, σ√τ)` grid: cubic Hermite in `ln s`, Catmull-Rom in
/// `r = (σ√τ / u_max)^½`, which crowds nodes towards expiry.
#[derive(Debug, Clone)]
struct DeltaTable {
    y0: f64,
    hy: f64,
    ny: usize,
    u_max: f64,
    nu: usize,
    /// `(Δ, ∂Δ/∂ln s)` per node, row `iu`, column `iy`.
    nodes: Vec<(f64, f64)>,
}

impl DeltaTable {
    fn build(payoff: &Payoff, y_center: f64, y_half: f64, u_max: f64, hy: f64, nu: usize) -> Self {
        let ny = (2.0 * y_half / hy).ceil() as usize + 1;
        let y0 = y_center - 0.5 * hy * (ny - 1) as f64;
        let hr = 1.0 / (nu - 1) as f64;
        let nodes = (0..nu * ny)
            .into_par_iter()
            .map(|k| {
                let (iu, iy) = (k / ny, k % ny);
                let r = hr * iu as f64;
                let (_, d, g) = lognormal_moments(payoff, (y0 + hy * iy as f64).exp(), u_max * r * r);
                (d, g)
            })
            .collect();
        Self {
            y0,
            hy,
            ny,
            u_max,
            nu,
            nodes,
        }
    }

    #[inline]
    fn row(&self, iu: usize, iy: usize, ty: f64) -> f64 {
        let base = iu * self.ny + iy;
        let (f0, d0) = self.nodes[base];
        let (f1, d1) = self.nodes[base + 1];
        let (t2, t3) = (ty * ty, ty * ty * ty);
        (2.0 * t3 - 3.0 * t2 + 1.0) * f0
            + (t3 - 2.0 * t2 + ty) * self.hy * d0
            + (-2.0 * t3 + 3.0 * t2) * f1
            + (t3 - t2) * self.hy * d1
    }

    #[inline]
    fn lookup(&self, y: f64, u: f64) -> Option<f64> {
        let fy = (y - self.y0) / self.hy;
        let fu = (u / self.u_max).sqrt() * (self.nu - 1) as f64;
        if !(fy >= 0.0 && fy < (self.ny - 1) as f64 && fu >= 0.0 && fu <= (self.nu - 1) as f64) {
            return None;
        }
        let iy = fy as usize;
        let ty = fy - iy as f64;
        let iu = (fu as usize).min(self.nu - 2);
        let tu = fu - iu as f64;
        let p1 = self.row(iu, iy, ty);
        let p2 = self.row(iu + 1, iy, ty);
        // Delta is even in r, which supplies the ghost row below zero.
        let p0 = if iu == 0 { self.row(1, iy, ty) } else { self.row(iu - 1, iy, ty) };
        let p3 = if iu + 2 < self.nu { self.row(iu + 2, iy, ty) } else { 2.0 * p2 - p1 };
        let (t2, t3) = (tu * tu, tu * tu * tu);
        Some(
            0.5 * (2.0 * p1
                + (p2 - p0) * tu
                + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2
                + (3.0 * p1 - p0 - 3.0 * p2 + p3) * t3),
        )
    }
}

/// Any payoff in [`Payoff`] under a constant volatility basis, by quadrature
/// against the log-normal law. Deltas come from a precomputed table when the
/// state lies inside it and from direct quadrature otherwise.
#[derive(Debug, Clone)]
pub struct LognormalGridPricer {
    basis: VolatilityBasis,
    payoff: Payoff,
    maturity: f64,
    table: Option<DeltaTable>,
}

/// Layout of the delta table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Spot around which the table is centred.
    pub center: f64,
    /// Largest volatility the table must cover.
    pub sigma_max: f64,
    /// Half-width of the table in `ln s`.
    pub log_half_width: f64,
}

impl GridSpec {
    /// Covers `±7 σ_max √T` around `x0` plus the drift over `[0, T]`.
    pub fn for_paths(x0: f64, sigma_max: f64, mu: f64, maturity: f64) -> Self {
        Self {
            center: x0,
            sigma_max,
            log_half_width: 7.0 * sigma_max * maturity.sqrt() + mu.abs() * maturity + 0.05,
        }
    }
}

const TABLE_U_NODES: usize = 129;

impl LognormalGridPricer {
    /// Direct quadrature only; suitable when few deltas are needed.
    pub fn new(basis: &VolatilityBasis, option: &OptionSpec) -> Result<Self> {
        if !basis.is_constant() {
            return Err(Error::InvalidInput("log-normal pricer needs a constant basis".into()));
        }
        option.validate()?;
        Ok(Self {
            basis: basis.clone(),
            payoff: option.payoff,
            maturity: option.maturity,
            table: None,
        })
    }

    pub fn with_table(basis: &VolatilityBasis, option: &OptionSpec, grid: &GridSpec) -> Result<Self> {
        let mut p = Self::new(basis, option)?;
        ensure_positive("grid center", grid.center)?;
        ensure_positive("grid sigma_max", grid.sigma_max)?;
        ensure_positive("grid half width", grid.log_half_width)?;
        let width = match option.payoff {
            Payoff::SmoothedCall { strike, kappa } => kappa / strike,
            Payoff::Call { .. } => 0.0,
        };
        let hy = (0.25 * width).clamp(2.5e-4, 2.5e-3);
        let u_max = grid.sigma_max * option.maturity.sqrt();
        p.table = Some(DeltaTable::build(
            &option.payoff,
            grid.center.ln(),
            grid.log_half_width,
            u_max,
            hy,
            TABLE_U_NODES,
        ));
        Ok(p)
    }
}

impl HedgePricer for LognormalGridPricer {
    fn price(&self, coeffs: &[f64], s: f64, t: f64) -> Result<f64> {
        check_state(s, t)?;
        let u = constant_sigma(&self.basis, coeffs)? * (self.maturity - t).max(0.0).sqrt();
        Ok(lognormal_moments(&self.payoff, s, u).0)
    }

    fn delta(&self, coeffs: &[f64], s: f64, t: f64) -> Result<f64> {
        check_state(s, t)?;
        let u = constant_sigma(&self.basis, coeffs)? * (self.maturity - t).max(0.0).sqrt();
        if let Some(d) = self.table.as_ref().and_then(|tb| tb.lookup(s.ln(), u)) {
            return Ok(d);
        }
        Ok(lognormal_moments(&self.payoff, s, u).1)
    }
}

/// Nested Monte Carlo under an arbitrary basis: log-Euler inner paths from
/// `(t, s)` to maturity on shared noise, delta by a central spot bump.
#[derive(Debug, Clone)]
pub struct NestedMcPricer {
    basis: VolatilityBasis,
    payoff: Payoff,
    maturity: f64,
    n_steps: usize,
    relative_bump: f64,
    /// `noise[i * n_steps + j]`.
    noise: Vec<f64>,
    n_paths: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NestedMcSpec {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    #[serde(default = "NestedMcSpec::default_bump")]
    pub relative_bump: f64,
}

impl NestedMcSpec {
    fn default_bump() -> f64 {
        1e-3
    }
}

impl Default for NestedMcSpec {
    fn default() -> Self {
        Self {
            n_paths: 4096,
            n_steps: 32,
            seed: 0,
            relative_bump: Self::default_bump(),
        }
    }
}

impl NestedMcPricer {
    pub fn new(basis: &VolatilityBasis, option: &OptionSpec, spec: &NestedMcSpec) -> Result<Self> {
        basis.validate()?;
        option.validate()?;
        if spec.n_paths == 0 || spec.n_steps == 0 {
            return Err(Error::InvalidInput("nested pricer needs n_paths, n_steps > 0".into()));
        }
        ensure_positive("relative_bump", spec.relative_bump)?;
        let mut noise = Vec::with_capacity(spec.n_paths * spec.n_steps);
        for i in 0..spec.n_paths {
            let mut rng = pricer_rng(spec.seed, i as u64);
            noise.extend((0..spec.n_steps).map(|_| standard_normal(&mut rng)));
        }
        Ok(Self {
            basis: basis.clone(),
            payoff: option.payoff,
            maturity: option.maturity,
            n_steps: spec.n_steps,
            relative_bump: spec.relative_bump,
            noise,
            n_paths: spec.n_paths,
        })
    }

    fn expectation(&self, coeffs: &[f64], s: f64, t: f64) -> Result<f64> {
        let tau = self.maturity - t;
        if tau <= 0.0 {
            return Ok(self.payoff.value(s));
        }
        // The grid keeps the full step count over any remaining horizon so
        // that prices move smoothly with t.
        let dt = tau / self.n_steps as f64;
        let sq = dt.sqrt();
        let mut sum = 0.0;
        for z in self.noise.chunks_exact(self.n_steps) {
            let mut x = s;
            for (j, &zj) in z.iter().enumerate() {
                let sig = self.basis.checked_sigma(coeffs, t + j as f64 * dt, x)?;
                x *= (-0.5 * sig * sig * dt + sig * sq * zj).exp();
            }
            sum += self.payoff.value(x);
        }
        Ok(sum / self.n_paths as f64)
    }
}

impl HedgePricer for NestedMcPricer {
    fn price(&self, coeffs: &[f64], s: f64, t: f64) -> Result<f64> {
        check_state(s, t)?;
        self.expectation(coeffs, s, t)
    }

    fn delta(&self, coeffs: &[f64], s: f64, t: f64) -> Result<f64> {
        check_state(s, t)?;
        if t >= self.maturity {
            return Ok(self.payoff.d1(s));
        }
        let h = self.relative_bump * s;
        let up = self.expectation(coeffs, s + h, t)?;
        let dn = self.expectation(coeffs, s - h, t)?;
        Ok((up - dn) / (2.0 * h))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PricerKind {
    /// Closed form for a call under a constant basis, tabulated quadrature
    /// for other payoffs under a constant basis, nested Monte Carlo otherwise.
    #[default]
    Auto,
    BlackScholes,
    Quadrature,
    NestedMc,
}

/// Builds a pricer for `basis`, tabulating deltas over `grid` when quadrature
/// is used.
pub fn build_pricer(
    kind: PricerKind,
    basis: &VolatilityBasis,
    option: &OptionSpec,
    grid: &GridSpec,
    nested: &NestedMcSpec,
) -> Result<Box<dyn HedgePricer>> {
    let kind = match kind {
        PricerKind::Auto if !basis.is_constant() => PricerKind::NestedMc,
        PricerKind::Auto => match option.payoff {
            Payoff::Call { .. } => PricerKind::BlackScholes,
            Payoff::SmoothedCall { .. } => PricerKind::Quadrature,
        },
        k => k,
    };
    Ok(match kind {
        PricerKind::BlackScholes => match option.payoff {
            Payoff::Call { strike } => Box::new(BlackScholesCall::new(basis, strike, option.maturity)?),
            _ => {
                return Err(Error::InvalidInput(
                    "closed-form pricer only handles the plain call".into(),
                ))
            }
        },
        PricerKind::Quadrature => Box::new(LognormalGridPricer::with_table(basis, option, grid)?),
        PricerKind::NestedMc => Box::new(NestedMcPricer::new(basis, option, nested)?),
        PricerKind::Auto => unreachable!("resolved above"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error_calculus::UncertainParameter;
    use crate::sim::basis::{BasisComponent, BasisFunction};

    fn flat(sigma: f64) -> VolatilityBasis {
        VolatilityBasis::constant(UncertainParameter::certain(sigma))
    }

    #[test]
    fn closed_form_call() {
        let p = BlackScholesCall::new(&flat(0.2), 100.0, 1.0).unwrap();
        assert!((p.price(&[0.2], 100.0, 0.0).unwrap() - 7.965_567_455_405_796).abs() < 1e-12);
        assert_eq!(p.price(&[0.2], 120.0, 1.0).unwrap(), 20.0);
        assert_eq!(p.delta(&[0.0], 120.0, 0.5).unwrap(), 1.0);
        assert!(p.price(&[0.2], -1.0, 0.0).is_err());
        assert!(p.price(&[-0.2], 100.0, 0.0).is_err());
    }

    #[test]
    fn table_matches_direct_quadrature() {
        let option = OptionSpec::new(Payoff::SmoothedCall { strike: 100.0, kappa: 0.5 }, 1.0).unwrap();
        let basis = flat(0.2);
        let grid = GridSpec::for_paths(100.0, 0.25, 0.0, 1.0);
        let tab = LognormalGridPricer::with_table(&basis, &option, &grid).unwrap();
        let direct = LognormalGridPricer::new(&basis, &option).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..200 {
            let s = 80.0 + 0.2037 * i as f64;
            for &t in &[0.0, 0.3, 0.77, 0.99, 0.999] {
                for &a in &[0.1, 0.2, 0.2437] {
                    let d1 = tab.delta(&[a], s, t).unwrap();
                    let d2 = direct.delta(&[a], s, t).unwrap();
                    worst = worst.max((d1 - d2).abs());
                }
            }
        }
        assert!(worst < 2e-6, "worst table error {worst}");
    }

    #[test]
    fn table_falls_back_outside() {
        let option = OptionSpec::new(Payoff::SmoothedCall { strike: 100.0, kappa: 0.5 }, 1.0).unwrap();
        let basis = flat(0.2);
        let grid = GridSpec { center: 100.0, sigma_max: 0.21, log_half_width: 0.05 };
        let tab = LognormalGridPricer::with_table(&basis, &option, &grid).unwrap();
        let direct = LognormalGridPricer::new(&basis, &option).unwrap();
        assert_eq!(tab.delta(&[0.2], 150.0, 0.0).unwrap(), direct.delta(&[0.2], 150.0, 0.0).unwrap());
        assert_eq!(tab.delta(&[0.5], 100.0, 0.0).unwrap(), direct.delta(&[0.5], 100.0, 0.0).unwrap());
    }

    #[test]
    fn smoothed_call_approaches_call() {
        let option = OptionSpec::new(Payoff::SmoothedCall { strike: 100.0, kappa: 1e-3 }, 1.0).unwrap();
        let p = LognormalGridPricer::new(&flat(0.2), &option).unwrap();
        let bs = BlackScholesCall::new(&flat(0.2), 100.0, 1.0).unwrap();
        let gap = p.price(&[0.2], 100.0, 0.0).unwrap() - bs.price(&[0.2], 100.0, 0.0).unwrap();
        assert!(gap > 0.0 && gap < 1e-3);
    }

    #[test]
    fn nested_mc_reproduces_closed_form() {
        let option = OptionSpec::new(Payoff::Call { strike: 100.0 }, 1.0).unwrap();
        let spec = NestedMcSpec { n_paths: 20_000, n_steps: 4, seed: 3, relative_bump: 1e-2 };
        let p = NestedMcPricer::new(&flat(0.2), &option, &spec).unwrap();
        let bs = BlackScholesCall::new(&flat(0.2), 100.0, 1.0).unwrap();
        let price = p.price(&[0.2], 100.0, 0.0).unwrap();
        let exact = bs.price(&[0.2], 100.0, 0.0).unwrap();
        // Standard error of the payoff mean is about 0.08.
        assert!((price - exact).abs() < 0.3, "{price} vs {exact}");
        let delta = p.delta(&[0.2], 100.0, 0.0).unwrap();
        assert!((delta - bs.delta(&[0.2], 100.0, 0.0).unwrap()).abs() < 0.03);
    }

    #[test]
    fn auto_selection() {
        let call = OptionSpec::new(Payoff::Call { strike: 100.0 }, 1.0).unwrap();
        let grid = GridSpec::for_paths(100.0, 0.3, 0.0, 1.0);
        let nested = NestedMcSpec { n_paths: 16, n_steps: 2, seed: 0, relative_bump: 1e-3 };
        let p = build_pricer(PricerKind::Auto, &flat(0.2), &call, &grid, &nested).unwrap();
        assert!((p.price(&[0.2], 100.0, 0.0).unwrap() - 7.965_567_455_405_796).abs() < 1e-12);
        let timed = VolatilityBasis::new(vec![BasisComponent::new(BasisFunction::Time, UncertainParameter::certain(0.2))])
            .unwrap();
        assert!(build_pricer(PricerKind::Auto, &timed, &call, &grid, &nested).is_ok());
        assert!(build_pricer(PricerKind::BlackScholes, &timed, &call, &grid, &nested).is_err());
    }
}
