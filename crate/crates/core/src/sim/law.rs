//! First- and second-order law of `𝔼[h(P&L)]` under coefficient uncertainty:
//! the functionals Λ₁, Λ₂ and Ψ by bump-and-reprice and time quadrature.

use serde::{Deserialize, Serialize};

use super::basis::VolatilityBasis;
use super::hedge::TestFunctionJet;
use super::paths::{simulate_one, SimulationConfig};
use super::payoff::OptionSpec;
use super::pricer::HedgePricer;
use super::rng::{map_batches, path_rng, with_workers, N_BATCHES};
use crate::error::{ensure_finite, ensure_positive, Error, Result};

pub const DEFAULT_RELATIVE_BUMP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Sensitivities of the initial price to one uncertain coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentSensitivity {
    pub index: usize,
    pub bump: f64,
    /// `∂F/∂aᵢ` at `(x0, 0)`.
    pub price_d1: f64,
    /// `∂²F/∂aᵢ²` at `(x0, 0)`.
    pub price_d2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnLLawEstimate {
    pub lambda1: Estimate,
    pub lambda2: Estimate,
    pub psi: Estimate,
    /// `h'(0) Λ₁ + ½ h''(0) Λ₂`.
    pub bias: Estimate,
    /// `h'(0)² Ψ`.
    pub variance: Estimate,
    pub components: Vec<ComponentSensitivity>,
}

impl PnLLawEstimate {
    fn zero() -> Self {
        let z = Estimate { value: 0.0, stderr: 0.0 };
        Self {
            lambda1: z,
            lambda2: z,
            psi: z,
            bias: z,
            variance: z,
            components: Vec::new(),
        }
    }
}

/// Per-path integrals for one component.
#[derive(Debug, Clone, Copy, Default)]
struct PathTerms {
    /// `∫ Δ_a S dt`.
    delta_s: f64,
    /// `∫ Δ_aa S dt`.
    delta2_s: f64,
    /// `∫ Δ_a² S² σ² dt`.
    quad_var: f64,
}

#[derive(Debug, Clone, Default)]
struct BatchSums {
    n: usize,
    delta_s: Vec<f64>,
    delta2_s: Vec<f64>,
    quad_var: Vec<f64>,
    /// `Σ_p (F_a + μ ∫ Δ_a S dt)²`.
    j2: Vec<f64>,
}

fn mean_and_stderr(total: f64, per_batch: &[f64]) -> Estimate {
    let b = per_batch.len() as f64;
    if per_batch.iter().all(|x| *x == per_batch[0]) {
        return Estimate { value: total, stderr: 0.0 };
    }
    let m = per_batch.iter().sum::<f64>() / b;
    let var = per_batch.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (b - 1.0);
    Estimate {
        value: total,
        stderr: (var / b).sqrt(),
    }
}

/// Λ₁, Λ₂ and Ψ with batch-means standard errors.
///
/// Paths follow `true_basis`; the hedger prices with `pricer` at the
/// coefficients of `estimated_basis`, whose Γ and 𝒜 drive the result.
/// Derivatives in each uncertain coefficient are central differences with
/// bump `relative_bump · |aᵢ|`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_law(
    true_basis: &VolatilityBasis,
    estimated_basis: &VolatilityBasis,
    pricer: &dyn HedgePricer,
    mu: f64,
    x0: f64,
    option: &OptionSpec,
    h: &TestFunctionJet,
    cfg: &SimulationConfig,
    relative_bump: f64,
) -> Result<PnLLawEstimate> {
    true_basis.validate()?;
    estimated_basis.validate()?;
    cfg.validate(true_basis)?;
    option.validate()?;
    ensure_finite("mu", mu)?;
    ensure_positive("x0", x0)?;
    ensure_positive("relative_bump", relative_bump)?;
    if cfg.n_paths < N_BATCHES {
        return Err(Error::InvalidInput(format!(
            "estimate_law needs at least {N_BATCHES} paths for batch means, got {}",
            cfg.n_paths
        )));
    }
    if true_basis.len() != estimated_basis.len() {
        return Err(Error::InvalidInput("true and estimated bases differ in length".into()));
    }
    let uncertain = estimated_basis.uncertain_indices();
    if uncertain.is_empty() {
        return Ok(PnLLawEstimate::zero());
    }

    let a = estimated_basis.coefficients();
    let bumped = |i: usize, d: f64| {
        let mut c = a.clone();
        c[i] += d;
        c
    };

    let mut sens = Vec::with_capacity(uncertain.len());
    for &i in &uncertain {
        let b = if a[i] != 0.0 { relative_bump * a[i].abs() } else { relative_bump };
        let f0 = pricer.price(&a, x0, 0.0)?;
        let fp = pricer.price(&bumped(i, b), x0, 0.0)?;
        let fm = pricer.price(&bumped(i, -b), x0, 0.0)?;
        let d1 = (fp - fm) / (2.0 * b);
        let d2 = (fp - 2.0 * f0 + fm) / (b * b);
        let rounding = 8.0 * f64::EPSILON * f0.abs().max(fp.abs()).max(fm.abs());
        let noise1 = rounding / (2.0 * b);
        let noise2 = 4.0 * rounding / (b * b);
        let scale2 = d2.abs().max(d1.abs() / a[i].abs().max(b));
        if noise1 > 0.1 * d1.abs() || noise2 > 0.1 * scale2 {
            return Err(Error::BumpTooSmall(format!(
                "coefficient {i}: bump {b:e} leaves relative rounding noise {:.2e} / {:.2e} in the \
                 first / second price derivative; use a larger relative bump",
                noise1 / d1.abs(),
                noise2 / scale2
            )));
        }
        sens.push(ComponentSensitivity {
            index: i,
            bump: b,
            price_d1: d1,
            price_d2: d2,
        });
    }

    let times = cfg.time_grid(option.maturity);
    let n_t = times.len();
    let weights: Vec<f64> = (0..n_t)
        .map(|j| {
            let left = if j > 0 { times[j] - times[j - 1] } else { 0.0 };
            let right = if j + 1 < n_t { times[j + 1] - times[j] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect();
    let true_coeffs = true_basis.coefficients();
    let need_second = mu != 0.0;
    let nc = sens.len();

    let batches = with_workers(cfg.workers, || {
        map_batches(cfg.n_paths, N_BATCHES, |_, range| {
            let mut buf = vec![0.0; n_t];
            let mut sums = BatchSums {
                n: range.len(),
                delta_s: vec![0.0; nc],
                delta2_s: vec![0.0; nc],
                quad_var: vec![0.0; nc],
                j2: vec![0.0; nc],
            };
            let shifted: Vec<(Vec<f64>, Vec<f64>)> =
                sens.iter().map(|c| (bumped(c.index, c.bump), bumped(c.index, -c.bump))).collect();
            for p in range {
                let mut rng = path_rng(cfg.seed, p as u64);
                simulate_one(true_basis, &true_coeffs, mu, x0, &times, cfg.scheme, &mut rng, &mut buf)?;
                for (k, c) in sens.iter().enumerate() {
                    let (up, dn) = &shifted[k];
                    let mut terms = PathTerms::default();
                    for j in 0..n_t {
                        let (s, t, w) = (buf[j], times[j], weights[j]);
                        let dp = pricer.delta(up, s, t)?;
                        let dm = pricer.delta(dn, s, t)?;
                        let da = (dp - dm) / (2.0 * c.bump);
                        let sig = true_basis.checked_sigma(&true_coeffs, t, s)?;
                        terms.delta_s += w * da * s;
                        terms.quad_var += w * da * da * s * s * sig * sig;
                        if need_second {
                            let d0 = pricer.delta(&a, s, t)?;
                            terms.delta2_s += w * (dp - 2.0 * d0 + dm) / (c.bump * c.bump) * s;
                        }
                    }
                    let j = c.price_d1 + mu * terms.delta_s;
                    sums.delta_s[k] += terms.delta_s;
                    sums.delta2_s[k] += terms.delta2_s;
                    sums.quad_var[k] += terms.quad_var;
                    sums.j2[k] += j * j;
                }
            }
            Ok(sums)
        })
    })??;

    // Functionals from path means; evaluated on the pooled sample and per batch.
    let assemble = |n: f64, ds: &[f64], d2s: &[f64], qv: &[f64], j2: &[f64]| {
        let (mut l1, mut l2, mut psi) = (0.0, 0.0, 0.0);
        for (k, c) in sens.iter().enumerate() {
            let u = &estimated_basis.components[c.index].coefficient;
            let (e1, e2, e3, ej) = (ds[k] / n, d2s[k] / n, qv[k] / n, j2[k] / n);
            l1 += c.price_d1 * u.bias + 0.5 * c.price_d2 * u.gamma + u.bias * mu * e1 + 0.5 * u.gamma * mu * e2;
            l2 += u.gamma * (e3 + ej);
            let first = c.price_d1 + mu * e1;
            psi += u.gamma * first * first;
        }
        (l1, l2, psi)
    };
    let total = |f: fn(&BatchSums) -> &Vec<f64>| -> Vec<f64> {
        (0..nc).map(|k| batches.iter().map(|b| f(b)[k]).sum()).collect()
    };
    let n = cfg.n_paths as f64;
    let (l1, l2, psi) = assemble(
        n,
        &total(|b| &b.delta_s),
        &total(|b| &b.delta2_s),
        &total(|b| &b.quad_var),
        &total(|b| &b.j2),
    );
    let per_batch: Vec<(f64, f64, f64)> = batches
        .iter()
        .map(|b| assemble(b.n as f64, &b.delta_s, &b.delta2_s, &b.quad_var, &b.j2))
        .collect();
    let col = |f: fn(&(f64, f64, f64), &TestFunctionJet) -> f64| -> Vec<f64> {
        per_batch.iter().map(|x| f(x, h)).collect()
    };
    let bias = h.h1 * l1 + 0.5 * h.h2 * l2;
    let variance = h.h1 * h.h1 * psi;
    Ok(PnLLawEstimate {
        lambda1: mean_and_stderr(l1, &col(|x, _| x.0)),
        lambda2: mean_and_stderr(l2, &col(|x, _| x.1)),
        psi: mean_and_stderr(psi, &col(|x, _| x.2)),
        bias: mean_and_stderr(bias, &col(|x, h| h.h1 * x.0 + 0.5 * h.h2 * x.1)),
        variance: mean_and_stderr(variance, &col(|x, h| h.h1 * h.h1 * x.2)),
        components: sens,
    })
}
