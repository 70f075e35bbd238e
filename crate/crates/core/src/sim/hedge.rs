//! Discrete delta hedging of a sold option.

use serde::{Deserialize, Serialize};

use super::basis::VolatilityBasis;
use super::paths::{simulate_one, SimulationConfig};
use super::payoff::OptionSpec;
use super::pricer::HedgePricer;
use super::rng::{map_batches, path_rng, with_workers, N_BATCHES};
use crate::error::{ensure_finite, ensure_positive, Error, Result};

/// `h(0)`, `h'(0)`, `h''(0)` of the test function applied to the P&L. Where a
/// full function is needed it is the quadratic with this jet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionJet {
    pub h0: f64,
    pub h1: f64,
    pub h2: f64,
}

impl TestFunctionJet {
    pub fn new(h0: f64, h1: f64, h2: f64) -> Result<Self> {
        ensure_finite("h0", h0)?;
        ensure_finite("h1", h1)?;
        ensure_finite("h2", h2)?;
        Ok(Self { h0, h1, h2 })
    }

    /// `h(x) = x`.
    pub fn identity() -> Self {
        Self { h0: 0.0, h1: 1.0, h2: 0.0 }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.h0 + self.h1 * x + 0.5 * self.h2 * x * x
    }
}

impl Default for TestFunctionJet {
    fn default() -> Self {
        Self::identity()
    }
}

/// `Σ_j Δ(S_{t_j}, t_j)(S_{t_{j+1}} − S_{t_j})` over the grid points
/// `0, stride, 2·stride, …` and the final point.
pub(crate) fn hedge_gain(
    path: &[f64],
    times: &[f64],
    pricer: &dyn HedgePricer,
    coeffs: &[f64],
    stride: usize,
) -> Result<f64> {
    let last = path.len() - 1;
    let mut gain = 0.0;
    let mut j = 0;
    while j < last {
        let next = (j + stride).min(last);
        gain += pricer.delta(coeffs, path[j], times[j])? * (path[next] - path[j]);
        j = next;
    }
    Ok(gain)
}

/// `F(x, 0) + Σ_j Δ(S_{t_j}, t_j)(S_{t_{j+1}} − S_{t_j}) − Φ(S_T)`, rebalancing
/// at the left end of each step.
pub fn hedge_pnl(
    path: &[f64],
    times: &[f64],
    pricer: &dyn HedgePricer,
    coeffs: &[f64],
    option: &OptionSpec,
) -> Result<f64> {
    if path.len() != times.len() || path.len() < 2 {
        return Err(Error::InvalidInput("path and time grid must match and have >= 2 points".into()));
    }
    let premium = pricer.price(coeffs, path[0], times[0])?;
    let gain = hedge_gain(path, times, pricer, coeffs, 1)?;
    Ok(premium + gain - option.payoff.value(path[path.len() - 1]))
}

/// Summary of a hedging experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnlStats {
    pub n_paths: usize,
    pub mean: f64,
    pub stderr: f64,
    pub variance: f64,
    /// Mean of the hedging gain alone; a martingale when the drift is zero.
    pub gain_mean: f64,
    pub gain_stderr: f64,
    pub premium: f64,
}

/// Per-path P&L with its hedging gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPnl {
    pub path: usize,
    pub terminal: f64,
    pub gain: f64,
    pub pnl: f64,
}

fn mean_sd(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let n = xs.clone().count();
    let mean = xs.clone().sum::<f64>() / n as f64;
    let var = if n > 1 {
        xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    (mean, var, n)
}

/// Sells `option` at the estimated-coefficient price, hedges along paths of
/// the true model, and reports ensemble statistics and per-path values.
#[allow(clippy::too_many_arguments)]
pub fn simulate_pnl(
    true_basis: &VolatilityBasis,
    estimated_coeffs: &[f64],
    pricer: &dyn HedgePricer,
    mu: f64,
    x0: f64,
    option: &OptionSpec,
    cfg: &SimulationConfig,
) -> Result<(PnlStats, Vec<PathPnl>)> {
    true_basis.validate()?;
    cfg.validate(true_basis)?;
    option.validate()?;
    ensure_finite("mu", mu)?;
    ensure_positive("x0", x0)?;
    let times = cfg.time_grid(option.maturity);
    let coeffs = true_basis.coefficients();
    let premium = pricer.price(estimated_coeffs, x0, 0.0)?;
    let rows = with_workers(cfg.workers, || {
        map_batches(cfg.n_paths, N_BATCHES, |_, range| {
            let mut buf = vec![0.0; times.len()];
            let mut out = Vec::with_capacity(range.len());
            for i in range {
                let mut rng = path_rng(cfg.seed, i as u64);
                simulate_one(true_basis, &coeffs, mu, x0, &times, cfg.scheme, &mut rng, &mut buf)?;
                let gain = hedge_gain(&buf, &times, pricer, estimated_coeffs, 1)?;
                let terminal = buf[buf.len() - 1];
                out.push(PathPnl {
                    path: i,
                    terminal,
                    gain,
                    pnl: premium + gain - option.payoff.value(terminal),
                });
            }
            Ok(out)
        })
    })??
    .concat();
    let (mean, variance, n) = mean_sd(rows.iter().map(|r| r.pnl));
    let (gain_mean, gain_var, _) = mean_sd(rows.iter().map(|r| r.gain));
    Ok((
        PnlStats {
            n_paths: n,
            mean,
            stderr: (variance / n as f64).sqrt(),
            variance,
            gain_mean,
            gain_stderr: (gain_var / n as f64).sqrt(),
            premium,
        },
        rows,
    ))
}
