//! Path simulation of `dS = S μ dt + S σ(t, S) dB` on a uniform grid.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::basis::VolatilityBasis;
use super::rng::{map_batches, path_rng, standard_normal, with_workers, N_BATCHES};
use crate::error::{ensure_finite, ensure_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Closed-form log-normal step; constant volatility only.
    ExactLognormal,
    /// Euler on `ln S` with coefficients frozen at the left point.
    #[serde(rename = "euler")]
    LogEuler,
    /// Euler on `S` itself.
    PlainEuler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Thread count; results do not depend on it.
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
}

impl SimulationConfig {
    pub fn new(n_paths: usize, n_steps: usize, seed: u64, scheme: Scheme) -> Self {
        Self {
            n_paths,
            n_steps,
            seed,
            scheme,
            workers: None,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    pub fn validate(&self, basis: &VolatilityBasis) -> Result<()> {
        if self.n_paths == 0 || self.n_steps == 0 {
            return Err(Error::InvalidInput("n_paths and n_steps must be > 0".into()));
        }
        if self.scheme == Scheme::ExactLognormal && !basis.is_constant() {
            return Err(Error::InvalidInput(
                "exact_lognormal requires a constant volatility basis".into(),
            ));
        }
        Ok(())
    }

    pub fn time_grid(&self, maturity: f64) -> Vec<f64> {
        let n = self.n_steps;
        (0..=n).map(|j| maturity * j as f64 / n as f64).collect()
    }
}

/// Paths stored row-major, `n_steps + 1` values per path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.values.len() / self.times.len()
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let w = self.times.len();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn terminal(&self) -> impl Iterator<Item = f64> + '_ {
        let w = self.times.len();
        self.values.chunks_exact(w).map(move |p| p[w - 1])
    }
}

/// Fills `out` with one path. `out.len()` must equal `times.len()`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn simulate_one(
    basis: &VolatilityBasis,
    coeffs: &[f64],
    mu: f64,
    x0: f64,
    times: &[f64],
    scheme: Scheme,
    rng: &mut ChaCha8Rng,
    out: &mut [f64],
) -> Result<()> {
    out[0] = x0;
    let constant = basis.constant_sigma(coeffs);
    if let Some(sig) = constant {
        if !(sig >= 0.0) || !sig.is_finite() {
            return Err(Error::Domain(format!("volatility {sig} at (t=0, s={x0}) is not admissible")));
        }
    }
    let mut s = x0;
    for j in 0..times.len() - 1 {
        let (t, dt) = (times[j], times[j + 1] - times[j]);
        let z = standard_normal(rng);
        let sig = match constant {
            Some(v) => v,
            None => basis.checked_sigma(coeffs, t, s)?,
        };
        s = match scheme {
            Scheme::ExactLognormal | Scheme::LogEuler => {
                s * ((mu - 0.5 * sig * sig) * dt + sig * dt.sqrt() * z).exp()
            }
            Scheme::PlainEuler => {
                let next = s * (1.0 + mu * dt + sig * dt.sqrt() * z);
                if !(next > 0.0) {
                    return Err(Error::Domain(format!(
                        "plain Euler step left the positive half-line at (t={}, s={s})",
                        times[j + 1]
                    )));
                }
                next
            }
        };
        out[j + 1] = s;
    }
    Ok(())
}

/// Simulates `cfg.n_paths` paths of the true model over `[0, maturity]`.
pub fn simulate_paths(
    basis: &VolatilityBasis,
    mu: f64,
    x0: f64,
    maturity: f64,
    cfg: &SimulationConfig,
) -> Result<PathEnsemble> {
    basis.validate()?;
    cfg.validate(basis)?;
    ensure_finite("mu", mu)?;
    ensure_positive("x0", x0)?;
    ensure_positive("maturity", maturity)?;
    let times = cfg.time_grid(maturity);
    let coeffs = basis.coefficients();
    let width = times.len();
    let chunks = with_workers(cfg.workers, || {
        map_batches(cfg.n_paths, N_BATCHES, |_, range| {
            let mut buf = vec![0.0; range.len() * width];
            for (i, row) in range.zip(buf.chunks_exact_mut(width)) {
                let mut rng = path_rng(cfg.seed, i as u64);
                simulate_one(basis, &coeffs, mu, x0, &times, cfg.scheme, &mut rng, row)?;
            }
            Ok(buf)
        })
    })??;
    Ok(PathEnsemble {
        times,
        values: chunks.concat(),
    })
}
