//! Empirical check of the truncated expansion
//! `𝔼[h(P&L)] ≈ h(0) + ε·bias + √(ε·variance)·G` by an outer loop over
//! perturbed coefficients and an inner hedging Monte Carlo.
//!
//! All outer draws share the same inner paths. Each draw's signal is its
//! inner mean minus the inner mean at the unperturbed coefficients, which
//! removes the common Monte Carlo and discretization error of the level.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::basis::VolatilityBasis;
use super::hedge::{hedge_gain, TestFunctionJet};
use super::law::PnLLawEstimate;
use super::paths::{simulate_one, SimulationConfig};
use super::payoff::OptionSpec;
use super::pricer::HedgePricer;
use super::rng::{map_batches, outer_rng, path_rng, standard_normal, with_workers, N_BATCHES};
use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::normal;

pub const MIN_OUTER: usize = 1000;
/// Inner error above this fraction of the signal flags insufficient resolution.
pub const RESOLUTION_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionMethod {
    /// Chebyshev interpolation when exactly one coefficient varies, direct otherwise.
    #[default]
    Auto,
    /// Re-hedge every path for every distinct outer draw.
    Direct,
    /// Interpolate each path's hedging gain in the single varying coefficient.
    Chebyshev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    pub n_outer: usize,
    /// Pair each outer draw `G` with `−G`.
    #[serde(default = "default_true")]
    pub antithetic: bool,
    #[serde(default)]
    pub method: ExpansionMethod,
    #[serde(default = "default_nodes")]
    pub chebyshev_nodes: usize,
    #[serde(default = "default_ks")]
    pub tail_k: Vec<f64>,
}

fn default_true() -> bool {
    true
}

fn default_nodes() -> usize {
    17
}

fn default_ks() -> Vec<f64> {
    vec![1.0, 2.0, 3.0]
}

impl ValidationConfig {
    pub fn new(n_outer: usize) -> Self {
        Self {
            n_outer,
            antithetic: true,
            method: ExpansionMethod::Auto,
            chebyshev_nodes: default_nodes(),
            tail_k: default_ks(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_outer < MIN_OUTER {
            return Err(Error::InvalidInput(format!("n_outer must be >= {MIN_OUTER}, got {}", self.n_outer)));
        }
        if self.antithetic && self.n_outer % 2 == 1 {
            return Err(Error::InvalidInput("antithetic outer draws need an even n_outer".into()));
        }
        if self.chebyshev_nodes < 3 {
            return Err(Error::InvalidInput("chebyshev_nodes must be >= 3".into()));
        }
        for &k in &self.tail_k {
            if !(k >= 1.0) || !k.is_finite() {
                return Err(Error::InvalidInput(format!("tail multipliers must be finite and >= 1, got {k}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterDraw {
    pub coefficients: Vec<f64>,
    /// Inner estimate of `𝔼[h(P&L)]` under these coefficients.
    pub inner_mean: f64,
    pub inner_stderr: f64,
}

/// Empirical moment against its prediction, both in unscaled units
/// (multiplied by `ε`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub empirical: f64,
    pub predicted: f64,
    /// `empirical / ε`; absent when `ε = 0`.
    pub empirical_per_epsilon: Option<f64>,
    pub predicted_per_epsilon: f64,
    pub stderr_outer: f64,
    pub stderr_inner: f64,
    pub discretization: f64,
    pub combined_stderr: f64,
    pub predicted_stderr: f64,
    /// `3 √(combined² + predicted_stderr²)`.
    pub tolerance: f64,
    pub pass: bool,
    pub insufficient_resolution: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub k: f64,
    pub bound: f64,
    /// Bound plus a one-sided 99% binomial allowance.
    pub allowance: f64,
    pub exceedances: usize,
    pub frequency: f64,
    /// False when the predicted variance is zero and the event is undefined.
    pub applicable: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub epsilon: f64,
    pub n_outer: usize,
    pub n_paths: usize,
    pub n_steps: usize,
    pub method: ExpansionMethod,
    /// Inner estimate at the unperturbed coefficients.
    pub baseline_mean: f64,
    pub bias: MomentCheck,
    pub variance: MomentCheck,
    pub tails: Vec<TailCheck>,
    pub pass: bool,
    pub draws: Vec<OuterDraw>,
}

impl ValidationReport {
    /// One row per outer draw: coefficients, inner mean, inner standard error.
    pub fn write_draws_csv<W: Write>(&self, w: W) -> Result<()> {
        let io = |e: csv::Error| Error::InvalidInput(format!("cannot write CSV: {e}"));
        let mut out = csv::Writer::from_writer(w);
        let n = self.draws.first().map_or(0, |d| d.coefficients.len());
        let mut header: Vec<String> = (0..n).map(|i| format!("a{i}")).collect();
        header.extend(["inner_mean".into(), "inner_stderr".into()]);
        out.write_record(&header).map_err(io)?;
        for d in &self.draws {
            let mut row: Vec<String> = d.coefficients.iter().map(|v| v.to_string()).collect();
            row.push(d.inner_mean.to_string());
            row.push(d.inner_stderr.to_string());
            out.write_record(&row).map_err(io)?;
        }
        out.flush().map_err(|e| Error::InvalidInput(format!("cannot write CSV: {e}")))
    }
}

/// Per-batch sums of `h(P&L)` for every evaluation point, fine and coarse grid.
/// Fine sums, coarse sums and path count of one batch.
type BatchSums = (Vec<f64>, Vec<f64>, usize);

struct InnerSums {
    fine: Vec<Vec<f64>>,
    coarse: Vec<Vec<f64>>,
    counts: Vec<usize>,
}

/// Outer draws `aᵢ' = aᵢ + ε𝒜[aᵢ] + √(εΓ[aᵢ]) Gᵢ`.
fn outer_draws(basis: &VolatilityBasis, eps: f64, vcfg: &ValidationConfig, seed: u64) -> Vec<Vec<f64>> {
    let base = basis.coefficients();
    let uncertain = basis.uncertain_indices();
    let perturb = |g: &[f64], sign: f64| {
        let mut c = base.clone();
        for (&i, &gi) in uncertain.iter().zip(g) {
            let u = &basis.components[i].coefficient;
            c[i] += eps * u.bias + (eps * u.gamma).sqrt() * sign * gi;
        }
        c
    };
    let normals = |idx: usize| {
        let mut rng = outer_rng(seed, idx as u64);
        uncertain.iter().map(|_| standard_normal(&mut rng)).collect::<Vec<f64>>()
    };
    if vcfg.antithetic {
        (0..vcfg.n_outer / 2)
            .flat_map(|q| {
                let g = normals(q);
                [perturb(&g, 1.0), perturb(&g, -1.0)]
            })
            .collect()
    } else {
        (0..vcfg.n_outer).map(|k| perturb(&normals(k), 1.0)).collect()
    }
}

fn key(c: &[f64]) -> Vec<u64> {
    c.iter().map(|v| v.to_bits()).collect()
}

#[allow(clippy::too_many_arguments)]
fn inner_direct(
    true_basis: &VolatilityBasis,
    pricer: &dyn HedgePricer,
    mu: f64,
    x0: f64,
    option: &OptionSpec,
    h: &TestFunctionJet,
    cfg: &SimulationConfig,
    points: &[Vec<f64>],
) -> Result<InnerSums> {
    let mut unique: Vec<Vec<f64>> = Vec::new();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let map: Vec<usize> = points
        .iter()
        .map(|p| {
            *index.entry(key(p)).or_insert_with(|| {
                unique.push(p.clone());
                unique.len() - 1
            })
        })
        .collect();
    let premiums = unique
        .iter()
        .map(|c| pricer.price(c, x0, 0.0))
        .collect::<Result<Vec<f64>>>()?;
    let times = cfg.time_grid(option.maturity);
    let coeffs = true_basis.coefficients();
    let per_batch = map_batches(cfg.n_paths, N_BATCHES, |_, range| {
        let mut buf = vec![0.0; times.len()];
        let mut fine = vec![0.0; unique.len()];
        let mut coarse = vec![0.0; unique.len()];
        let n = range.len();
        for p in range {
            let mut rng = path_rng(cfg.seed, p as u64);
            simulate_one(true_basis, &coeffs, mu, x0, &times, cfg.scheme, &mut rng, &mut buf)?;
            let payoff = option.payoff.value(buf[buf.len() - 1]);
            for (u, c) in unique.iter().enumerate() {
                let gf = hedge_gain(&buf, &times, pricer, c, 1)?;
                let gc = hedge_gain(&buf, &times, pricer, c, 2)?;
                fine[u] += h.eval(premiums[u] + gf - payoff);
                coarse[u] += h.eval(premiums[u] + gc - payoff);
            }
        }
        Ok((fine, coarse, n))
    })?;
    let pick = |sel: fn(&BatchSums) -> &Vec<f64>| -> Vec<Vec<f64>> {
        map.iter().map(|&u| per_batch.iter().map(|b| sel(b)[u]).collect()).collect()
    };
    Ok(InnerSums {
        fine: pick(|b| &b.0),
        coarse: pick(|b| &b.1),
        counts: per_batch.iter().map(|b| b.2).collect(),
    })
}

/// Barycentric weights at `x` for Chebyshev points of the second kind.
fn barycentric(nodes: &[f64], x: f64) -> Vec<f64> {
    let n = nodes.len();
    if let Some(m) = nodes.iter().position(|&xm| xm == x) {
        let mut w = vec![0.0; n];
        w[m] = 1.0;
        return w;
    }
    let mut w: Vec<f64> = (0..n)
        .map(|m| {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let half = if m == 0 || m == n - 1 { 0.5 } else { 1.0 };
            sign * half / (x - nodes[m])
        })
        .collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

struct NodeBatch {
    n: usize,
    /// `Σ_p L_p(node m)` with `L = gain − payoff`.
    fine: Vec<f64>,
    coarse: Vec<f64>,
    /// `Σ_p L_p(m) L_p(m')`, only when `h''(0) ≠ 0`.
    fine_sq: Vec<f64>,
    coarse_sq: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn inner_chebyshev(
    true_basis: &VolatilityBasis,
    pricer: &dyn HedgePricer,
    mu: f64,
    x0: f64,
    option: &OptionSpec,
    h: &TestFunctionJet,
    cfg: &SimulationConfig,
    points: &[Vec<f64>],
    axis: usize,
    n_nodes: usize,
) -> Result<InnerSums> {
    let lo = points.iter().map(|p| p[axis]).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p[axis]).fold(f64::NEG_INFINITY, f64::max);
    let nodes: Vec<f64> = (0..n_nodes)
        .map(|m| {
            let c = (std::f64::consts::PI * m as f64 / (n_nodes - 1) as f64).cos();
            lo + (hi - lo) * 0.5 * (1.0 - c)
        })
        .collect();
    let node_coeffs: Vec<Vec<f64>> = nodes
        .iter()
        .map(|&v| {
            let mut c = points[0].clone();
            c[axis] = v;
            c
        })
        .collect();
    let quadratic = h.h2 != 0.0;
    let times = cfg.time_grid(option.maturity);
    let coeffs = true_basis.coefficients();
    let last = times.len() - 1;

    let batches = map_batches(cfg.n_paths, N_BATCHES, |_, range| {
        let mut buf = vec![0.0; times.len()];
        let sq = if quadratic { n_nodes * n_nodes } else { 0 };
        let mut acc = NodeBatch {
            n: range.len(),
            fine: vec![0.0; n_nodes],
            coarse: vec![0.0; n_nodes],
            fine_sq: vec![0.0; sq],
            coarse_sq: vec![0.0; sq],
        };
        let mut gf = vec![0.0; n_nodes];
        let mut gc = vec![0.0; n_nodes];
        for p in range {
            let mut rng = path_rng(cfg.seed, p as u64);
            simulate_one(true_basis, &coeffs, mu, x0, &times, cfg.scheme, &mut rng, &mut buf)?;
            gf.iter_mut().for_each(|v| *v = 0.0);
            gc.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..last {
                let (s, t) = (buf[j], times[j]);
                let step = buf[j + 1] - s;
                let coarse_step = if j % 2 == 0 { Some(buf[(j + 2).min(last)] - s) } else { None };
                for (m, c) in node_coeffs.iter().enumerate() {
                    let d = pricer.delta(c, s, t)?;
                    gf[m] += d * step;
                    if let Some(cs) = coarse_step {
                        gc[m] += d * cs;
                    }
                }
            }
            let payoff = option.payoff.value(buf[last]);
            for m in 0..n_nodes {
                gf[m] -= payoff;
                gc[m] -= payoff;
                acc.fine[m] += gf[m];
                acc.coarse[m] += gc[m];
            }
            if quadratic {
                for m in 0..n_nodes {
                    for q in 0..n_nodes {
                        acc.fine_sq[m * n_nodes + q] += gf[m] * gf[q];
                        acc.coarse_sq[m * n_nodes + q] += gc[m] * gc[q];
                    }
                }
            }
        }
        Ok(acc)
    })?;

    let mut fine = Vec::with_capacity(points.len());
    let mut coarse = Vec::with_capacity(points.len());
    for p in points {
        let f = pricer.price(p, x0, 0.0)?;
        let w = barycentric(&nodes, p[axis]);
        let dot = |v: &[f64]| w.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        let quad = |m: &[f64]| {
            (0..n_nodes)
                .map(|i| w[i] * (0..n_nodes).map(|q| m[i * n_nodes + q] * w[q]).sum::<f64>())
                .sum::<f64>()
        };
        let sums = |lin: &[f64], sq: &[f64], n: f64| {
            let l = dot(lin);
            let mut v = n * h.h0 + h.h1 * (n * f + l);
            if quadratic {
                v += 0.5 * h.h2 * (n * f * f + 2.0 * f * l + quad(sq));
            }
            v
        };
        fine.push(batches.iter().map(|b| sums(&b.fine, &b.fine_sq, b.n as f64)).collect());
        coarse.push(batches.iter().map(|b| sums(&b.coarse, &b.coarse_sq, b.n as f64)).collect());
    }
    Ok(InnerSums {
        fine,
        coarse,
        counts: batches.iter().map(|b| b.n).collect(),
    })
}

/// Mean and variance of the baseline-corrected signals, leaving out one
/// batch when `skip` is set.
fn signal_moments(sums: &[Vec<f64>], counts: &[usize], skip: Option<usize>) -> (Vec<f64>, f64, f64) {
    let n: usize = counts.iter().enumerate().filter(|(b, _)| Some(*b) != skip).map(|(_, c)| c).sum();
    let means: Vec<f64> = sums
        .iter()
        .map(|row| {
            row.iter().enumerate().filter(|(b, _)| Some(*b) != skip).map(|(_, v)| v).sum::<f64>() / n as f64
        })
        .collect();
    let base = means[means.len() - 1];
    let signals: Vec<f64> = means[..means.len() - 1].iter().map(|m| m - base).collect();
    let k = signals.len() as f64;
    let mean = signals.iter().sum::<f64>() / k;
    let var = signals.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / k;
    (signals, mean, var)
}

fn sd_of_mean(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0) / n).sqrt()
}

fn jackknife(estimates: &[f64]) -> f64 {
    let b = estimates.len() as f64;
    let m = estimates.iter().sum::<f64>() / b;
    ((b - 1.0) / b * estimates.iter().map(|e| (e - m) * (e - m)).sum::<f64>()).sqrt()
}

#[allow(clippy::too_many_arguments)]
fn moment_check(
    empirical: f64,
    coarse: f64,
    stderr_outer: f64,
    stderr_inner: f64,
    predicted: f64,
    predicted_stderr: f64,
    eps: f64,
) -> MomentCheck {
    let discretization = (empirical - coarse).abs();
    let combined = (stderr_outer.powi(2) + stderr_inner.powi(2) + discretization.powi(2)).sqrt();
    let p_raw = eps * predicted;
    let p_se = eps * predicted_stderr;
    let tolerance = 3.0 * (combined * combined + p_se * p_se).sqrt();
    MomentCheck {
        empirical,
        predicted: p_raw,
        empirical_per_epsilon: (eps > 0.0).then(|| empirical / eps),
        predicted_per_epsilon: predicted,
        stderr_outer,
        stderr_inner,
        discretization,
        combined_stderr: combined,
        predicted_stderr: p_se,
        tolerance,
        pass: (empirical - p_raw).abs() <= tolerance,
        insufficient_resolution: stderr_inner > RESOLUTION_LIMIT * empirical.abs(),
    }
}

/// Runs the outer/inner experiment and compares it with `expected`.
///
/// The perturbation is centred on the coefficients of `true_basis` and the
/// perturbed coefficients hedge paths of the true model.
#[allow(clippy::too_many_arguments)]
pub fn validate_expansion(
    true_basis: &VolatilityBasis,
    pricer: &dyn HedgePricer,
    mu: f64,
    x0: f64,
    option: &OptionSpec,
    h: &TestFunctionJet,
    cfg: &SimulationConfig,
    vcfg: &ValidationConfig,
    expected: &PnLLawEstimate,
) -> Result<ValidationReport> {
    true_basis.validate()?;
    cfg.validate(true_basis)?;
    vcfg.validate()?;
    option.validate()?;
    ensure_finite("mu", mu)?;
    ensure_positive("x0", x0)?;
    if cfg.n_paths < N_BATCHES {
        return Err(Error::InvalidInput(format!("need at least {N_BATCHES} inner paths")));
    }
    if cfg.n_steps < 2 {
        return Err(Error::InvalidInput("need at least 2 steps for the discretization check".into()));
    }
    let eps = true_basis.epsilon()?;
    let base = true_basis.coefficients();
    let mut points = outer_draws(true_basis, eps, vcfg, cfg.seed);
    points.push(base.clone());

    let varying: Vec<usize> = (0..base.len())
        .filter(|&i| points.iter().any(|p| p[i] != base[i]))
        .collect();
    let method = match (vcfg.method, varying.len()) {
        (ExpansionMethod::Auto, 1) | (ExpansionMethod::Chebyshev, 1) => ExpansionMethod::Chebyshev,
        (ExpansionMethod::Chebyshev, n) if n > 1 => {
            return Err(Error::InvalidInput(format!(
                "chebyshev method needs exactly one varying coefficient, found {n}"
            )))
        }
        _ => ExpansionMethod::Direct,
    };

    let sums = with_workers(cfg.workers, || match method {
        ExpansionMethod::Chebyshev => inner_chebyshev(
            true_basis,
            pricer,
            mu,
            x0,
            option,
            h,
            cfg,
            &points,
            varying[0],
            vcfg.chebyshev_nodes,
        ),
        _ => inner_direct(true_basis, pricer, mu, x0, option, h, cfg, &points),
    })??;

    let (signals, mean, var) = signal_moments(&sums.fine, &sums.counts, None);
    let (_, mean_c, var_c) = signal_moments(&sums.coarse, &sums.counts, None);

    let group = if vcfg.antithetic { 2 } else { 1 };
    let group_means: Vec<f64> = signals.chunks(group).map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
    let group_sq: Vec<f64> = signals
        .chunks(group)
        .map(|g| g.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / g.len() as f64)
        .collect();
    let (jack_mean, jack_var): (Vec<f64>, Vec<f64>) = (0..sums.counts.len())
        .map(|b| {
            let (_, m, v) = signal_moments(&sums.fine, &sums.counts, Some(b));
            (m, v)
        })
        .unzip();

    let bias = moment_check(
        mean,
        mean_c,
        sd_of_mean(&group_means),
        jackknife(&jack_mean),
        expected.bias.value,
        expected.bias.stderr,
        eps,
    );
    let variance = moment_check(
        var,
        var_c,
        sd_of_mean(&group_sq),
        jackknife(&jack_var),
        expected.variance.value,
        expected.variance.stderr,
        eps,
    );

    let n = signals.len() as f64;
    let z99 = -normal::inverse_cdf(0.01);
    let tails = vcfg
        .tail_k
        .iter()
        .map(|&k| {
            let bound = 1.0 / (1.0 + k * k);
            let allowance = bound + z99 * (bound * (1.0 - bound) / n).sqrt();
            let applicable = expected.variance.value > 0.0 && eps > 0.0;
            let threshold = eps * expected.bias.value + k * (eps * expected.variance.value).sqrt();
            let exceedances = if applicable { signals.iter().filter(|&&s| s >= threshold).count() } else { 0 };
            let frequency = exceedances as f64 / n;
            TailCheck {
                k,
                bound,
                allowance,
                exceedances,
                frequency,
                applicable,
                pass: !applicable || frequency <= allowance,
            }
        })
        .collect::<Vec<_>>();

    let total: usize = sums.counts.iter().sum();
    let draws = (0..signals.len())
        .map(|k| {
            let batch_means: Vec<f64> = sums.fine[k]
                .iter()
                .zip(&sums.counts)
                .map(|(s, &c)| s / c as f64)
                .collect();
            OuterDraw {
                coefficients: points[k].clone(),
                inner_mean: sums.fine[k].iter().sum::<f64>() / total as f64,
                inner_stderr: sd_of_mean(&batch_means),
            }
        })
        .collect();
    let baseline_mean = sums.fine[signals.len()].iter().sum::<f64>() / total as f64;
    let pass = bias.pass && variance.pass && tails.iter().all(|t| t.pass);
    Ok(ValidationReport {
        epsilon: eps,
        n_outer: vcfg.n_outer,
        n_paths: cfg.n_paths,
        n_steps: cfg.n_steps,
        method,
        baseline_mean,
        bias,
        variance,
        tails,
        pass,
        draws,
    })
}
