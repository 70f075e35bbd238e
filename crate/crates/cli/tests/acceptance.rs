//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use uncertain_vol::error_calculus::{propagate, SmoothFunctionJet, UncertainParameter};
use uncertain_vol::lognormal::{self, CallSpec, LognormalMarket, TotalVolUncertainty};
use uncertain_vol::sim::{PnLLawEstimate, ValidationReport};
use uncertain_vol::{build_smile, implied_vol, quote_call, smile_diagnostics, Error, QuoteSource, RiskPolicy};
use uncertain_vol_cli::{run_text, Command, RunOptions};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

// ---------------------------------------------------------------------------
// Independent Black-Scholes oracle (own normal CDF via erfc).

fn ncdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Out-of-the-money side (put above the strike, call below) as a function of
/// total volatility `u`; shares vega and vomma with the call but avoids the
/// cancellation of a deep in-the-money price.
fn otm_price(x: f64, k: f64, u: f64) -> f64 {
    let d1 = ((x / k).ln() + 0.5 * u * u) / u;
    let d2 = d1 - u;
    if x >= k {
        k * ncdf(-d2) - x * ncdf(-d1)
    } else {
        x * ncdf(d1) - k * ncdf(d2)
    }
}

/// First and second derivatives by central differences with two Richardson
/// levels. Deep out-of-the-money prices carry only ~10 correct digits, so the
/// step stays large and the extrapolation removes the truncation error.
fn fd12(f: impl Fn(f64) -> f64, at: f64, h: f64) -> (f64, f64) {
    let c = f(at);
    let d = |h: f64| {
        let (p, m) = (f(at + h), f(at - h));
        ((p - m) / (2.0 * h), (p - 2.0 * c + m) / (h * h))
    };
    let (a, b, e) = (d(h), d(0.5 * h), d(0.25 * h));
    let r = |x: f64, y: f64| (4.0 * y - x) / 3.0;
    let (r1, r2) = ((r(a.0, b.0), r(a.1, b.1)), (r(b.0, e.0), r(b.1, e.1)));
    ((16.0 * r2.0 - r1.0) / 15.0, (16.0 * r2.1 - r1.1) / 15.0)
}

/// Step matched to how fast the price varies in total volatility.
fn vol_step(x: f64, k: f64, u: f64) -> f64 {
    let d = (x / k).ln().abs() / u + 0.5 * u;
    0.1 * u / (1.0 + d * d)
}

struct GridPoint {
    m: LognormalMarket,
    c: CallSpec,
    gamma: f64,
    bias: f64,
}

fn random_grid(n: usize, seed: u64) -> Vec<GridPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let strike = 100.0;
            let ratio: f64 = rng.random_range(0.5..2.0);
            let sigma0: f64 = rng.random_range(0.05..0.6);
            let maturity: f64 = rng.random_range(0.1..3.0);
            GridPoint {
                m: LognormalMarket::new(ratio * strike, sigma0).unwrap(),
                c: CallSpec::new(strike, maturity).unwrap(),
                gamma: rng.random_range(1e-4..0.05),
                bias: rng.random_range(-0.01..0.01),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut worst_bias: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for p in random_grid(1000, 1) {
        let (x, k) = (p.m.spot, p.c.strike);
        let u0 = p.m.sigma0 * p.c.maturity.sqrt();
        let (vega, vomma) = fd12(|u| otm_price(x, k, u), u0, vol_step(x, k, u0));
        let jet = SmoothFunctionJet::new(lognormal::call_price(&p.m, &p.c).unwrap(), vega, vomma);
        let prop = propagate(&jet, &UncertainParameter::new(u0, p.gamma, p.bias, 1.0).unwrap()).unwrap();
        let u = TotalVolUncertainty::new(p.gamma, p.bias, 1.0).unwrap();
        let bias = lognormal::call_bias(&p.m, &p.c, &u).unwrap();
        let var = lognormal::call_variance(&p.m, &p.c, &u).unwrap();
        // Relative to the magnitudes of the two bias terms, which may cancel.
        let scale = (vega * p.bias).abs() + (0.5 * vomma * p.gamma).abs();
        if scale > 0.0 {
            worst_bias = worst_bias.max((bias - prop.bias).abs() / scale);
        } else {
            worst_bias = worst_bias.max(bias.abs());
        }
        if prop.gamma > 0.0 {
            worst_var = worst_var.max((var - prop.gamma).abs() / prop.gamma);
        } else {
            worst_var = worst_var.max(var.abs());
        }
    }
    let t = start.elapsed();
    verdict(
        worst_bias <= 1e-6 && worst_var <= 1e-6 && t < Duration::from_secs(5),
        format!("max rel err bias {worst_bias:.2e}, variance {worst_var:.2e} (tol 1e-6), {t:.2?}"),
    )
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for p in random_grid(1000, 1) {
        let u = TotalVolUncertainty::new(p.gamma, p.bias, 1.0).unwrap();
        let (x, k) = (p.m.spot, p.c.strike);
        let u0 = p.m.sigma0 * p.c.maturity.sqrt();
        let bias_at = |strike: f64| lognormal::call_bias(&p.m, &p.c.with_strike(strike), &u).unwrap();
        let (fd, _) = fd12(bias_at, k, k * vol_step(x, k, u0));
        let exact = lognormal::bias_strike_derivative(&p.m, &p.c, &u).unwrap();
        // Natural scale: bias terms over the strike scale K·σ₀√T.
        let (vega, vomma) = fd12(|v| otm_price(x, k, v), u0, vol_step(x, k, u0));
        let scale = ((vega * p.bias).abs() + (0.5 * vomma * p.gamma).abs()) / (k * u0);
        let denom = fd.abs().max(scale);
        if denom > 0.0 {
            worst = worst.max((exact - fd).abs() / denom);
        }
    }
    let mut worst_atm: f64 = 0.0;
    for p in random_grid(1000, 2) {
        let m = p.m.with_spot(p.c.strike);
        let rr = 0.25 * m.sigma0 * m.sigma0 * p.c.maturity;
        let u = TotalVolUncertainty::from_rr(rr, p.gamma, 1.0, &m, &p.c).unwrap();
        let b = lognormal::call_bias(&m, &p.c, &u).unwrap().abs();
        let db = lognormal::bias_strike_derivative(&m, &p.c, &u).unwrap().abs();
        worst_atm = worst_atm.max(b.max(db) / m.spot);
    }
    let t = start.elapsed();
    verdict(
        worst <= 1e-5 && worst_atm <= 1e-10 && t < Duration::from_secs(5),
        format!(
            "max rel err dBias/dK {worst:.2e} (tol 1e-5), ATM |bias|,|dBias/dK| / x at threshold {worst_atm:.2e} (tol 1e-10), {t:.2?}"
        ),
    )
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    // Standard normal upper quantiles.
    let table = [
        (0.01, 2.326_347_874_040_840_8),
        (0.05, 1.644_853_626_951_472_2),
        (0.1, 1.281_551_565_544_600_4),
        (0.25, 0.674_489_750_196_081_7),
    ];
    let mut ok = true;
    let mut worst_mid: f64 = 0.0;
    let mut worst_spread: f64 = 0.0;
    for p in random_grid(200, 3) {
        let eps = 1e-4;
        let u = TotalVolUncertainty::new(p.gamma, p.bias, eps).unwrap();
        let fair = lognormal::call_price(&p.m, &p.c).unwrap();
        let bias = lognormal::call_bias(&p.m, &p.c, &u).unwrap();
        let var = lognormal::call_variance(&p.m, &p.c, &u).unwrap();
        let mut mids = Vec::new();
        for &(alpha, q) in &table {
            let g = quote_call(&p.m, &p.c, &u, &RiskPolicy::gaussian(alpha).unwrap()).unwrap();
            let c = quote_call(&p.m, &p.c, &u, &RiskPolicy::chebyshev(alpha).unwrap()).unwrap();
            let target = fair + eps * bias;
            let ulp = f64::EPSILON * target.abs().max(f64::MIN_POSITIVE);
            worst_mid = worst_mid.max((g.mid - target).abs() / ulp);
            let spread = 2.0 * (eps * var).sqrt() * q;
            if spread > 0.0 {
                worst_spread = worst_spread.max((2.0 * g.spread_component - spread).abs() / spread);
            }
            ok &= (g.ask - g.bid - 2.0 * g.spread_component).abs() <= 4.0 * ulp;
            ok &= c.ask - c.bid >= g.ask - g.bid;
            ok &= c.mid == g.mid;
            mids.push(g.mid);
        }
        ok &= mids.iter().all(|&m| m == mids[0]);
    }
    let t = start.elapsed();
    verdict(
        ok && worst_mid <= 2.0 && worst_spread <= 1e-12 && t < Duration::from_secs(1),
        format!(
            "mid off by {worst_mid:.1} ulp (tol 2), spread rel err {worst_spread:.2e} (tol 1e-12), α-independent mid and chebyshev ≥ gaussian: {ok}, {t:.2?}"
        ),
    )
}

// ---------------------------------------------------------------------------
// Theorem validation through the command-line runner.

const VALIDATE_CONFIG: &str = r#"{
  "model": {
    "x0": 100.0,
    "mu": 0.0,
    "basis": {"components": [
      {"function": {"kind": "constant", "value": 1.0},
       "coefficient": {"value": 0.2, "gamma": 0.01, "bias": 0.0, "epsilon": 1e-4}}
    ]}
  },
  "option": {"payoff": {"kind": "smoothed_call", "strike": 100.0, "kappa": 0.5}, "maturity": 1.0},
  "test_function": {"h0": 0.0, "h1": 1.0, "h2": 0.0},
  "simulation": {"n_paths": 20000, "n_steps": 256, "seed": 20240601, "scheme": "exact_lognormal"},
  "validation": {"n_outer": 2000}
}"#;

fn with_epsilon(eps: f64) -> String {
    let mut v: Value = serde_json::from_str(VALIDATE_CONFIG).unwrap();
    v["model"]["basis"]["components"][0]["coefficient"]["epsilon"] = Value::from(eps);
    v.to_string()
}

struct ValidateRun {
    law: PnLLawEstimate,
    report: ValidationReport,
    status: i32,
    elapsed: Duration,
}

fn run_validate(text: &str, dir: &Path, workers: usize) -> ValidateRun {
    let start = Instant::now();
    let opts = RunOptions {
        out_dir: dir.to_path_buf(),
        workers: Some(workers),
        ..Default::default()
    };
    let outcome = run_text(Command::Validate, text, &opts).expect("validate run");
    let elapsed = start.elapsed();
    let artifact: Value = serde_json::from_slice(&std::fs::read(dir.join("validate.json")).unwrap()).unwrap();
    ValidateRun {
        law: serde_json::from_value(artifact["result"]["law"].clone()).unwrap(),
        report: serde_json::from_value(artifact["result"]["report"].clone()).unwrap(),
        status: outcome.status,
        elapsed,
    }
}

/// `vega(σ) = σT·E[Φ''(S_T) S_T²]` for a driftless log-normal, by Simpson's rule.
fn smoothed_vega(x: f64, strike: f64, kappa: f64, sigma: f64, maturity: f64) -> f64 {
    let n = 240_000;
    let (a, b) = (-12.0, 12.0);
    let h = (b - a) / n as f64;
    let f = |z: f64| {
        let s = x * (-0.5 * sigma * sigma * maturity + sigma * maturity.sqrt() * z).exp();
        let l = 1.0 / (1.0 + (-(s - strike) / kappa).exp());
        l * (1.0 - l) / kappa * s * s * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
    };
    let mut sum = f(a) + f(b);
    for i in 1..n {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + h * i as f64);
    }
    sigma * maturity * sum * h / 3.0
}

fn criterion_4(run: &ValidateRun) -> Verdict {
    let (gamma, sigma) = (0.01, 0.2);
    let vega = smoothed_vega(100.0, 100.0, 0.5, sigma, 1.0);
    let (_, dvega) = {
        let hv = 1e-3;
        let g = |s: f64| smoothed_vega(100.0, 100.0, 0.5, s, 1.0);
        let d = |h: f64| (g(sigma + h) - g(sigma - h)) / (2.0 * h);
        ((), (4.0 * d(0.5 * hv) - d(hv)) / 3.0)
    };
    let lambda1 = 0.5 * dvega * gamma;
    let psi = vega * vega * gamma;
    // The law estimate carries no Monte Carlo error here (μ = 0 leaves only the
    // t = 0 price terms), so a relative floor covers the bump error.
    let near = |est: &uncertain_vol::sim::Estimate, oracle: f64| {
        (est.value - oracle).abs() <= 3.0 * est.stderr + 1e-4 * oracle.abs()
    };
    let l1_ok = near(&run.law.lambda1, lambda1);
    let psi_ok = near(&run.law.psi, psi);
    let r = &run.report;
    verdict(
        l1_ok && psi_ok && r.bias.pass && r.variance.pass && run.elapsed < Duration::from_secs(600),
        format!(
            "bias/ε {:.5e} vs Λ₁ {:.5e} (tol {:.2e}{}), variance/ε {:.5e} vs Ψ {:.5e} (tol {:.2e}); \
             Λ₁ {:.6e} vs oracle {:.6e}, Ψ {:.6e} vs oracle {:.6e}; {:.1?}",
            r.bias.empirical_per_epsilon.unwrap_or(f64::NAN),
            r.bias.predicted_per_epsilon,
            r.bias.tolerance / r.epsilon,
            if r.bias.insufficient_resolution { ", inner resolution flagged" } else { "" },
            r.variance.empirical_per_epsilon.unwrap_or(f64::NAN),
            r.variance.predicted_per_epsilon,
            r.variance.tolerance / r.epsilon,
            run.law.lambda1.value,
            lambda1,
            run.law.psi.value,
            psi,
            run.elapsed,
        ),
    )
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn criterion_5(runs: &[(f64, &ValidateRun)]) -> Verdict {
    let le: Vec<f64> = runs.iter().map(|(e, _)| e.ln()).collect();
    let lb: Vec<f64> = runs.iter().map(|(_, r)| r.report.bias.empirical.abs().ln()).collect();
    let ls: Vec<f64> = runs.iter().map(|(_, r)| r.report.variance.empirical.sqrt().ln()).collect();
    let (sb, ss) = (slope(&le, &lb), slope(&le, &ls));
    verdict(
        (sb - 1.0).abs() <= 0.1 && (ss - 0.5).abs() <= 0.1,
        format!("slope |bias| {sb:.4} (1.0 ± 0.1), slope stddev {ss:.4} (0.5 ± 0.1)"),
    )
}

fn criterion_6(run: &ValidateRun) -> Verdict {
    let tails = &run.report.tails;
    let pass = !tails.is_empty() && tails.iter().all(|t| t.applicable && t.pass);
    let detail = tails
        .iter()
        .map(|t| format!("k={}: {:.4} ≤ {:.4}", t.k, t.frequency, t.allowance))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(pass, detail)
}

fn criterion_7() -> Verdict {
    let start = Instant::now();
    let m = LognormalMarket::new(100.0, 0.2).unwrap();
    let strikes: Vec<f64> = [0.96, 0.98, 1.0, 1.02, 1.04].iter().map(|f| f * m.spot).collect();
    let maturities = [0.25, 1.0];
    let schedule = |t: f64| {
        let c = CallSpec::new(m.spot, t)?;
        TotalVolUncertainty::from_rr(0.25 * m.sigma0 * m.sigma0 * t, 0.01, 1e-4, &m, &c)
    };
    let policy = RiskPolicy::gaussian(0.05).unwrap();
    let grid = build_smile(&m, &schedule, &policy, &strikes, &maturities, QuoteSource::Mid).unwrap();
    let atm_err = (0..2)
        .map(|i| (grid.get(i, 2).unwrap_or(f64::NAN) - m.sigma0).abs())
        .fold(0.0, f64::max);
    // Central second difference straight from the grid.
    let curv: Vec<f64> = (0..2)
        .map(|i| {
            let v = |j| grid.get(i, j).unwrap_or(f64::NAN);
            (v(1) - 2.0 * v(2) + v(3)) / (2.0f64).powi(2)
        })
        .collect();
    let report = smile_diagnostics(&grid, &m).unwrap();
    let t = start.elapsed();
    verdict(
        atm_err <= 1e-6
            && curv[0] > 0.0
            && curv[1] > 0.0
            && curv[1] < curv[0]
            && report.verdict.label() == "convex, decreasing in T"
            && t < Duration::from_secs(5),
        format!(
            "ATM |σ_imp − σ₀| {atm_err:.2e} (tol 1e-6), d²σ/dK² T=0.25 {:.4e}, T=1 {:.4e}, verdict \"{}\", {t:.2?}",
            curv[0],
            curv[1],
            report.verdict.label()
        ),
    )
}

fn criterion_8() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut worst_price: f64 = 0.0;
    for _ in 0..10_000 {
        let sigma: f64 = rng.random_range(0.05..1.0);
        let maturity: f64 = rng.random_range(0.1..3.0);
        // Strikes within three total-volatility units of the spot, where the
        // price determines the volatility to 1e-9 in double precision.
        let z: f64 = rng.random_range(-3.0..3.0);
        let m = LognormalMarket::new(100.0, sigma).unwrap();
        let c = CallSpec::new(100.0 * (z * sigma * maturity.sqrt()).exp(), maturity).unwrap();
        let p = lognormal::call_price(&m, &c).unwrap();
        let iv = implied_vol(p, &m, &c).unwrap();
        worst = worst.max((iv - sigma).abs());
        worst_price = worst_price.max((lognormal::call_price(&m.with_sigma(iv), &c).unwrap() - p).abs() / m.spot);
    }
    let m = LognormalMarket::new(100.0, 0.2).unwrap();
    let c = CallSpec::new(90.0, 1.0).unwrap();
    let out_of_band = [10.0, 9.0, 100.0, 120.0, -1.0]
        .iter()
        .all(|&p| matches!(implied_vol(p, &m, &c), Err(Error::Domain(_))));
    let t = start.elapsed();
    verdict(
        worst <= 1e-9 && worst_price <= 1e-10 && out_of_band && t < Duration::from_secs(5),
        format!(
            "max |σ_imp − σ| {worst:.2e} (tol 1e-9), max price residual / x {worst_price:.2e}, out-of-band rejected: {out_of_band}, {t:.2?}"
        ),
    )
}

fn criterion_9(first: &Path, second: &Path, run: &ValidateRun) -> Verdict {
    let same = |name: &str| std::fs::read(first.join(name)).unwrap() == std::fs::read(second.join(name)).unwrap();
    let (a, b) = (same("validate.json"), same("resolved_config.json"));
    verdict(
        a && b && run.status == 0,
        format!("validate.json identical: {a}, resolved_config.json identical: {b} (1 vs 4 workers)"),
    )
}

fn main() {
    let mut results: Vec<(u8, &str, Verdict)> = Vec::new();
    let mut record = |id, name, v: Verdict| {
        println!("criterion {id} [{}] {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, name, v));
    };
    record(1, "closed form vs chain rule", criterion_1());
    record(2, "strike-derivative corollary", criterion_2());
    record(3, "quote algebra", criterion_3());

    let tmp = tempfile::tempdir().unwrap();
    let d1 = tmp.path().join("w1");
    let d4 = tmp.path().join("w4");
    let base = run_validate(VALIDATE_CONFIG, &d1, 1);
    record(4, "P&L expansion", criterion_4(&base));
    let hi = run_validate(&with_epsilon(1e-3), &tmp.path().join("e3"), 1);
    let lo = run_validate(&with_epsilon(1e-5), &tmp.path().join("e5"), 1);
    record(5, "ε-scaling", criterion_5(&[(1e-3, &hi), (1e-4, &base), (1e-5, &lo)]));
    record(6, "Chebyshev tail bound", criterion_6(&base));
    record(7, "smile", criterion_7());
    record(8, "implied-vol inversion", criterion_8());
    let again = run_validate(VALIDATE_CONFIG, &d4, 4);
    record(9, "determinism", criterion_9(&d1, &d4, &again));

    let failed: Vec<u8> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria pass{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failing: {failed:?}") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
