//! Implied volatility inversion and smile construction from uncertainty
//! quotes.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::lognormal::{call_price_raw, CallSpec, LognormalMarket, TotalVolUncertainty};
use crate::normal;
use crate::quotes::{quote_call, QuoteTriple, RiskPolicy};

pub const VOL_LOWER: f64 = 1e-8;
pub const VOL_UPPER: f64 = 5.0;
const MAX_ITERATIONS: usize = 200;

/// Which side of the quote is inverted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuoteSource {
    Bid,
    Mid,
    Ask,
}

impl QuoteSource {
    pub fn pick(&self, q: &QuoteTriple) -> f64 {
        match self {
            QuoteSource::Bid => q.bid,
            QuoteSource::Mid => q.mid,
            QuoteSource::Ask => q.ask,
        }
    }
}

/// Black–Scholes volatility reproducing `price`; `m.sigma0` is ignored.
///
/// Newton steps on the total volatility, kept inside a shrinking bisection
/// bracket on `[1e-8, 5]`.
pub fn implied_vol(price: f64, m: &LognormalMarket, c: &CallSpec) -> Result<f64> {
    ensure_finite("price", price)?;
    c.validate()?;
    if !(m.spot > 0.0 && m.spot.is_finite()) {
        return Err(Error::InvalidInput(format!("spot must be > 0, got {}", m.spot)));
    }
    let (x, k, t) = (m.spot, c.strike, c.maturity);
    let intrinsic = (x - k).max(0.0);
    if !(price > intrinsic && price < x) {
        return Err(Error::Domain(format!(
            "price {price} outside the no-arbitrage band ({intrinsic}, {x})"
        )));
    }

    let sqrt_t = t.sqrt();
    let tol = 1e-10 * x;
    let mut lo = VOL_LOWER * sqrt_t;
    let mut hi = VOL_UPPER * sqrt_t;
    let f_lo = call_price_raw(x, k, lo) - price;
    let f_hi = call_price_raw(x, k, hi) - price;
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::BracketExhausted(format!(
            "price {price} not attained for volatility in [{VOL_LOWER}, {VOL_UPPER}]"
        )));
    }

    // Start at the inflection point of the price in total volatility.
    let mut v = (2.0 * (x / k).ln().abs()).sqrt().clamp(lo, hi);
    if v <= lo {
        v = 0.5 * (lo + hi).min(1.0);
    }
    let mut best = (f64::INFINITY, v);
    for _ in 0..MAX_ITERATIONS {
        let diff = call_price_raw(x, k, v) - price;
        if diff.abs() < best.0 {
            best = (diff.abs(), v);
        }
        if diff > 0.0 {
            hi = v;
        } else {
            lo = v;
        }
        let d1 = ((x / k).ln() + 0.5 * v * v) / v;
        let vega = x * normal::pdf(d1);
        let newton = v - diff / vega;
        let next = if vega > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let converged = diff.abs() <= tol && (next - v).abs() <= 1e-15 * v.max(1.0);
        if converged || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        v = next;
    }
    if best.0 <= tol {
        Ok(best.1 / sqrt_t)
    } else {
        Err(Error::BracketExhausted(format!(
            "no volatility reproduces {price} within {tol}; best residual {}",
            best.0
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmileGrid {
    pub strikes: Vec<f64>,
    pub maturities: Vec<f64>,
    /// `vols[i][j]` at `maturities[i]`, `strikes[j]`; `None` when the quote
    /// could not be inverted.
    pub vols: Vec<Vec<Option<f64>>>,
    pub source: QuoteSource,
}

impl SmileGrid {
    pub fn get(&self, maturity_index: usize, strike_index: usize) -> Option<f64> {
        self.vols.get(maturity_index)?.get(strike_index).copied().flatten()
    }
}

/// One grid cell with all three implied volatilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmileCell {
    pub maturity: f64,
    pub strike: f64,
    pub quote: QuoteTriple,
    pub bid_vol: Option<f64>,
    pub mid_vol: Option<f64>,
    pub ask_vol: Option<f64>,
}

/// Uncertainty on `ς√T` for each maturity.
pub trait UncertaintySchedule {
    fn at(&self, maturity: f64) -> Result<TotalVolUncertainty>;
}

impl<F> UncertaintySchedule for F
where
    F: Fn(f64) -> Result<TotalVolUncertainty>,
{
    fn at(&self, maturity: f64) -> Result<TotalVolUncertainty> {
        self(maturity)
    }
}

fn check_axis(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidInput(format!("{name} must be nonempty")));
    }
    for w in values.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidInput(format!("{name} must be strictly increasing")));
        }
    }
    if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{name} must be finite and > 0")));
    }
    Ok(())
}

/// Quotes and inverts every `(T, K)` cell. Cells whose inversion fails are
/// kept as `None` in the implied columns.
pub fn build_cells(
    m: &LognormalMarket,
    schedule: &dyn UncertaintySchedule,
    policy: &RiskPolicy,
    strikes: &[f64],
    maturities: &[f64],
) -> Result<Vec<SmileCell>> {
    m.validate()?;
    policy.validate()?;
    check_axis("strikes", strikes)?;
    check_axis("maturities", maturities)?;
    let mut cells = Vec::with_capacity(strikes.len() * maturities.len());
    for &t in maturities {
        let u = schedule.at(t)?;
        for &k in strikes {
            let c = CallSpec::new(k, t)?;
            let q = quote_call(m, &c, &u, policy)?;
            cells.push(SmileCell {
                maturity: t,
                strike: k,
                quote: q,
                bid_vol: implied_vol(q.bid, m, &c).ok(),
                mid_vol: implied_vol(q.mid, m, &c).ok(),
                ask_vol: implied_vol(q.ask, m, &c).ok(),
            });
        }
    }
    Ok(cells)
}

pub fn build_smile(
    m: &LognormalMarket,
    schedule: &dyn UncertaintySchedule,
    policy: &RiskPolicy,
    strikes: &[f64],
    maturities: &[f64],
    source: QuoteSource,
) -> Result<SmileGrid> {
    let cells = build_cells(m, schedule, policy, strikes, maturities)?;
    let vols = cells
        .chunks(strikes.len())
        .map(|row| {
            row.iter()
                .map(|cell| match source {
                    QuoteSource::Bid => cell.bid_vol,
                    QuoteSource::Mid => cell.mid_vol,
                    QuoteSource::Ask => cell.ask_vol,
                })
                .collect()
        })
        .collect();
    Ok(SmileGrid {
        strikes: strikes.to_vec(),
        maturities: maturities.to_vec(),
        vols,
        source,
    })
}

/// Strike spacing, as a fraction of spot, used for curvature checks.
pub const CURVATURE_STRIKE_STEP: f64 = 0.02;
/// Half-width of the at-the-money window in units of `σ₀√T` of log-moneyness.
pub const ATM_WINDOW: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaturityCurvature {
    pub maturity: f64,
    pub atm_strike: f64,
    pub atm_vol: f64,
    /// Central second difference of implied volatility in strike (per unit strike²).
    pub second_derivative: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmileVerdict {
    /// Positive curvature at every maturity, strictly decreasing in maturity.
    ConvexDecreasingInMaturity,
    /// Positive curvature but not decreasing with maturity.
    ConvexOnly,
    /// Curvature indistinguishable from zero everywhere.
    NoSmile,
    /// Non-positive curvature somewhere.
    NotConvex,
}

impl SmileVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            SmileVerdict::ConvexDecreasingInMaturity => "convex, decreasing in T",
            SmileVerdict::ConvexOnly => "convex, not decreasing in T",
            SmileVerdict::NoSmile => "no smile",
            SmileVerdict::NotConvex => "not convex",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmileReport {
    pub per_maturity: Vec<MaturityCurvature>,
    pub all_positive: bool,
    pub decreasing_in_maturity: bool,
    pub verdict: SmileVerdict,
}

/// Curvature of the smile at the strike nearest the money, per maturity.
pub fn smile_diagnostics(grid: &SmileGrid, m: &LognormalMarket) -> Result<SmileReport> {
    if grid.maturities.len() < 2 {
        return Err(Error::InsufficientGrid("need at least two maturities".into()));
    }
    if grid.strikes.len() < 3 {
        return Err(Error::InsufficientGrid("need at least three strikes".into()));
    }
    let atm = grid
        .strikes
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1 / m.spot).ln().abs().total_cmp(&(b.1 / m.spot).ln().abs())
        })
        .map(|(i, _)| i)
        .expect("nonempty strikes");
    if atm == 0 || atm + 1 == grid.strikes.len() {
        return Err(Error::InsufficientGrid(
            "strikes must bracket the money on both sides".into(),
        ));
    }
    let (k_lo, k_mid, k_hi) = (grid.strikes[atm - 1], grid.strikes[atm], grid.strikes[atm + 1]);

    let mut per_maturity = Vec::with_capacity(grid.maturities.len());
    for (i, &t) in grid.maturities.iter().enumerate() {
        let cell = |j: usize| {
            grid.get(i, j).ok_or_else(|| {
                Error::InsufficientGrid(format!("missing implied vol at T={t}, K={}", grid.strikes[j]))
            })
        };
        let (lo, mid, hi) = (cell(atm - 1)?, cell(atm)?, cell(atm + 1)?);
        // Non-uniform three-point second derivative.
        let h1 = k_mid - k_lo;
        let h2 = k_hi - k_mid;
        let second = 2.0 * (h1 * hi - (h1 + h2) * mid + h2 * lo) / (h1 * h2 * (h1 + h2));
        per_maturity.push(MaturityCurvature {
            maturity: t,
            atm_strike: k_mid,
            atm_vol: mid,
            second_derivative: second,
        });
    }

    // Curvatures below this are treated as flat; inversion noise sits far below.
    let flat = 1e-12;
    let all_positive = per_maturity.iter().all(|c| c.second_derivative > flat);
    let all_flat = per_maturity.iter().all(|c| c.second_derivative.abs() <= flat);
    let decreasing_in_maturity = per_maturity
        .windows(2)
        .all(|w| w[1].second_derivative < w[0].second_derivative);
    let verdict = if all_flat {
        SmileVerdict::NoSmile
    } else if !all_positive {
        SmileVerdict::NotConvex
    } else if decreasing_in_maturity {
        SmileVerdict::ConvexDecreasingInMaturity
    } else {
        SmileVerdict::ConvexOnly
    };
    Ok(SmileReport {
        per_maturity,
        all_positive,
        decreasing_in_maturity,
        verdict,
    })
}

/// Range of `r_r` values, taken from `candidates`, for which the mid-implied
/// smile is convex at the money at every maturity.
///
/// `gamma_sig_sqrt_t(T)` gives `Γ[ς√T]`; `𝒜[ς√T]` is set from each candidate
/// ratio. Returns the sorted candidates that produced a convex verdict.
pub fn scan_convex_rr(
    m: &LognormalMarket,
    gamma_sig_sqrt_t: &dyn Fn(f64) -> f64,
    epsilon: f64,
    policy: &RiskPolicy,
    strikes: &[f64],
    maturities: &[f64],
    candidates: &[f64],
) -> Result<Vec<f64>> {
    let mut convex = Vec::new();
    for &rr in candidates {
        let schedule = |t: f64| {
            let c = CallSpec::new(m.spot, t)?;
            TotalVolUncertainty::from_rr(rr, gamma_sig_sqrt_t(t), epsilon, m, &c)
        };
        let grid = build_smile(m, &schedule, policy, strikes, maturities, QuoteSource::Mid)?;
        match smile_diagnostics(&grid, m) {
            Ok(report) if report.all_positive => convex.push(rr),
            _ => {}
        }
    }
    convex.sort_by(f64::total_cmp);
    Ok(convex)
}

/// True when the strike lies inside the at-the-money window used for
/// convexity checks.
pub fn in_atm_window(m: &LognormalMarket, c: &CallSpec) -> bool {
    (c.strike / m.spot).ln().abs() <= ATM_WINDOW * m.sigma0 * c.maturity.sqrt()
}

/// Strike ladder `x·(1 + j·step)` for `j = −n..=n`.
pub fn strike_ladder(spot: f64, n: usize, step: f64) -> Vec<f64> {
    let n = n as i64;
    (-n..=n).map(|j| spot * (1.0 + j as f64 * step)).collect()
}
