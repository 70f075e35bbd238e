//! Gauss–Legendre rules and log-normal expectations of payoffs.

use std::sync::OnceLock;

use super::payoff::Payoff;
use crate::normal;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Three-term recurrence for P_n and its derivative.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

const RULE: usize = 8;

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static R: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    R.get_or_init(|| gauss_legendre(RULE))
}

/// Truncation of the standard normal variable.
const Z_MAX: f64 = 10.0;
const COARSE_PANEL: f64 = 1.0;
/// Half-width of the refined zone, in payoff widths.
const FEATURE_SPAN: f64 = 30.0;
const MAX_FINE_PANELS: usize = 256;

/// Panel end points in `z` for `S_T = s·exp(−u²/2 + u z)`.
fn panels(payoff: &Payoff, ln_s: f64, u: f64) -> Vec<f64> {
    let (a, b) = (-Z_MAX, Z_MAX + u);
    let n = ((b - a) / COARSE_PANEL).ceil() as usize;
    let mut pts: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    let (loc, width) = payoff.feature();
    let z_f = (loc - ln_s + 0.5 * u * u) / u;
    if width == 0.0 {
        if z_f > a && z_f < b {
            pts.push(z_f);
        }
    } else {
        let scale = width / u;
        // Panels two widths wide keep the logistic's complex poles far
        // enough away for the 8-point rule.
        if 2.0 * scale < COARSE_PANEL {
            let lo = (z_f - FEATURE_SPAN * scale).max(a);
            let hi = (z_f + FEATURE_SPAN * scale).min(b);
            if hi > lo {
                let m = (((hi - lo) / (2.0 * scale)).ceil() as usize).clamp(1, MAX_FINE_PANELS);
                pts.extend((0..=m).map(|i| lo + (hi - lo) * i as f64 / m as f64));
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|x, y| (*x - *y).abs() < 1e-13);
    pts
}

/// `(E[Φ(S_T)], E[Φ'(S_T) S_T/s], E[Φ''(S_T) (S_T/s)²])` for the driftless
/// log-normal `S_T` started at `s` with total volatility `u`: price, delta
/// and gamma·s.
pub fn lognormal_moments(payoff: &Payoff, s: f64, u: f64) -> (f64, f64, f64) {
    if u <= 0.0 {
        return (payoff.value(s), payoff.d1(s), payoff.d2(s) * s);
    }
    let (nodes, weights) = rule();
    let pts = panels(payoff, s.ln(), u);
    let shift = -0.5 * u * u;
    let (mut p, mut d, mut g) = (0.0, 0.0, 0.0);
    for w in pts.windows(2) {
        let (c, h) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
        for (&x, &wt) in nodes.iter().zip(weights) {
            let z = c + h * x;
            let ratio = (shift + u * z).exp();
            let st = s * ratio;
            let k = wt * h * normal::pdf(z);
            let (v, d1, d2) = payoff.jet(st);
            p += k * v;
            d += k * d1 * ratio;
            g += k * d2 * ratio * ratio;
        }
    }
    (p, d, g * s)
}
