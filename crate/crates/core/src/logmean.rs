//! The logarithmic mean `θ(s,t) = ∫₀¹ s^{1-p} t^p dp` and its partial
//! derivatives.

use crate::error::{Error, Result};

/// Relative distance `|s-t| / (s+t)` below which the series branch is used.
const SERIES_BRANCH: f64 = 1e-8;
/// Below this relative distance the partials use their series expansion.
const PARTIAL_SERIES_BRANCH: f64 = 1e-3;
/// Above this relative distance `(s-t)/(log s - log t)` is used directly.
const DIRECT_BRANCH: f64 = 0.5;

/// Value and partial derivatives of the logarithmic mean at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMean {
    pub value: f64,
    pub d_first: f64,
    pub d_second: f64,
}

/// `θ(s,t)` together with `(∂₁θ, ∂₂θ)`.
///
/// With `m = (s+t)/2` and `d = (s-t)/(s+t)` one has `θ = m · d / artanh(d)`,
/// which avoids the cancellation in `(s-t)/(log s - log t)`.
pub fn log_mean(s: f64, t: f64) -> Result<LogMean> {
    if !(s >= 0.0) || !(t >= 0.0) {
        return Err(Error::NegativeArgument(s, t));
    }
    Ok(log_mean_unchecked(s, t))
}

pub(crate) fn log_mean_unchecked(s: f64, t: f64) -> LogMean {
    // evaluate with the larger argument first so θ is exactly symmetric
    if s < t {
        let m = ordered(t, s);
        return LogMean { value: m.value, d_first: m.d_second, d_second: m.d_first };
    }
    ordered(s, t)
}

fn ordered(s: f64, t: f64) -> LogMean {
    if s == 0.0 && t == 0.0 {
        return LogMean { value: 0.0, d_first: 0.5, d_second: 0.5 };
    }
    if s == 0.0 {
        return LogMean { value: 0.0, d_first: f64::INFINITY, d_second: 0.0 };
    }
    if t == 0.0 {
        return LogMean { value: 0.0, d_first: 0.0, d_second: f64::INFINITY };
    }
    let m = 0.5 * (s + t);
    let d = (s - t) / (s + t);
    if d.abs() > DIRECT_BRANCH {
        // far from the diagonal the quotient has no cancellation, and d
        // itself may have rounded to ±1
        let l = s.ln() - t.ln();
        let value = (s - t) / l;
        let d_first = (l - 1.0 + t / s) / (l * l);
        let d_second = (s / t - 1.0 - l) / (l * l);
        return LogMean { value, d_first, d_second };
    }
    let (g, dg) = ratio_and_slope(d);
    let value = m * g;
    // θ = m g(d), ∂m/∂s = ½, ∂d/∂s = (1-d)/(2m), ∂d/∂t = -(1+d)/(2m)
    let d_first = 0.5 * (g + dg * (1.0 - d));
    let d_second = 0.5 * (g - dg * (1.0 + d));
    LogMean { value, d_first, d_second }
}

/// `g(d) = d / artanh(d)` and `g'(d)` on `(-1, 1)`.
fn ratio_and_slope(d: f64) -> (f64, f64) {
    let a = d.abs();
    if a <= PARTIAL_SERIES_BRANCH {
        let d2 = d * d;
        let g = 1.0 - d2 / 3.0 - 4.0 * d2 * d2 / 45.0 - 44.0 * d2 * d2 * d2 / 945.0;
        let dg = -2.0 * d / 3.0 - 16.0 * d * d2 / 45.0 - 88.0 * d * d2 * d2 / 315.0;
        return (g, dg);
    }
    let at = d.atanh();
    let g = d / at;
    let dg = (at - d / (1.0 - d * d)) / (at * at);
    (g, dg)
}

/// `θ(s,t)` only.
pub fn theta(s: f64, t: f64) -> f64 {
    if s <= 0.0 || t <= 0.0 {
        return 0.0;
    }
    let (s, t) = if s < t { (t, s) } else { (s, t) };
    let m = 0.5 * (s + t);
    let d = (s - t) / (s + t);
    if d.abs() <= SERIES_BRANCH {
        return m * (1.0 - d * d / 3.0);
    }
    if d.abs() > DIRECT_BRANCH {
        return (s - t) / (s.ln() - t.ln());
    }
    m * d / d.atanh()
}
