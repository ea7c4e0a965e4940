//! Poincare map of the diverge-merge loop and an empirical decay-ratio estimator.

use std::fmt;

use crate::error::{domain, LtmError, Result};

fn check_split(xi: f64) -> Result<()> {
    if !(xi > 0.0 && xi < 1.0) {
        return domain(format!("turning proportion {xi} outside (0, 1)"));
    }
    Ok(())
}

/// One period of `f1(t) = C3 - f1(t - T) / mu` with `mu = xi / (1 - xi)`.
pub fn poincare_iterate(f1: f64, xi: f64, c3: f64) -> Result<f64> {
    check_split(xi)?;
    let mu = xi / (1.0 - xi);
    Ok(c3 - f1 / mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    /// `marginal` when perturbations neither grow nor decay.
    Unstable { marginal: bool },
}

impl fmt::Display for Stability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stability::Stable => f.write_str("stable"),
            Stability::Unstable { marginal: false } => f.write_str("unstable"),
            Stability::Unstable { marginal: true } => f.write_str("unstable (marginal)"),
        }
    }
}

/// Stable iff `xi > 1/2`.
pub fn classify_stability(xi: f64) -> Result<Stability> {
    check_split(xi)?;
    Ok(if xi > 0.5 {
        Stability::Stable
    } else {
        Stability::Unstable { marginal: (xi - 0.5).abs() < 1e-12 }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecayEstimate {
    /// Least-squares ratio `delta(t + T) / delta(t)` over `periods` periods.
    Ratio { value: f64, periods: usize },
    /// Deviations never exceed the noise floor.
    ZeroSignal,
}

impl DecayEstimate {
    pub fn value(&self) -> Option<f64> {
        match self {
            DecayEstimate::Ratio { value, .. } => Some(*value),
            DecayEstimate::ZeroSignal => None,
        }
    }
}

/// Deviations below this are treated as numerical noise.
pub const ZERO_SIGNAL: f64 = 1e-9;
/// The fit stops at the first period whose amplitude exceeds this fraction of the fixed point.
pub const SATURATION_FRACTION: f64 = 0.1;

/// Per-period ratio of the deviation of `signal` from `fixed_point`.
///
/// `signal` holds `(t, f1(t))` samples; the fit uses the periods before the
/// deviation amplitude first exceeds a tenth of the fixed point.
pub fn measure_decay_ratio(signal: &[(f64, f64)], period: f64, fixed_point: f64) -> Result<DecayEstimate> {
    if !(period > 0.0) {
        return domain(format!("period must be positive, got {period}"));
    }
    let Some((&(t0, _), &(t_end, _))) = signal.first().zip(signal.last()) else {
        return Err(LtmError::InsufficientData("empty signal".into()));
    };
    let available = ((t_end - t0) / period + 1e-9).floor() as usize;
    if available < 3 {
        return Err(LtmError::InsufficientData(format!(
            "signal spans {:.3} periods, at least 3 are needed",
            (t_end - t0) / period
        )));
    }
    let dev: Vec<(f64, f64)> = signal.iter().map(|&(t, f)| (t, f - fixed_point)).collect();
    if dev.iter().all(|d| d.1.abs() < ZERO_SIGNAL) {
        return Ok(DecayEstimate::ZeroSignal);
    }
    let limit = SATURATION_FRACTION * fixed_point.abs();
    let mut periods = available;
    for k in 0..available {
        let lo = t0 + k as f64 * period;
        let amp = dev.iter().filter(|d| d.0 >= lo && d.0 < lo + period).fold(0.0f64, |m, d| m.max(d.1.abs()));
        if amp > limit {
            periods = k;
            break;
        }
    }
    if periods < 2 {
        return Err(LtmError::InsufficientData("deviation saturates within the first periods".into()));
    }
    let end = t0 + periods as f64 * period;
    let at = |t: f64| interpolate(&dev, t);
    let (mut num, mut den) = (0.0, 0.0);
    for &(t, d) in dev.iter().filter(|d| d.0 + period < end + 1e-9) {
        num += d * at(t + period);
        den += d * d;
    }
    if den < ZERO_SIGNAL * ZERO_SIGNAL {
        return Ok(DecayEstimate::ZeroSignal);
    }
    Ok(DecayEstimate::Ratio { value: num / den, periods })
}

fn interpolate(s: &[(f64, f64)], t: f64) -> f64 {
    let i = s.partition_point(|p| p.0 <= t);
    if i == 0 {
        return s[0].1;
    }
    if i == s.len() {
        return s[s.len() - 1].1;
    }
    let (a, b) = (s[i - 1], s[i]);
    if b.0 - a.0 <= 0.0 {
        return a.1;
    }
    // samples are piecewise constant over a step
    if t - a.0 < 1e-9 * (b.0 - a.0).max(1.0) {
        a.1
    } else {
        a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
    }
}
