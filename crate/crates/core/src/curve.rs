//! Piecewise-linear cumulative count curves.

use crate::error::{domain, LtmError, Result};

/// Slack allowed when a query time sits just outside the recorded range.
pub const TIME_TOL: f64 = 1e-9;
/// Slope tolerance used when collapsing colinear samples.
pub const COLINEAR_TOL: f64 = 1e-12;

/// Monotone piecewise-linear time series of cumulative vehicle count.
///
/// Queries before the first sample or after the last one are errors.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeCurve {
    times: Vec<f64>,
    counts: Vec<f64>,
    compact: bool,
}

impl CumulativeCurve {
    /// Curve holding the single sample `(t0, n0)`.
    pub fn starting_at(t0: f64, n0: f64) -> Self {
        Self { times: vec![t0], counts: vec![n0], compact: true }
    }

    pub fn from_samples(samples: &[(f64, f64)]) -> Result<Self> {
        let Some(&(t0, n0)) = samples.first() else {
            return domain("a cumulative curve needs at least one sample");
        };
        let mut curve = Self::starting_at(t0, n0);
        curve.compact = false;
        for &(t, n) in &samples[1..] {
            curve.push(t, n)?;
        }
        curve.compact = true;
        Ok(curve)
    }

    /// Disable colinear compaction (keeps every pushed sample).
    pub fn without_compaction(mut self) -> Self {
        self.compact = false;
        self
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn first_count(&self) -> f64 {
        self.counts[0]
    }

    pub fn last_count(&self) -> f64 {
        *self.counts.last().unwrap()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.counts.iter().copied())
    }

    /// Append a sample. Times must increase and counts must not decrease.
    pub fn push(&mut self, t: f64, n: f64) -> Result<()> {
        let (tl, nl) = (self.end_time(), self.last_count());
        if !(t > tl) {
            return domain(format!("sample time {t} not after {tl}"));
        }
        if n < nl - 1e-9 * (1.0 + nl.abs()) || n.is_nan() {
            return domain(format!("cumulative count decreases from {nl} to {n} at t = {t}"));
        }
        let n = n.max(nl);
        let len = self.times.len();
        if self.compact && len >= 2 {
            let (t0, n0) = (self.times[len - 2], self.counts[len - 2]);
            let prev = (nl - n0) / (tl - t0);
            let next = (n - nl) / (t - tl);
            if (prev - next).abs() <= COLINEAR_TOL {
                self.times[len - 1] = t;
                self.counts[len - 1] = n;
                return Ok(());
            }
        }
        self.times.push(t);
        self.counts.push(n);
        Ok(())
    }

    /// Index `i` with `times[i] <= t < times[i + 1]` (clamped to the last segment).
    fn segment(&self, t: f64) -> usize {
        let i = self.times.partition_point(|&s| s <= t);
        i.saturating_sub(1).min(self.times.len().saturating_sub(2))
    }

    fn check_range(&self, t: f64) -> Result<()> {
        if t.is_nan() || t < self.start_time() - TIME_TOL || t > self.end_time() + TIME_TOL {
            return Err(LtmError::Domain(format!(
                "time {t} outside recorded range [{}, {}]",
                self.start_time(),
                self.end_time()
            )));
        }
        Ok(())
    }

    /// Linearly interpolated count at `t`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        self.check_range(t)?;
        Ok(self.eval_clamped(t))
    }

    pub(crate) fn eval_clamped(&self, t: f64) -> f64 {
        if self.times.len() == 1 || t <= self.times[0] {
            return self.counts[0];
        }
        if t >= self.end_time() {
            return self.last_count();
        }
        let i = self.segment(t);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let (n0, n1) = (self.counts[i], self.counts[i + 1]);
        n0 + (n1 - n0) * (t - t0) / (t1 - t0)
    }

    /// Right-sided slope at `t` (zero on a single-sample curve).
    pub fn slope_at(&self, t: f64) -> Result<f64> {
        self.check_range(t)?;
        if self.times.len() == 1 {
            return Ok(0.0);
        }
        let i = self.segment(t);
        Ok((self.counts[i + 1] - self.counts[i]) / (self.times[i + 1] - self.times[i]))
    }

    /// Largest segment slope.
    pub fn max_slope(&self) -> f64 {
        self.times
            .windows(2)
            .zip(self.counts.windows(2))
            .map(|(t, n)| (n[1] - n[0]) / (t[1] - t[0]))
            .fold(0.0, f64::max)
    }

    /// Latest time `tau <= t_max` with `curve(tau) = level`, or `None` if `level`
    /// lies below the first recorded count.
    pub(crate) fn latest_time_at_level(&self, level: f64, t_max: f64) -> Option<f64> {
        let tol = 1e-12 * (1.0 + level.abs());
        if level < self.counts[0] - tol {
            return None;
        }
        let t_max = t_max.min(self.end_time());
        let n_max = self.eval_clamped(t_max);
        if n_max <= level + tol {
            return Some(t_max);
        }
        // first sample strictly above the level
        let j = self.counts.partition_point(|&n| n <= level + tol);
        let i = j - 1;
        let (t0, t1) = (self.times[i], self.times[j]);
        let (n0, n1) = (self.counts[i], self.counts[j]);
        let tau = if n1 > n0 { t0 + (level - n0).max(0.0) * (t1 - t0) / (n1 - n0) } else { t0 };
        Some(tau.min(t_max))
    }

    /// Drop samples strictly older than the last sample at or before `t`.
    pub fn prune_before(&mut self, t: f64) {
        let keep_from = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        if keep_from > 0 && keep_from < self.times.len() {
            self.times.drain(..keep_from);
            self.counts.drain(..keep_from);
        }
    }
}
