//! Hopf-Lax evaluation of the cumulative flow `A(x, t)` on a homogeneous link.
//!
//! With a triangular diagram the Lagrangian is linear, so
//! `B(y, s; x, t) = A(y, s) + (t - s) C - (x - y) k_crit` and the solution is the
//! minimum of `B` over boundary points inside the wave cone. Because every input is
//! piecewise linear, the minimum over initial data is attained at a profile
//! breakpoint or at a cone endpoint, and the minimum along a boundary is attained at
//! the latest admissible time.

use crate::curve::CumulativeCurve;
use crate::error::{domain, LtmError, Result};
use crate::fd::{TriangularFD, FD_TOL};
use crate::profile::DensityProfile;

/// Absolute tolerance, in vehicles, for the feasibility inequalities.
pub const FEAS_TOL: f64 = 1e-9;

/// `B(y, s; x, t)`, the candidate value propagated from boundary point `(y, s)`.
pub fn candidate_value(a_ys: f64, y: f64, s: f64, x: f64, t: f64, fd: &TriangularFD) -> Result<f64> {
    if !(t > s) {
        return domain(format!("candidate needs t > s, got s = {s}, t = {t}"));
    }
    let u = (x - y) / (t - s);
    if u > fd.v_free() + FD_TOL || u < -fd.w_back() - FD_TOL {
        return domain(format!("({y}, {s}) lies outside the wave cone of ({x}, {t}): speed {u}"));
    }
    Ok(a_ys + (t - s) * fd.capacity() - (x - y) * fd.k_crit())
}

fn b_initial(profile: &DensityProfile, fd: &TriangularFD, y: f64, x: f64, t: f64) -> f64 {
    profile.cumulative(y) + t * fd.capacity() - (x - y) * fd.k_crit()
}

/// Minimum of `B(y, 0; x, t)` over initial points `y` in the cone of `(x, t)`.
///
/// `x` may sit on either end of the link; the cone is clipped to `[0, L]` and its
/// clipped endpoints (the domain corners) are included.
pub fn initial_minimum(profile: &DensityProfile, fd: &TriangularFD, x: f64, t: f64) -> f64 {
    let (reach_up, reach_down) = (fd.v_free() * t, fd.w_back() * t);
    let l = profile.length();
    // unclipped endpoints sit on characteristics, where B has a closed form
    let lower = if x - reach_up >= 0.0 { profile.cumulative(x - reach_up) } else { b_initial(profile, fd, 0.0, x, t) };
    let upper = if x + reach_down <= l {
        profile.cumulative(x + reach_down) + fd.k_jam() * reach_down
    } else {
        b_initial(profile, fd, l, x, t)
    };
    let ends = lower.min(upper);
    let (lo, hi) = ((x - reach_up).max(0.0), (x + reach_down).min(l));
    if profile.is_regular() {
        return ends;
    }
    profile.edges_within(lo, hi).map(|y| b_initial(profile, fd, y, x, t)).fold(ends, f64::min)
}

/// Initial and boundary data on the U-shaped domain `[0, L] x [0, T]`.
#[derive(Debug, Clone)]
pub struct UDomainData {
    pub length: f64,
    pub fd: TriangularFD,
    pub profile: DensityProfile,
    /// `F(t) = A(0, t)`.
    pub upstream: CumulativeCurve,
    /// `G(t) = A(L, t)`.
    pub downstream: CumulativeCurve,
}

impl UDomainData {
    pub fn new(
        fd: TriangularFD,
        profile: DensityProfile,
        upstream: CumulativeCurve,
        downstream: CumulativeCurve,
    ) -> Result<Self> {
        let length = profile.length();
        for (name, c, n) in [("F", &upstream, profile.upstream_count()), ("G", &downstream, profile.downstream_count())] {
            if c.start_time().abs() > 1e-12 {
                return domain(format!("{name} must start at t = 0"));
            }
            if (c.first_count() - n).abs() > FEAS_TOL {
                return domain(format!("{name}(0) = {} does not match initial count {n}", c.first_count()));
            }
            if c.max_slope() > fd.capacity() + 1e-9 {
                return domain(format!("{name} slope {} exceeds capacity {}", c.max_slope(), fd.capacity()));
            }
        }
        Ok(Self { length, fd, profile, upstream, downstream })
    }

    /// Latest time covered by both boundary curves.
    pub fn horizon(&self) -> f64 {
        self.upstream.end_time().min(self.downstream.end_time())
    }

    fn free_time(&self) -> f64 {
        self.length / self.fd.v_free()
    }

    fn wave_time(&self) -> f64 {
        self.length / self.fd.w_back()
    }

    /// Hopf-Lax value with no feasibility check; `(x, t)` anywhere in the closed domain.
    pub(crate) fn value_unchecked(&self, x: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return self.profile.cumulative(x);
        }
        if x <= 0.0 {
            return self.upstream.eval_clamped(t);
        }
        if x >= self.length {
            return self.downstream.eval_clamped(t);
        }
        let fd = &self.fd;
        let mut a = initial_minimum(&self.profile, fd, x, t);
        let tf = t - x / fd.v_free();
        if tf >= 0.0 {
            a = a.min(self.upstream.eval_clamped(tf));
        }
        let tg = t - (self.length - x) / fd.w_back();
        if tg >= 0.0 {
            a = a.min(self.downstream.eval_clamped(tg) + (self.length - x) * fd.k_jam());
        }
        a
    }

    fn check_query(&self, x: f64, t: f64) -> Result<()> {
        if !(x > 0.0 && x < self.length) {
            return domain(format!("x = {x} not inside (0, {})", self.length));
        }
        if !(t > 0.0) || t > self.horizon() + 1e-9 {
            return domain(format!("t = {t} not inside (0, {}]", self.horizon()));
        }
        Ok(())
    }
}

/// Hopf-Lax solution `A(x, t)` at an interior point.
pub fn solve_interior(data: &UDomainData, x: f64, t: f64) -> Result<f64> {
    data.check_query(x, t)?;
    let violations = check_feasible(data, t);
    if let Some(v) = violations.first() {
        return Err(LtmError::Feasibility { link: String::new(), detail: v.to_string() });
    }
    Ok(data.value_unchecked(x, t))
}

/// Which necessary well-posedness inequality failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibilityCondition {
    /// `F(t) <= N(w t) + K w t` for `t <= L/w`.
    UpstreamBeforeWave,
    /// `G(t) <= N(L - v t)` for `t <= L/v`.
    DownstreamBeforeFree,
    /// `F(t) <= G(t - L/w) + K L` for `t > L/w` (storage).
    Storage,
    /// `G(t) <= F(t - L/v)` for `t > L/v` (no exit before entry).
    Fifo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub condition: FeasibilityCondition,
    /// First checkpoint at which the inequality fails.
    pub time: f64,
    /// Largest excess over all checkpoints.
    pub excess: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?} fails from t = {} (max excess {:.3e})", self.condition, self.time, self.excess)
    }
}

struct Check {
    first: Option<f64>,
    excess: f64,
}

impl Check {
    fn new() -> Self {
        Self { first: None, excess: 0.0 }
    }

    fn record(&mut self, t: f64, excess: f64) {
        if excess > FEAS_TOL {
            self.first = Some(self.first.map_or(t, |f: f64| f.min(t)));
            self.excess = self.excess.max(excess);
        }
    }

    fn finish(self, condition: FeasibilityCondition, out: &mut Vec<Violation>) {
        if let Some(time) = self.first {
            out.push(Violation { condition, time, excess: self.excess });
        }
    }
}

fn checkpoints(lo: f64, hi: f64, sets: &[Vec<f64>]) -> Vec<f64> {
    let mut ts: Vec<f64> = sets.iter().flatten().copied().filter(|&t| t >= lo && t <= hi).collect();
    ts.push(lo);
    ts.push(hi);
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

/// Necessary conditions for the initial-boundary problem, checked on `[0, horizon]`.
///
/// All functions involved are piecewise linear, so checking every breakpoint of the
/// shifted curves and of the profile is exhaustive.
pub fn check_feasible(data: &UDomainData, horizon: f64) -> Vec<Violation> {
    let horizon = horizon.min(data.horizon());
    let fd = &data.fd;
    let (v, w, kj, l) = (fd.v_free(), fd.w_back(), fd.k_jam(), data.length);
    let (tv, tw) = (data.free_time(), data.wave_time());
    let f_times: Vec<f64> = data.upstream.times().to_vec();
    let g_times: Vec<f64> = data.downstream.times().to_vec();
    let shift = |ts: &[f64], d: f64| ts.iter().map(|t| t + d).collect::<Vec<_>>();
    let f = |t: f64| data.upstream.eval_clamped(t);
    let g = |t: f64| data.downstream.eval_clamped(t);
    let n = |x: f64| data.profile.cumulative(x);
    let mut out = Vec::new();

    let mut c = Check::new();
    let edges_w: Vec<f64> = data.profile.edges().iter().map(|x| x / w).collect();
    for t in checkpoints(0.0, horizon.min(tw), &[f_times.clone(), edges_w]) {
        c.record(t, f(t) - (n(w * t) + kj * w * t));
    }
    c.finish(FeasibilityCondition::UpstreamBeforeWave, &mut out);

    let mut c = Check::new();
    let edges_v: Vec<f64> = data.profile.edges().iter().map(|x| (l - x) / v).collect();
    for t in checkpoints(0.0, horizon.min(tv), &[g_times.clone(), edges_v]) {
        c.record(t, g(t) - n(l - v * t));
    }
    c.finish(FeasibilityCondition::DownstreamBeforeFree, &mut out);

    if horizon > tw {
        let mut c = Check::new();
        for t in checkpoints(tw, horizon, &[f_times.clone(), shift(&g_times, tw)]) {
            c.record(t, f(t) - (g(t - tw) + kj * l));
        }
        c.finish(FeasibilityCondition::Storage, &mut out);
    }
    if horizon > tv {
        let mut c = Check::new();
        for t in checkpoints(tv, horizon, &[g_times, shift(&f_times, tv)]) {
            c.record(t, g(t) - f(t - tv));
        }
        c.finish(FeasibilityCondition::Fifo, &mut out);
    }
    out
}

/// Densities `k(x, t)` sampled on a grid, stored time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
    /// `k[i][j]` is the density at `(xs[j], ts[i])`.
    pub k: Vec<Vec<f64>>,
}

impl DensityField {
    /// `int |k - other| dx` at time row `i`, by midpoint quadrature on `xs`.
    pub fn l1_row_distance(&self, i: usize, other: &[f64]) -> f64 {
        let xs = &self.xs;
        let m = xs.len();
        (0..m)
            .map(|j| {
                let lo = if j == 0 { xs[0] } else { 0.5 * (xs[j - 1] + xs[j]) };
                let hi = if j + 1 == m { xs[m - 1] } else { 0.5 * (xs[j] + xs[j + 1]) };
                (self.k[i][j] - other[j]).abs() * (hi - lo)
            })
            .sum()
    }
}

/// Density field `k = -A_x` by centered differences of the variational solution.
pub fn reconstruct_field(data: &UDomainData, x_grid: &[f64], t_grid: &[f64]) -> Result<DensityField> {
    let t_max = t_grid.iter().copied().fold(0.0, f64::max);
    if t_max > data.horizon() + 1e-9 {
        return domain(format!("time grid reaches {t_max} beyond data horizon {}", data.horizon()));
    }
    if let Some(&x) = x_grid.iter().find(|&&x| x < 0.0 || x > data.length) {
        return domain(format!("x = {x} outside [0, {}]", data.length));
    }
    if let Some(v) = check_feasible(data, t_max).first() {
        return Err(LtmError::Feasibility { link: String::new(), detail: v.to_string() });
    }
    let h = 1e-6 * data.length;
    let kj = data.fd.k_jam();
    let k = t_grid
        .iter()
        .map(|&t| {
            x_grid
                .iter()
                .map(|&x| {
                    if t <= 0.0 {
                        return data.profile.density(x);
                    }
                    let a = (x - h).max(0.0);
                    let b = (x + h).min(data.length);
                    let kx = -(data.value_unchecked(b, t) - data.value_unchecked(a, t)) / (b - a);
                    kx.clamp(0.0, kj)
                })
                .collect()
        })
        .collect();
    Ok(DensityField { xs: x_grid.to_vec(), ts: t_grid.to_vec(), k })
}

/// Exact piecewise-linear trace `t -> A(x, t)` on `[0, t_end]`.
pub fn boundary_trace(data: &UDomainData, x: f64, t_end: f64) -> Result<CumulativeCurve> {
    if !(0.0..=data.length).contains(&x) {
        return domain(format!("x = {x} outside [0, {}]", data.length));
    }
    if t_end > data.horizon() + 1e-9 || !(t_end > 0.0) {
        return domain(format!("trace end {t_end} outside (0, {}]", data.horizon()));
    }
    let fd = &data.fd;
    let (v, w, l) = (fd.v_free(), fd.w_back(), data.length);
    let mut ts = vec![0.0, t_end, x / v, (l - x) / w];
    for &e in data.profile.edges() {
        ts.push(if e <= x { (x - e) / v } else { (e - x) / w });
    }
    ts.extend(data.upstream.times().iter().map(|t| t + x / v));
    ts.extend(data.downstream.times().iter().map(|t| t + (l - x) / w));
    ts.retain(|&t| t >= 0.0 && t <= t_end);
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

    let mut pts: Vec<(f64, f64)> = vec![(0.0, data.value_unchecked(x, 0.0))];
    for win in ts.windows(2) {
        let (ta, tb) = (win[0], win[1]);
        let lines = candidate_lines(data, x, ta, tb);
        envelope(&lines, ta, tb, &mut pts);
    }
    let mut curve = CumulativeCurve::starting_at(0.0, pts[0].1);
    for &(t, a) in &pts[1..] {
        if t > curve.end_time() + 1e-14 {
            curve.push(t, a)?;
        }
    }
    Ok(curve)
}

/// Every candidate of the Hopf-Lax minimum that is linear on `[ta, tb]`, as `(value at ta, slope)`.
fn candidate_lines(data: &UDomainData, x: f64, ta: f64, tb: f64) -> Vec<(f64, f64)> {
    let fd = &data.fd;
    let (v, w, l, kj) = (fd.v_free(), fd.w_back(), data.length, fd.k_jam());
    let mid = 0.5 * (ta + tb);
    let mut funcs: Vec<Box<dyn Fn(f64) -> f64 + '_>> = Vec::new();
    if x <= 0.0 {
        funcs.push(Box::new(|t| data.upstream.eval_clamped(t)));
    } else if x >= l {
        funcs.push(Box::new(|t| data.downstream.eval_clamped(t)));
    } else {
        let p = &data.profile;
        // moving cone endpoints, clipped to the corners
        funcs.push(Box::new(move |t| b_initial(p, fd, (x - v * t).max(0.0), x, t)));
        funcs.push(Box::new(move |t| b_initial(p, fd, (x + w * t).min(l), x, t)));
        for &e in p.edges() {
            let active_from = if e <= x { (x - e) / v } else { (e - x) / w };
            if mid > active_from {
                funcs.push(Box::new(move |t| b_initial(p, fd, e, x, t)));
            }
        }
        if mid > x / v {
            funcs.push(Box::new(move |t| data.upstream.eval_clamped(t - x / v)));
        }
        if mid > (l - x) / w {
            funcs.push(Box::new(move |t| data.downstream.eval_clamped(t - (l - x) / w) + (l - x) * kj));
        }
    }
    funcs
        .iter()
        .map(|f| {
            let (a, b) = (f(ta), f(tb));
            (a, (b - a) / (tb - ta))
        })
        .collect()
}

fn envelope(lines: &[(f64, f64)], ta: f64, tb: f64, out: &mut Vec<(f64, f64)>) {
    let at = |i: usize, t: f64| lines[i].0 + lines[i].1 * (t - ta);
    // lowest at `t`, ties broken by the smaller slope so the walk moves forward
    let lowest = |t: f64| {
        (0..lines.len())
            .min_by(|&i, &j| at(i, t).total_cmp(&at(j, t)).then(lines[i].1.total_cmp(&lines[j].1)))
            .unwrap()
    };
    let mut cur = lowest(ta);
    let mut t = ta;
    for _ in 0..=lines.len() {
        // earliest later crossing by a line with a smaller slope
        let next = (0..lines.len())
            .filter(|&j| lines[j].1 < lines[cur].1)
            .map(|j| (t + (at(j, t) - at(cur, t)) / (lines[cur].1 - lines[j].1), j))
            .filter(|&(tc, _)| tc > t && tc < tb)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(lines[a.1].1.total_cmp(&lines[b.1].1)));
        match next {
            Some((tc, j)) => {
                out.push((tc, at(cur, tc)));
                cur = j;
                t = tc;
            }
            None => break,
        }
    }
    out.push((tb, at(cur, tb)));
}
