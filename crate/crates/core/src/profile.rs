//! Piecewise-constant initial density on a link.

use crate::error::{domain, Result};
use crate::fd::{TriangularFD, FD_TOL};

/// Initial density `k(x, 0)` on `[0, L]`, piecewise constant between breakpoints,
/// with the induced initial cumulative count `N(x) = N(0) - int_0^x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    /// Segment boundaries `0 = x_0 < x_1 < ... < x_m = L`.
    edges: Vec<f64>,
    /// Density on each segment.
    densities: Vec<f64>,
    /// `N` at every edge.
    counts: Vec<f64>,
    regular: bool,
}

impl DensityProfile {
    /// Build from `(x0, x1, k)` segments; gaps between segments are empty road.
    pub fn from_segments(length: f64, segments: &[(f64, f64, f64)], fd: &TriangularFD, n0: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return domain(format!("link length must be positive, got {length}"));
        }
        let mut segs: Vec<(f64, f64, f64)> = segments.to_vec();
        segs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut edges = vec![0.0];
        let mut densities = Vec::new();
        let mut cursor = 0.0;
        let snap = |x: f64| if (x - length).abs() <= 1e-12 * length { length } else { x };
        for (x0, x1, k) in segs {
            let (x0, x1) = (snap(x0), snap(x1));
            if x0 < -1e-12 || x1 > length || x1 <= x0 {
                return domain(format!("profile segment [{x0}, {x1}] invalid on link of length {length}"));
            }
            if x0 < cursor - 1e-12 {
                return domain(format!("profile segments overlap at x = {x0}"));
            }
            if k < 0.0 || k > fd.k_jam() + FD_TOL {
                return domain(format!("initial density {k} outside [0, {}]", fd.k_jam()));
            }
            if x0 > cursor + 1e-12 {
                edges.push(x0);
                densities.push(0.0);
            }
            edges.push(x1);
            densities.push(k.min(fd.k_jam()));
            cursor = x1;
        }
        if cursor < length {
            edges.push(length);
            densities.push(0.0);
        }
        Self::build(edges, densities, fd, n0)
    }

    /// Uniform density `k` on `[0, L]`.
    pub fn uniform(length: f64, k: f64, fd: &TriangularFD) -> Result<Self> {
        Self::from_segments(length, &[(0.0, length, k)], fd, 0.0)
    }

    pub fn empty(length: f64, fd: &TriangularFD) -> Result<Self> {
        Self::uniform(length, 0.0, fd)
    }

    fn build(edges: Vec<f64>, densities: Vec<f64>, fd: &TriangularFD, n0: f64) -> Result<Self> {
        // merge neighbours carrying the same density
        let mut e = vec![edges[0]];
        let mut d: Vec<f64> = Vec::new();
        for (i, &k) in densities.iter().enumerate() {
            if d.last() == Some(&k) {
                *e.last_mut().unwrap() = edges[i + 1];
            } else {
                d.push(k);
                e.push(edges[i + 1]);
            }
        }
        let mut counts = vec![n0];
        for (i, &k) in d.iter().enumerate() {
            let prev = counts[i];
            counts.push(prev - k * (e[i + 1] - e[i]));
        }
        let kc = fd.k_crit();
        let first_congested = d.iter().position(|&k| k > kc + FD_TOL).unwrap_or(d.len());
        let regular = d[first_congested..].iter().all(|&k| k > kc + FD_TOL);
        Ok(Self { edges: e, densities: d, counts, regular })
    }

    pub fn length(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    /// True when an uncongested upstream prefix is followed by a congested suffix.
    pub fn is_regular(&self) -> bool {
        self.regular
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    /// `N(0)`.
    pub fn upstream_count(&self) -> f64 {
        self.counts[0]
    }

    /// `N(L)`.
    pub fn downstream_count(&self) -> f64 {
        *self.counts.last().unwrap()
    }

    pub fn vehicles(&self) -> f64 {
        self.upstream_count() - self.downstream_count()
    }

    /// Initial cumulative count `N(x)`, with `x` clamped to `[0, L]`.
    pub fn cumulative(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, self.length());
        let i = self.edges.partition_point(|&e| e <= x).saturating_sub(1).min(self.densities.len() - 1);
        self.counts[i] - self.densities[i] * (x - self.edges[i])
    }

    /// Density at `x`; segments are closed on the left, except that `x = L` maps to the last one.
    pub fn density(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, self.length());
        let i = self.edges.partition_point(|&e| e <= x).saturating_sub(1).min(self.densities.len() - 1);
        self.densities[i]
    }

    /// Interior edges lying strictly inside `(lo, hi)`.
    pub fn edges_within(&self, lo: f64, hi: f64) -> impl Iterator<Item = f64> + '_ {
        self.edges.iter().copied().filter(move |&e| e > lo && e < hi)
    }

    /// Same profile with every count shifted so that `N(0) = n0`.
    pub fn with_reference(&self, n0: f64) -> Self {
        let shift = n0 - self.counts[0];
        Self { counts: self.counts.iter().map(|c| c + shift).collect(), ..self.clone() }
    }

    /// Restriction to `[a, b]`, re-based so the new origin is at `a`.
    pub fn restrict(&self, a: f64, b: f64, fd: &TriangularFD) -> Result<Self> {
        if !(0.0 <= a && a < b && b <= self.length()) {
            return domain(format!("sub-interval [{a}, {b}] not inside [0, {}]", self.length()));
        }
        let mut edges = vec![0.0];
        let mut ds = Vec::new();
        for (i, &k) in self.densities.iter().enumerate() {
            let lo = self.edges[i].max(a);
            let hi = self.edges[i + 1].min(b);
            if hi > lo {
                edges.push(hi - a);
                ds.push(k);
            }
        }
        Self::build(edges, ds, fd, self.cumulative(a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd() -> TriangularFD {
        TriangularFD::new(1.0, 0.5, 3.0).unwrap()
    }

    #[test]
    fn cumulative_count_integrates_density() {
        let p = DensityProfile::from_segments(2.0, &[(0.0, 1.0, 0.5), (1.0, 2.0, 2.0)], &fd(), 10.0).unwrap();
        assert_eq!(p.cumulative(0.0), 10.0);
        assert_eq!(p.cumulative(1.0), 9.5);
        assert_eq!(p.cumulative(1.5), 8.5);
        assert_eq!(p.downstream_count(), 7.5);
        assert_eq!(p.vehicles(), 2.5);
        assert!(p.is_regular());
    }

    #[test]
    fn congested_upstream_is_irregular() {
        let p = DensityProfile::from_segments(1.0, &[(0.0, 0.5, 2.5), (0.5, 1.0, 0.3)], &fd(), 0.0).unwrap();
        assert!(!p.is_regular());
        assert!(DensityProfile::uniform(1.0, 2.5, &fd()).unwrap().is_regular());
        assert!(DensityProfile::empty(1.0, &fd()).unwrap().is_regular());
    }

    #[test]
    fn gaps_are_empty_and_bad_segments_rejected() {
        let p = DensityProfile::from_segments(1.0, &[(0.25, 0.5, 1.0)], &fd(), 0.0).unwrap();
        assert_eq!(p.densities(), &[0.0, 1.0, 0.0]);
        assert_eq!(p.density(0.3), 1.0);
        assert!(DensityProfile::from_segments(1.0, &[(0.0, 1.5, 1.0)], &fd(), 0.0).is_err());
        assert!(DensityProfile::from_segments(1.0, &[(0.0, 0.6, 1.0), (0.5, 1.0, 1.0)], &fd(), 0.0).is_err());
        assert!(DensityProfile::from_segments(1.0, &[(0.0, 1.0, 4.0)], &fd(), 0.0).is_err());
    }

    #[test]
    fn restriction_rebases_position() {
        let p = DensityProfile::from_segments(2.0, &[(0.0, 1.0, 0.5), (1.0, 2.0, 2.0)], &fd(), 0.0).unwrap();
        let r = p.restrict(0.5, 1.5, &fd()).unwrap();
        assert_eq!(r.length(), 1.0);
        assert_eq!(r.upstream_count(), p.cumulative(0.5));
        assert!((r.cumulative(0.75) - p.cumulative(1.25)).abs() < 1e-15);
    }
}
