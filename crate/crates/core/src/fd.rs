//! Triangular fundamental diagram.

use crate::error::{domain, LtmError, Result};

/// Absolute tolerance for comparisons on densities and flows.
pub const FD_TOL: f64 = 1e-12;

/// Triangular flow-density relation `Q(k) = min(v k, (K - k) w)`.
///
/// `w_back` is stored as a positive magnitude; the congested wave travels at `-w_back`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangularFD {
    v_free: f64,
    w_back: f64,
    k_jam: f64,
    k_crit: f64,
    capacity: f64,
}

impl TriangularFD {
    pub fn new(v_free: f64, w_back: f64, k_jam: f64) -> Result<Self> {
        for (name, x) in [("v", v_free), ("w", w_back), ("kjam", k_jam)] {
            if !(x.is_finite() && x > 0.0) {
                return Err(LtmError::Domain(format!("{name} must be positive and finite, got {x}")));
            }
        }
        let k_crit = w_back / (v_free + w_back) * k_jam;
        Ok(Self { v_free, w_back, k_jam, k_crit, capacity: v_free * k_crit })
    }

    /// Diagram with the given capacity; jam density is derived.
    pub fn with_capacity(v_free: f64, w_back: f64, capacity: f64) -> Result<Self> {
        Self::new(v_free, w_back, capacity * (v_free + w_back) / (v_free * w_back))
    }

    pub fn v_free(&self) -> f64 {
        self.v_free
    }

    pub fn w_back(&self) -> f64 {
        self.w_back
    }

    pub fn k_jam(&self) -> f64 {
        self.k_jam
    }

    pub fn k_crit(&self) -> f64 {
        self.k_crit
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    fn check_density(&self, k: f64) -> Result<()> {
        if k < -FD_TOL || k > self.k_jam + FD_TOL || k.is_nan() {
            return domain(format!("density {k} outside [0, {}]", self.k_jam));
        }
        Ok(())
    }

    pub fn flux(&self, k: f64) -> Result<f64> {
        self.check_density(k)?;
        Ok(self.flux_unchecked(k))
    }

    pub(crate) fn flux_unchecked(&self, k: f64) -> f64 {
        (self.v_free * k).min((self.k_jam - k) * self.w_back).max(0.0)
    }

    /// Legendre transform `L(u) = sup_k Q(k) - u k = C - k_crit u` on `[-w, v]`.
    pub fn lagrangian(&self, u: f64) -> Result<f64> {
        if u < -self.w_back - FD_TOL || u > self.v_free + FD_TOL || u.is_nan() {
            return domain(format!("wave speed {u} outside [-{}, {}]", self.w_back, self.v_free));
        }
        Ok(self.capacity - self.k_crit * u)
    }

    /// Cell sending flow `min(v k, C)`.
    pub fn pointwise_demand(&self, k: f64) -> Result<f64> {
        self.check_density(k)?;
        Ok(self.demand_unchecked(k))
    }

    /// Cell receiving flow `min(C, (K - k) w)`.
    pub fn pointwise_supply(&self, k: f64) -> Result<f64> {
        self.check_density(k)?;
        Ok(self.supply_unchecked(k))
    }

    pub(crate) fn demand_unchecked(&self, k: f64) -> f64 {
        (self.v_free * k).min(self.capacity).max(0.0)
    }

    pub(crate) fn supply_unchecked(&self, k: f64) -> f64 {
        ((self.k_jam - k) * self.w_back).min(self.capacity).max(0.0)
    }

    /// Under- and over-critical densities carrying flow `q`.
    pub fn branch_densities(&self, q: f64) -> (f64, f64) {
        (q / self.v_free, self.k_jam - q / self.w_back)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd() -> TriangularFD {
        TriangularFD::new(1.0, 0.5, 3.0).unwrap()
    }

    #[test]
    fn derived_quantities() {
        let fd = fd();
        assert!((fd.k_crit() - 1.0).abs() < FD_TOL);
        assert!((fd.capacity() - 1.0).abs() < FD_TOL);
        assert!((fd.capacity() - (fd.k_jam() - fd.k_crit()) * fd.w_back()).abs() < FD_TOL);
        let g = TriangularFD::with_capacity(1.0, 0.5, 2.0).unwrap();
        assert!((g.k_jam() - 6.0).abs() < FD_TOL);
    }

    #[test]
    fn flux_examples() {
        let fd = fd();
        assert_eq!(fd.flux(0.5).unwrap(), 0.5);
        assert_eq!(fd.flux(3.0).unwrap(), 0.0);
        assert!((fd.flux(1.0).unwrap() - fd.capacity()).abs() < FD_TOL);
        assert!(fd.flux(3.5).is_err());
        assert!(fd.flux(-0.1).is_err());
    }

    #[test]
    fn lagrangian_examples() {
        let fd = fd();
        assert!(fd.lagrangian(1.0).unwrap().abs() < FD_TOL);
        assert!((fd.lagrangian(0.0).unwrap() - fd.capacity()).abs() < FD_TOL);
        assert!((fd.lagrangian(-0.5).unwrap() - 0.5 * 3.0).abs() < FD_TOL);
        assert!(fd.lagrangian(1.2).is_err());
    }

    #[test]
    fn cell_demand_supply_examples() {
        let fd = fd();
        assert_eq!((fd.pointwise_demand(0.0).unwrap(), fd.pointwise_supply(0.0).unwrap()), (0.0, 1.0));
        assert_eq!((fd.pointwise_demand(3.0).unwrap(), fd.pointwise_supply(3.0).unwrap()), (1.0, 0.0));
        assert_eq!((fd.pointwise_demand(1.0).unwrap(), fd.pointwise_supply(1.0).unwrap()), (1.0, 1.0));
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        assert!(TriangularFD::new(0.0, 0.5, 3.0).is_err());
        assert!(TriangularFD::new(1.0, -0.5, 3.0).is_err());
        assert!(TriangularFD::new(1.0, 0.5, f64::NAN).is_err());
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn flux_is_min_of_demand_and_supply(v in 0.1f64..5.0, w in 0.1f64..5.0, kj in 0.5f64..10.0, frac in 0.0f64..=1.0) {
            let fd = TriangularFD::new(v, w, kj).unwrap();
            let k = frac * kj;
            let q = fd.flux(k).unwrap();
            let m = fd.pointwise_demand(k).unwrap().min(fd.pointwise_supply(k).unwrap());
            prop_assert!((q - m).abs() < 1e-12 * (1.0 + q));
            prop_assert!(q <= fd.capacity() + 1e-12);
        }

        #[test]
        fn lagrangian_matches_dense_legendre_transform(v in 0.1f64..5.0, w in 0.1f64..5.0, kj in 0.5f64..10.0, s in 0.0f64..=1.0) {
            let fd = TriangularFD::new(v, w, kj).unwrap();
            let u = -w + s * (v + w);
            // brute-force sup over a sampling grid that contains k_crit
            let n = 2000;
            let mut best = f64::NEG_INFINITY;
            for i in 0..=n {
                let k = kj * i as f64 / n as f64;
                best = best.max(fd.flux(k).unwrap() - u * k);
            }
            best = best.max(fd.capacity() - u * fd.k_crit());
            prop_assert!((fd.lagrangian(u).unwrap() - best).abs() < 1e-9 * (1.0 + best.abs()));
        }
    }
}
