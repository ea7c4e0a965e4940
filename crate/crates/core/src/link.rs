//! Per-link state of the link transmission model.

use crate::curve::CumulativeCurve;
use crate::error::{domain, LtmError, Result};
use crate::fd::TriangularFD;
use crate::kernel::{initial_minimum, UDomainData};
use crate::profile::DensityProfile;

/// Slack on the flux bounds accepted by [`LinkState::advance`].
pub const CONTRACT_TOL: f64 = 1e-9;
/// Slack on the sign of queue, vacancy and intermediate counts.
pub const SIGN_TOL: f64 = 1e-9;

/// Vehicles with cumulative index `>= start` (up to the next segment) carry `shares`.
#[derive(Debug, Clone, PartialEq)]
struct ShareSegment {
    start: f64,
    shares: Vec<f64>,
}

/// Boundary curves, commodity curves and integrated queue/vacancy of one link.
#[derive(Debug, Clone)]
pub struct LinkState {
    id: String,
    fd: TriangularFD,
    profile: DensityProfile,
    upstream: CumulativeCurve,
    downstream: CumulativeCurve,
    commodity_in: Vec<CumulativeCurve>,
    commodity_out: Vec<CumulativeCurve>,
    fifo: Vec<ShareSegment>,
    initial_shares: Vec<f64>,
    lambda: f64,
    gamma: f64,
}

impl LinkState {
    /// Single-commodity link starting at `t = 0` from `profile`.
    pub fn new(id: impl Into<String>, fd: TriangularFD, profile: DensityProfile) -> Self {
        Self::with_commodities(id, fd, profile, vec![1.0]).expect("unit share vector is valid")
    }

    /// Link whose initial vehicles carry commodity shares `initial_shares`.
    pub fn with_commodities(
        id: impl Into<String>,
        fd: TriangularFD,
        profile: DensityProfile,
        initial_shares: Vec<f64>,
    ) -> Result<Self> {
        check_shares(&initial_shares)?;
        let (n0, nl) = (profile.upstream_count(), profile.downstream_count());
        Ok(Self {
            id: id.into(),
            fd,
            upstream: CumulativeCurve::starting_at(0.0, n0),
            downstream: CumulativeCurve::starting_at(0.0, nl),
            commodity_in: initial_shares.iter().map(|p| CumulativeCurve::starting_at(0.0, p * n0)).collect(),
            commodity_out: initial_shares.iter().map(|p| CumulativeCurve::starting_at(0.0, p * nl)).collect(),
            fifo: vec![ShareSegment { start: nl, shares: initial_shares.clone() }],
            initial_shares,
            profile,
            lambda: 0.0,
            gamma: 0.0,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn fd(&self) -> &TriangularFD {
        &self.fd
    }

    pub fn length(&self) -> f64 {
        self.profile.length()
    }

    pub fn profile(&self) -> &DensityProfile {
        &self.profile
    }

    /// `F`.
    pub fn upstream(&self) -> &CumulativeCurve {
        &self.upstream
    }

    /// `G`.
    pub fn downstream(&self) -> &CumulativeCurve {
        &self.downstream
    }

    pub fn commodity_count(&self) -> usize {
        self.commodity_in.len()
    }

    pub fn commodity_inflow(&self, p: usize) -> &CumulativeCurve {
        &self.commodity_in[p]
    }

    pub fn commodity_outflow(&self, p: usize) -> &CumulativeCurve {
        &self.commodity_out[p]
    }

    /// Time up to which the history is recorded.
    pub fn time(&self) -> f64 {
        self.upstream.end_time()
    }

    pub fn free_flow_time(&self) -> f64 {
        self.length() / self.fd.v_free()
    }

    pub fn wave_time(&self) -> f64 {
        self.length() / self.fd.w_back()
    }

    /// Data for the variational kernel over the recorded history.
    pub fn domain_data(&self) -> Result<UDomainData> {
        UDomainData::new(self.fd, self.profile.clone(), self.upstream.clone(), self.downstream.clone())
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t < 0.0 || t > self.time() + 1e-9 {
            return domain(format!("link `{}`: t = {t} outside recorded history [0, {}]", self.id, self.time()));
        }
        Ok(())
    }

    /// Count that a vehicle leaving at `t` would have had on entry if it travelled freely.
    fn free_arrival_count(&self, t: f64) -> f64 {
        let tv = self.free_flow_time();
        if t <= tv {
            self.profile.cumulative(self.length() - self.fd.v_free() * t)
        } else {
            self.upstream.eval_clamped(t - tv)
        }
    }

    /// Count admissible at the entrance at `t` if the link were jammed back from the exit.
    fn jam_admission_count(&self, t: f64) -> f64 {
        let tw = self.wave_time();
        let (w, kj) = (self.fd.w_back(), self.fd.k_jam());
        if t <= tw {
            self.profile.cumulative(w * t) + kj * w * t
        } else {
            self.downstream.eval_clamped(t - tw) + kj * self.length()
        }
    }

    /// Queue size `lambda(t)`.
    pub fn queue_size(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        Ok(self.free_arrival_count(t) - self.downstream.eval_clamped(t))
    }

    /// Vacancy size `gamma(t)`.
    pub fn vacancy_size(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        Ok(self.jam_admission_count(t) - self.upstream.eval_clamped(t))
    }

    /// Queue integrated step by step in the queue/vacancy formulation.
    pub fn integrated_queue(&self) -> f64 {
        self.lambda
    }

    pub fn integrated_vacancy(&self) -> f64 {
        self.gamma
    }

    pub fn vehicles(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.upstream.eval_clamped(t) - self.downstream.eval_clamped(t))
    }

    fn check_step(&self, t: f64, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return domain(format!("time step must be positive, got {dt}"));
        }
        if dt > self.free_flow_time().min(self.wave_time()) * (1.0 + 1e-12) {
            return domain(format!(
                "link `{}`: dt = {dt} exceeds min(L/v, L/w) = {}",
                self.id,
                self.free_flow_time().min(self.wave_time())
            ));
        }
        self.check_time(t)
    }

    fn rate(&self, numerator: f64, dt: f64, what: &str, t: f64) -> Result<f64> {
        if numerator < -SIGN_TOL {
            return Err(LtmError::Feasibility {
                link: self.id.clone(),
                detail: format!("{what} count margin {numerator} is negative at t = {t}"),
            });
        }
        Ok((numerator.max(0.0) / dt).min(self.fd.capacity()))
    }

    /// Sending flow over `[t, t + dt]` from the variational solution at the exit.
    pub fn demand(&self, t: f64, dt: f64) -> Result<f64> {
        self.check_step(t, dt)?;
        let tn = t + dt;
        let l = self.length();
        let mut x = initial_minimum(&self.profile, &self.fd, l, tn);
        if tn > self.free_flow_time() {
            x = x.min(self.upstream.eval_clamped(tn - self.free_flow_time()));
        }
        self.rate(x - self.downstream.eval_clamped(t), dt, "demand", t)
    }

    /// Receiving flow over `[t, t + dt]` from the variational solution at the entrance.
    pub fn supply(&self, t: f64, dt: f64) -> Result<f64> {
        self.check_step(t, dt)?;
        let tn = t + dt;
        let mut y = initial_minimum(&self.profile, &self.fd, 0.0, tn);
        if tn > self.wave_time() {
            y = y.min(self.downstream.eval_clamped(tn - self.wave_time()) + self.fd.k_jam() * self.length());
        }
        self.rate(y - self.upstream.eval_clamped(t), dt, "supply", t)
    }

    /// Sending flow from the integrated queue.
    pub fn queue_demand(&self, t: f64, dt: f64) -> Result<f64> {
        self.check_step(t, dt)?;
        let du = self.free_arrival_count(t + dt) - self.free_arrival_count(t);
        self.rate(self.lambda + du, dt, "queue", t)
    }

    /// Receiving flow from the integrated vacancy.
    pub fn vacancy_supply(&self, t: f64, dt: f64) -> Result<f64> {
        self.check_step(t, dt)?;
        let dd = self.jam_admission_count(t + dt) - self.jam_admission_count(t);
        self.rate(self.gamma + dd, dt, "vacancy", t)
    }

    /// Increments of queue and vacancy over `[t, t + dt]` for boundary fluxes `f_in`, `g_out`.
    pub fn queue_formulation_step(&self, f_in: f64, g_out: f64, t: f64, dt: f64) -> Result<(f64, f64)> {
        self.check_step(t, dt)?;
        let du = self.free_arrival_count(t + dt) - self.free_arrival_count(t);
        let dd = self.jam_admission_count(t + dt) - self.jam_admission_count(t);
        Ok((du - g_out * dt, dd - f_in * dt))
    }

    /// Commodity shares of the vehicle next in line at the exit.
    pub fn downstream_shares(&self) -> &[f64] {
        let g = self.downstream.last_count();
        let tol = 1e-12 * (1.0 + g.abs());
        let i = self.fifo.partition_point(|s| s.start <= g + tol).saturating_sub(1);
        &self.fifo[i].shares
    }

    /// Commodity shares of the vehicles present at `t = 0`.
    pub fn initial_shares(&self) -> &[f64] {
        &self.initial_shares
    }

    /// Commodity shares of the most recent entering vehicles.
    pub fn upstream_shares(&self) -> &[f64] {
        &self.fifo.last().unwrap().shares
    }

    /// Advance with inflow carrying the latest upstream shares.
    pub fn advance(&mut self, f_in: f64, g_out: f64, t: f64, dt: f64) -> Result<()> {
        let shares = self.upstream_shares().to_vec();
        self.advance_with_shares(f_in, &shares, g_out, t, dt)
    }

    /// Append `(t + dt, F + f_in dt)` and `(t + dt, G + g_out dt)`.
    pub fn advance_with_shares(&mut self, f_in: f64, in_shares: &[f64], g_out: f64, t: f64, dt: f64) -> Result<()> {
        if (t - self.time()).abs() > 1e-9 {
            return domain(format!("link `{}` history ends at {}, cannot advance from {t}", self.id, self.time()));
        }
        if in_shares.len() != self.commodity_count() {
            return domain(format!("link `{}` expects {} commodity shares", self.id, self.commodity_count()));
        }
        check_shares(in_shares)?;
        let d = self.demand(t, dt)?;
        let s = self.supply(t, dt)?;
        let contract = |detail: String| Err(LtmError::JunctionContract { link: self.id.clone(), detail });
        if !(f_in >= -CONTRACT_TOL) || f_in > s + CONTRACT_TOL {
            return contract(format!("inflow {f_in} outside [0, supply {s}] at t = {t}"));
        }
        if !(g_out >= -CONTRACT_TOL) || g_out > d + CONTRACT_TOL {
            return contract(format!("outflow {g_out} outside [0, demand {d}] at t = {t}"));
        }
        let (f_in, g_out) = (f_in.clamp(0.0, s), g_out.clamp(0.0, d));
        let (dl, dg) = self.queue_formulation_step(f_in, g_out, t, dt)?;
        let out_shares = self.downstream_shares().to_vec();
        let f0 = self.upstream.last_count();
        let tn = t + dt;
        self.upstream.push(tn, f0 + f_in * dt)?;
        let g1 = self.downstream.last_count() + g_out * dt;
        self.downstream.push(tn, g1)?;
        for (p, c) in self.commodity_in.iter_mut().enumerate() {
            let n = c.last_count() + f_in * in_shares[p] * dt;
            c.push(tn, n)?;
        }
        for (p, c) in self.commodity_out.iter_mut().enumerate() {
            let n = c.last_count() + g_out * out_shares[p] * dt;
            c.push(tn, n)?;
        }
        if f_in > 0.0 && self.fifo.last().unwrap().shares != in_shares {
            self.fifo.push(ShareSegment { start: f0, shares: in_shares.to_vec() });
        }
        // entries already served at the exit are never looked up again
        let keep = self.fifo.partition_point(|s| s.start <= g1).saturating_sub(1);
        self.fifo.drain(..keep);
        self.lambda += dl;
        self.gamma += dg;
        let vehicles = self.upstream.last_count() - g1;
        if vehicles < -SIGN_TOL {
            return Err(LtmError::Feasibility {
                link: self.id.clone(),
                detail: format!("negative vehicle count {vehicles} at t = {tn}"),
            });
        }
        Ok(())
    }

    /// Travel time `pi` with `F(t - pi) = G(t)`, the smallest one on ties.
    pub fn travel_time(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let level = self.downstream.eval_clamped(t);
        match self.upstream.latest_time_at_level(level, t) {
            Some(tau) => Ok((t - tau).max(0.0)),
            None => domain(format!(
                "link `{}`: G({t}) = {level} precedes the first recorded inflow count {}",
                self.id,
                self.upstream.first_count()
            )),
        }
    }
}

fn check_shares(shares: &[f64]) -> Result<()> {
    let sum: f64 = shares.iter().sum();
    if shares.is_empty() || shares.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return domain(format!("commodity shares {shares:?} are not a probability vector"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fd() -> TriangularFD {
        TriangularFD::new(1.0, 0.5, 3.0).unwrap()
    }

    fn empty_link() -> LinkState {
        LinkState::new("a", fd(), DensityProfile::empty(1.0, &fd()).unwrap())
    }

    /// Stationary link at flux `q`, congested on the downstream fraction `beta`.
    fn stationary(q: f64, beta: f64) -> LinkState {
        let fd = fd();
        let (k1, k2) = fd.branch_densities(q);
        let x = 1.0 - beta;
        let segs = [(0.0, x, k1), (x, 1.0, k2)];
        let segs: Vec<_> = segs.into_iter().filter(|s| s.1 > s.0).collect();
        LinkState::new("a", fd, DensityProfile::from_segments(1.0, &segs, &fd, 0.0).unwrap())
    }

    #[test]
    fn queue_and_vacancy_vanish_at_start() {
        let l = stationary(0.6, 0.4);
        assert_eq!(l.queue_size(0.0).unwrap(), 0.0);
        assert_eq!(l.vacancy_size(0.0).unwrap(), 0.0);
        assert!(l.queue_size(0.1).is_err());
    }

    #[test]
    fn stationary_queue_and_vacancy() {
        let (q, beta) = (0.6, 0.4);
        let mut l = stationary(q, beta);
        let dt = 0.05;
        for n in 0..200 {
            let t = n as f64 * dt;
            let d = l.demand(t, dt).unwrap();
            let s = l.supply(t, dt).unwrap();
            assert!((d - 1.0).abs() < 1e-12, "queue present: demand at capacity");
            assert!((s - 1.0).abs() < 1e-12, "vacancy present: supply at capacity");
            l.advance(q, q, t, dt).unwrap();
        }
        // constant once both wave times have elapsed
        let kl = 3.0;
        for t in [2.0, 3.0, 10.0] {
            assert!((l.queue_size(t).unwrap() - beta * (1.0 - q) * kl).abs() < 1e-9);
            assert!((l.vacancy_size(t).unwrap() - (1.0 - beta) * (1.0 - q) * kl).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_link_with_constant_inflow() {
        let mut l = empty_link();
        let (f0, dt) = (0.4, 0.1);
        for n in 0..9 {
            let t = n as f64 * dt;
            assert!(l.demand(t, dt).unwrap().abs() < 1e-12);
            assert_eq!(l.supply(t, dt).unwrap(), 1.0);
            l.advance(f0, 0.0, t, dt).unwrap();
        }
        for t in [0.3, 0.9] {
            assert!(l.queue_size(t).unwrap().abs() < 1e-12);
            assert!((l.vacancy_size(t).unwrap() - (1.5 * t - f0 * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn uncongested_initial_density_gives_free_demand() {
        let l = LinkState::new("a", fd(), DensityProfile::uniform(1.0, 0.7, &fd()).unwrap());
        assert!((l.demand(0.0, 0.1).unwrap() - 0.7).abs() < 1e-12);
        assert!((l.queue_demand(0.0, 0.1).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn soc_state_demands_capacity_and_supplies_flux() {
        let l = stationary(0.6, 1.0);
        assert!((l.demand(0.0, 0.01).unwrap() - 1.0).abs() < 1e-12);
        assert!((l.supply(0.0, 0.01).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn advance_rejects_contract_violations() {
        let mut l = empty_link();
        let err = l.advance(0.0, 0.2, 0.0, 0.1).unwrap_err();
        assert!(matches!(err, LtmError::JunctionContract { .. }));
        assert!(matches!(l.advance(1.5, 0.0, 0.0, 0.1).unwrap_err(), LtmError::JunctionContract { .. }));
        assert!(l.advance(0.0, 0.0, 0.5, 0.1).is_err());
        assert!(l.demand(0.0, 2.5).is_err());
    }

    #[test]
    fn flat_advance_and_capacity_step() {
        let mut l = empty_link();
        l.advance(0.0, 0.0, 0.0, 0.1).unwrap();
        assert_eq!(l.upstream().last_count(), 0.0);
        assert_eq!(l.downstream().last_count(), 0.0);
        let g0 = l.vacancy_size(0.1).unwrap();
        l.advance(1.0, 0.0, 0.1, 0.1).unwrap();
        let g1 = l.vacancy_size(0.2).unwrap();
        assert!((g1 - g0 - (1.5 - 1.0) * 0.1).abs() < 1e-12);
    }

    #[test]
    fn queue_formulation_increments() {
        let l = empty_link();
        let (dl, _) = l.queue_formulation_step(0.0, 0.0, 0.0, 0.1).unwrap();
        assert_eq!(dl, 0.0);
        let mut s = stationary(0.6, 0.5);
        for n in 0..30 {
            s.advance(0.6, 0.6, n as f64 * 0.1, 0.1).unwrap();
        }
        let (dl, dg) = s.queue_formulation_step(0.6, 0.6, 3.0, 0.1).unwrap();
        assert!(dl.abs() < 1e-12 && dg.abs() < 1e-12);
    }

    #[test]
    fn delayed_inflow_minus_outflow_rate() {
        // build F with slope 0.8 then query the increment one free-flow time later
        let mut l = empty_link();
        let dt = 0.1;
        for n in 0..10 {
            l.advance(0.8, 0.0, n as f64 * dt, dt).unwrap();
        }
        let t = 1.0;
        let (dl, _) = l.queue_formulation_step(0.0, 0.5, t, dt).unwrap();
        assert!((dl - 0.3 * dt).abs() < 1e-12);
    }

    #[test]
    fn travel_times() {
        let dt = 0.05;
        let mut suc = stationary(0.6, 0.0);
        let mut soc = stationary(0.6, 1.0);
        for n in 0..200 {
            let t = n as f64 * dt;
            suc.advance(0.6, 0.6, t, dt).unwrap();
            soc.advance(0.6, 0.6, t, dt).unwrap();
        }
        assert!((suc.travel_time(8.0).unwrap() - 1.0).abs() < 1e-9);
        let k2 = 3.0 - 0.6 / 0.5;
        assert!((soc.travel_time(8.0).unwrap() - k2 / 0.6).abs() < 1e-9);
        assert!(soc.travel_time(1.0).is_err());
        let mut e = empty_link();
        e.advance(0.0, 0.0, 0.0, dt).unwrap();
        assert_eq!(e.travel_time(0.05).unwrap(), 0.0);
    }

    #[test]
    fn fifo_share_change_arrives_after_travel_time() {
        let fd = fd();
        let q = 0.5;
        let mut l =
            LinkState::with_commodities("a", fd, DensityProfile::uniform(1.0, q, &fd).unwrap(), vec![0.3, 0.7]).unwrap();
        let dt = 0.01;
        let mut switch_seen = None;
        for n in 0..400 {
            let t = n as f64 * dt;
            if switch_seen.is_none() && l.downstream_shares()[0] > 0.5 {
                switch_seen = Some(t);
            }
            let shares = if n >= 200 { [0.9, 0.1] } else { [0.3, 0.7] };
            let g = l.demand(t, dt).unwrap();
            l.advance_with_shares(q, &shares, g, t, dt).unwrap();
        }
        let ts = switch_seen.unwrap();
        assert!((ts - 3.0).abs() < 1.5 * dt, "switch seen at {ts}");
        let total: f64 = (0..2).map(|p| l.commodity_outflow(p).last_count()).sum();
        assert!((total - l.downstream().last_count()).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn formulations_agree_on_random_fluxes(seed in 0u64..1000, k0 in 0.0f64..3.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let fd = fd();
            let mut l = LinkState::new("a", fd, DensityProfile::uniform(1.0, k0, &fd).unwrap());
            let dt = 0.05;
            for n in 0..120 {
                let t = n as f64 * dt;
                let d = l.demand(t, dt).unwrap();
                let s = l.supply(t, dt).unwrap();
                prop_assert!((0.0..=1.0).contains(&d) && (0.0..=1.0).contains(&s));
                prop_assert!((l.queue_demand(t, dt).unwrap() - d).abs() < 1e-9);
                prop_assert!((l.vacancy_supply(t, dt).unwrap() - s).abs() < 1e-9);
                let f = s * rng.gen::<f64>();
                let g = d * rng.gen::<f64>();
                let before = l.vehicles(t).unwrap();
                l.advance(f, g, t, dt).unwrap();
                let tn = t + dt;
                prop_assert!((l.vehicles(tn).unwrap() - before - (f - g) * dt).abs() < 1e-12);
                let lam = l.queue_size(tn).unwrap();
                let gam = l.vacancy_size(tn).unwrap();
                prop_assert!((lam - l.integrated_queue()).abs() < 1e-9);
                prop_assert!((gam - l.integrated_vacancy()).abs() < 1e-9);
                prop_assert!(lam >= -1e-9 && gam >= -1e-9);
                if lam > dt {
                    prop_assert!((l.demand(tn, dt).unwrap() - 1.0).abs() < 1e-12);
                }
                if gam > dt {
                    prop_assert!((l.supply(tn, dt).unwrap() - 1.0).abs() < 1e-12);
                }
            }
            let data = l.domain_data().unwrap();
            prop_assert!(crate::kernel::check_feasible(&data, data.horizon()).is_empty());
        }
    }
}
