//! Time-stepped network loading.

use crate::error::{LtmError, Result};
use crate::junction::{evaluate, JunctionFlows};
use crate::network::Network;

/// Which state variables drive link demand and supply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Formulation {
    /// Boundary cumulative curves `F`, `G`.
    #[default]
    Cumulative,
    /// Integrated queue and vacancy sizes.
    QueueVacancy,
}

impl std::str::FromStr for Formulation {
    type Err = LtmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cumulative" => Ok(Self::Cumulative),
            "queue_vacancy" => Ok(Self::QueueVacancy),
            other => Err(LtmError::Config(format!("unknown formulation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub formulation: Formulation,
    /// Keep every n-th step in the trajectory.
    pub record_every: usize,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64) -> Result<Self> {
        let c = Self { dt, horizon, formulation: Formulation::Cumulative, record_every: 1 };
        c.validate()?;
        Ok(c)
    }

    pub fn with_formulation(mut self, formulation: Formulation) -> Self {
        self.formulation = formulation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(LtmError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt) || !self.horizon.is_finite() {
            return Err(LtmError::Config(format!("horizon {} must be at least dt {}", self.horizon, self.dt)));
        }
        if self.record_every == 0 {
            return Err(LtmError::Config("record_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of steps covering the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil() as usize
    }
}

/// State at the start of a step and the fluxes applied during it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkRecord {
    pub cum_in: f64,
    pub cum_out: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub demand: f64,
    pub supply: f64,
    pub inflow: f64,
    pub outflow: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JunctionRecord {
    pub theta: f64,
    pub g: Vec<f64>,
    pub f: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub links: Vec<LinkRecord>,
    pub junctions: Vec<JunctionRecord>,
    pub origin_flow: Vec<f64>,
    pub destination_flow: Vec<f64>,
}

/// Output of [`run`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub records: Vec<StepRecord>,
    /// Network with the full link histories at the end of the run.
    pub network: Network,
    pub origin_queues: Vec<f64>,
    /// Largest global conservation error seen at any step.
    pub max_conservation_drift: f64,
    pub steps: usize,
}

impl Trajectory {
    pub fn link_series(&self, link: usize, field: impl Fn(&LinkRecord) -> f64) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.t, field(&r.links[link]))).collect()
    }

    /// Outflow `g` of a link by id.
    pub fn outflow(&self, id: &str) -> Option<Vec<(f64, f64)>> {
        self.network.link_index(id).map(|a| self.link_series(a, |r| r.outflow))
    }

    pub fn inflow(&self, id: &str) -> Option<Vec<(f64, f64)>> {
        self.network.link_index(id).map(|a| self.link_series(a, |r| r.inflow))
    }
}

/// Stepwise driver; each step reads one frozen demand/supply snapshot.
#[derive(Debug, Clone)]
pub struct Simulation {
    net: Network,
    cfg: SimConfig,
    n: usize,
    origin_queue: Vec<f64>,
    entered: f64,
    absorbed: f64,
    initial_vehicles: f64,
    max_drift: f64,
}

const SIGN_TOL: f64 = 1e-9;

impl Simulation {
    pub fn new(net: Network, cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        for l in &net.links {
            let limit = l.free_flow_time().min(l.wave_time());
            if cfg.dt > limit * (1.0 + 1e-12) {
                return Err(LtmError::Config(format!(
                    "dt = {} exceeds min(L/v, L/w) = {limit} on link `{}`",
                    cfg.dt,
                    l.id()
                )));
            }
        }
        let initial_vehicles = net.vehicles_on_links();
        Ok(Self {
            origin_queue: vec![0.0; net.origins.len()],
            net,
            cfg,
            n: 0,
            entered: 0.0,
            absorbed: 0.0,
            initial_vehicles,
            max_drift: 0.0,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.n as f64 * self.cfg.dt
    }

    pub fn steps_taken(&self) -> usize {
        self.n
    }

    pub fn origin_queues(&self) -> &[f64] {
        &self.origin_queue
    }

    /// Advance every link by one step.
    pub fn step(&mut self) -> Result<StepRecord> {
        let (n, t) = (self.n, self.time());
        let rec = self.step_inner(t).map_err(|e| LtmError::Step { step: n, t, source: Box::new(e) })?;
        self.n += 1;
        Ok(rec)
    }

    fn step_inner(&mut self, t: f64) -> Result<StepRecord> {
        let dt = self.cfg.dt;
        let net = &self.net;
        let nl = net.links.len();
        let pc = net.commodity_count();
        let qv = self.cfg.formulation == Formulation::QueueVacancy;

        let mut demand = Vec::with_capacity(nl);
        let mut supply = Vec::with_capacity(nl);
        for l in &net.links {
            if qv {
                demand.push(l.queue_demand(t, dt)?);
                supply.push(l.vacancy_supply(t, dt)?);
            } else {
                demand.push(l.demand(t, dt)?);
                supply.push(l.supply(t, dt)?);
            }
        }
        let out_shares: Vec<Vec<f64>> = net.links.iter().map(|l| l.downstream_shares().to_vec()).collect();

        let mut f = vec![0.0; nl];
        let mut g = vec![0.0; nl];
        let mut in_comm = vec![vec![0.0; pc]; nl];

        let mut origin_flow = Vec::with_capacity(net.origins.len());
        for (i, o) in net.origins.iter().enumerate() {
            let arriving = o.demand.value(t);
            let flow = (arriving + self.origin_queue[i] / dt).min(supply[o.to_link]);
            f[o.to_link] = flow;
            for p in 0..pc {
                in_comm[o.to_link][p] += flow * o.shares[p];
            }
            self.origin_queue[i] = (self.origin_queue[i] + (arriving - flow) * dt).max(0.0);
            origin_flow.push(flow);
        }
        let mut destination_flow = Vec::with_capacity(net.destinations.len());
        for d in &net.destinations {
            let flow = demand[d.from_link].min(d.supply.value(t));
            g[d.from_link] = flow;
            destination_flow.push(flow);
        }

        let mut junctions = Vec::with_capacity(net.junctions.len());
        for j in &net.junctions {
            let rows: Vec<Vec<f64>> = if j.static_turns {
                j.spec.turning.clone()
            } else {
                j.incoming.iter().map(|&a| route_row(net, a, &j.outgoing, &out_shares[a])).collect()
            };
            let spec = if j.static_turns { j.spec.clone() } else { j.spec.with_turning(rows.clone())? };
            let dem: Vec<f64> = j.incoming.iter().map(|&a| demand[a]).collect();
            let sup: Vec<f64> = j.outgoing.iter().map(|&b| supply[b]).collect();
            let flows: JunctionFlows = evaluate(&spec, &dem, &sup, None)?;
            let (sg, sf): (f64, f64) = (flows.g.iter().sum(), flows.f.iter().sum());
            if (sg - sf).abs() > 1e-12 * sg.max(1.0) {
                return Err(LtmError::JunctionContract {
                    link: j.id.clone(),
                    detail: format!("junction outflow {sg} differs from inflow {sf}"),
                });
            }
            for (i, &a) in j.incoming.iter().enumerate() {
                g[a] = flows.g[i];
                for p in 0..pc {
                    let c = flows.g[i] * out_shares[a][p];
                    if c == 0.0 {
                        continue;
                    }
                    let target = if j.static_turns { None } else { net.next_link(p, a) };
                    match target.and_then(|b| j.outgoing.iter().position(|&x| x == b)) {
                        Some(k) => in_comm[j.outgoing[k]][p] += c,
                        None => {
                            for (k, &b) in j.outgoing.iter().enumerate() {
                                in_comm[b][p] += c * rows[i][k];
                            }
                        }
                    }
                }
            }
            for (k, &b) in j.outgoing.iter().enumerate() {
                f[b] = flows.f[k];
            }
            junctions.push(JunctionRecord { theta: flows.theta, g: flows.g, f: flows.f });
        }

        let mut links = Vec::with_capacity(nl);
        for (a, l) in net.links.iter().enumerate() {
            let (lambda, gamma) = if qv {
                (l.integrated_queue(), l.integrated_vacancy())
            } else {
                (l.queue_size(t)?, l.vacancy_size(t)?)
            };
            links.push(LinkRecord {
                cum_in: l.upstream().last_count(),
                cum_out: l.downstream().last_count(),
                lambda,
                gamma,
                demand: demand[a],
                supply: supply[a],
                inflow: f[a],
                outflow: g[a],
            });
        }

        let tn = (self.n + 1) as f64 * dt;
        for (a, l) in self.net.links.iter_mut().enumerate() {
            let total: f64 = in_comm[a].iter().sum();
            let shares: Vec<f64> = if f[a] > 0.0 && total > 0.0 {
                in_comm[a].iter().map(|c| c / total).collect()
            } else {
                l.upstream_shares().to_vec()
            };
            // grid time rather than accumulated sums keeps delays exact
            l.advance_with_shares(f[a], &shares, g[a], t, tn - t)?;
            let (lam, gam) = if qv {
                (l.integrated_queue(), l.integrated_vacancy())
            } else {
                (l.queue_size(tn)?, l.vacancy_size(tn)?)
            };
            if lam < -SIGN_TOL || gam < -SIGN_TOL {
                return Err(LtmError::Feasibility {
                    link: l.id().to_string(),
                    detail: format!("queue {lam} or vacancy {gam} negative at t = {tn}"),
                });
            }
        }

        self.entered += origin_flow.iter().sum::<f64>() * dt;
        self.absorbed += destination_flow.iter().sum::<f64>() * dt;
        let drift = (self.net.vehicles_on_links() - self.initial_vehicles - (self.entered - self.absorbed)).abs();
        self.max_drift = self.max_drift.max(drift);

        Ok(StepRecord { t, links, junctions, origin_flow, destination_flow })
    }

    /// Step to the configured horizon.
    pub fn run(mut self) -> Result<Trajectory> {
        let steps = self.cfg.steps();
        let mut records = Vec::with_capacity(steps / self.cfg.record_every + 1);
        for k in 0..steps {
            let rec = self.step()?;
            if k % self.cfg.record_every == 0 {
                records.push(rec);
            }
        }
        Ok(Trajectory {
            dt: self.cfg.dt,
            records,
            origin_queues: self.origin_queue,
            max_conservation_drift: self.max_drift,
            network: self.net,
            steps,
        })
    }
}

/// Turning row of link `a` from the paths of the commodities queued at its exit.
fn route_row(net: &Network, a: usize, outgoing: &[usize], shares: &[f64]) -> Vec<f64> {
    let mut row = vec![0.0; outgoing.len()];
    for (p, &share) in shares.iter().enumerate() {
        if let Some(k) = net.next_link(p, a).and_then(|b| outgoing.iter().position(|&x| x == b)) {
            row[k] += share;
        }
    }
    let sum: f64 = row.iter().sum();
    if sum > 0.0 {
        row.iter_mut().for_each(|x| *x /= sum);
    } else {
        row.iter_mut().for_each(|x| *x = 1.0 / outgoing.len() as f64);
    }
    row
}

/// Simulate `net` to the horizon of `cfg`.
pub fn run(net: Network, cfg: SimConfig) -> Result<Trajectory> {
    Simulation::new(net, cfg)?.run()
}

/// Upstream shares `eta_{a,p}(t)` and downstream shares `xi_{a,p}(t) = eta_{a,p}(t - pi_a(t))`.
///
/// Zero inflow keeps the last known composition.
pub fn commodity_proportions(net: &Network, a: usize, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let link = net.links.get(a).ok_or_else(|| LtmError::Domain(format!("no link with index {a}")))?;
    let now = link.time();
    if t < 0.0 || t > now + 1e-9 {
        return Err(LtmError::Domain(format!("t = {t} outside recorded history [0, {now}]")));
    }
    let entry_shares = |tau: f64| -> Option<Vec<f64>> {
        if tau >= now - 1e-12 {
            return None;
        }
        let total = link.upstream().slope_at(tau).ok()?;
        if total <= 0.0 {
            return None;
        }
        let v: Vec<f64> = (0..link.commodity_count())
            .map(|p| link.commodity_inflow(p).slope_at(tau).unwrap_or(0.0) / total)
            .collect();
        Some(v)
    };
    let eta = entry_shares(t).unwrap_or_else(|| link.upstream_shares().to_vec());
    let g = link.downstream().eval(t)?;
    let xi = if (t - now).abs() <= 1e-12 {
        link.downstream_shares().to_vec()
    } else if g < link.upstream().first_count() - 1e-12 {
        link.initial_shares().to_vec()
    } else {
        let tau = t - link.travel_time(t)?;
        entry_shares(tau).unwrap_or_else(|| link.downstream_shares().to_vec())
    };
    Ok((eta, xi))
}
