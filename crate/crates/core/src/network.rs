//! Network data model: links, junctions, origins, destinations and commodities.

use std::collections::HashMap;

use crate::error::{LtmError, Result};
use crate::fd::TriangularFD;
use crate::junction::{JunctionModel, JunctionSpec, MAX_IN_DEGREE};
use crate::link::LinkState;
use crate::profile::DensityProfile;

fn cfg<T>(msg: impl Into<String>) -> Result<T> {
    Err(LtmError::Config(msg.into()))
}

/// Piecewise-constant rate over time; zero before the first breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct RateProfile {
    times: Vec<f64>,
    values: Vec<f64>,
}

pub type DemandProfile = RateProfile;
pub type SupplyProfile = RateProfile;

impl RateProfile {
    pub fn constant(value: f64) -> Result<Self> {
        Self::steps(&[(0.0, value)])
    }

    /// `(t, value)` pairs; `value` holds from `t` to the next breakpoint.
    pub fn steps(points: &[(f64, f64)]) -> Result<Self> {
        if points.is_empty() {
            return cfg("a rate profile needs at least one breakpoint");
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return cfg(format!("rate profile breakpoints must increase: {} then {}", w[0].0, w[1].0));
            }
        }
        if points.iter().any(|&(t, v)| !(v >= 0.0) || !v.is_finite() || !t.is_finite()) {
            return cfg("rate profile values must be finite and nonnegative");
        }
        let (times, values) = points.iter().copied().unzip();
        Ok(Self { times, values })
    }

    pub fn value(&self, t: f64) -> f64 {
        // a breakpoint within rounding of t counts as reached
        let i = self.times.partition_point(|&s| s <= t + 1e-12);
        if i == 0 {
            0.0
        } else {
            self.values[i - 1]
        }
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct Origin {
    pub id: String,
    pub to_link: usize,
    pub demand: DemandProfile,
    /// Commodity composition of the generated flow.
    pub shares: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Destination {
    pub id: String,
    pub from_link: usize,
    pub supply: SupplyProfile,
}

#[derive(Debug, Clone)]
pub struct Commodity {
    pub id: String,
    pub path: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct JunctionNode {
    pub id: String,
    pub incoming: Vec<usize>,
    pub outgoing: Vec<usize>,
    /// Capacities and model; the turning matrix is replaced at every step unless static.
    pub spec: JunctionSpec,
    pub static_turns: bool,
}

/// A validated road network.
#[derive(Debug, Clone)]
pub struct Network {
    pub links: Vec<LinkState>,
    pub junctions: Vec<JunctionNode>,
    pub origins: Vec<Origin>,
    pub destinations: Vec<Destination>,
    /// Empty when flows are not split by path.
    pub commodities: Vec<Commodity>,
    link_index: HashMap<String, usize>,
    /// `next_link[p][a]`: link after `a` on commodity `p`'s path.
    next_link: Vec<Vec<Option<usize>>>,
}

impl Network {
    pub fn builder() -> NetworkBuilder {
        NetworkBuilder::default()
    }

    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.link_index.get(id).copied()
    }

    pub fn link(&self, id: &str) -> Option<&LinkState> {
        self.link_index(id).map(|i| &self.links[i])
    }

    /// Number of tracked commodities (one implicit commodity when none are declared).
    pub fn commodity_count(&self) -> usize {
        self.commodities.len().max(1)
    }

    pub fn next_link(&self, p: usize, a: usize) -> Option<usize> {
        self.next_link.get(p).and_then(|row| row[a])
    }

    /// Vehicles on all regular links at the end of the recorded history.
    pub fn vehicles_on_links(&self) -> f64 {
        self.links.iter().map(|l| l.upstream().last_count() - l.downstream().last_count()).sum()
    }
}

struct LinkDef {
    id: String,
    fd: TriangularFD,
    profile: DensityProfile,
}

struct JunctionDef {
    id: String,
    incoming: Vec<String>,
    outgoing: Vec<String>,
    model: JunctionModel,
    turns: Option<Vec<Vec<f64>>>,
}

struct OriginDef {
    id: String,
    to_link: String,
    demand: DemandProfile,
    shares: Vec<(String, f64)>,
}

/// Collects network elements by id and validates them in [`NetworkBuilder::build`].
#[derive(Default)]
pub struct NetworkBuilder {
    links: Vec<LinkDef>,
    junctions: Vec<JunctionDef>,
    origins: Vec<OriginDef>,
    destinations: Vec<(String, String, SupplyProfile)>,
    commodities: Vec<(String, Vec<String>)>,
}

impl NetworkBuilder {
    pub fn link(mut self, id: &str, fd: TriangularFD, profile: DensityProfile) -> Self {
        self.links.push(LinkDef { id: id.into(), fd, profile });
        self
    }

    pub fn junction(
        mut self,
        id: &str,
        incoming: &[&str],
        outgoing: &[&str],
        model: JunctionModel,
        turns: Option<Vec<Vec<f64>>>,
    ) -> Self {
        self.junctions.push(JunctionDef {
            id: id.into(),
            incoming: incoming.iter().map(|s| s.to_string()).collect(),
            outgoing: outgoing.iter().map(|s| s.to_string()).collect(),
            model,
            turns,
        });
        self
    }

    /// Origin feeding `to_link`; `shares` pairs commodity ids with their fraction of the demand.
    pub fn origin(mut self, id: &str, to_link: &str, demand: DemandProfile, shares: &[(&str, f64)]) -> Self {
        self.origins.push(OriginDef {
            id: id.into(),
            to_link: to_link.into(),
            demand,
            shares: shares.iter().map(|&(c, s)| (c.to_string(), s)).collect(),
        });
        self
    }

    pub fn destination(mut self, id: &str, from_link: &str, supply: SupplyProfile) -> Self {
        self.destinations.push((id.into(), from_link.into(), supply));
        self
    }

    pub fn commodity(mut self, id: &str, path: &[&str]) -> Self {
        self.commodities.push((id.into(), path.iter().map(|s| s.to_string()).collect()));
        self
    }

    pub fn build(self) -> Result<Network> {
        let mut link_index = HashMap::new();
        for (i, l) in self.links.iter().enumerate() {
            if link_index.insert(l.id.clone(), i).is_some() {
                return cfg(format!("duplicate link id `{}`", l.id));
            }
        }
        let n = self.links.len();
        let find = |id: &str, what: &str| -> Result<usize> {
            link_index.get(id).copied().ok_or_else(|| LtmError::Config(format!("{what} refers to unknown link `{id}`")))
        };
        // who feeds each link's entrance and drains its exit
        let mut upstream_of: Vec<Option<String>> = vec![None; n];
        let mut downstream_of: Vec<Option<String>> = vec![None; n];
        let claim = |slot: &mut Option<String>, owner: String, link: &str, end: &str| -> Result<()> {
            if let Some(prev) = slot {
                return cfg(format!("link `{link}` {end} is attached to both `{prev}` and `{owner}`"));
            }
            *slot = Some(owner);
            Ok(())
        };

        let mut junction_ids = std::collections::HashSet::new();
        let mut junctions = Vec::new();
        for j in &self.junctions {
            if !junction_ids.insert(j.id.clone()) {
                return cfg(format!("duplicate junction id `{}`", j.id));
            }
            let what = format!("junction `{}`", j.id);
            let incoming: Vec<usize> = j.incoming.iter().map(|id| find(id, &what)).collect::<Result<_>>()?;
            let outgoing: Vec<usize> = j.outgoing.iter().map(|id| find(id, &what)).collect::<Result<_>>()?;
            if incoming.len() > MAX_IN_DEGREE {
                return cfg(format!("{what} has in-degree {} above {MAX_IN_DEGREE}", incoming.len()));
            }
            for &a in &incoming {
                claim(&mut downstream_of[a], what.clone(), &self.links[a].id, "exit")?;
            }
            for &b in &outgoing {
                claim(&mut upstream_of[b], what.clone(), &self.links[b].id, "entrance")?;
            }
            let (m, k) = (outgoing.len(), incoming.len());
            let turns = j.turns.clone();
            let static_turns = turns.is_some() || m == 1;
            let turning = turns.unwrap_or_else(|| vec![vec![1.0 / m as f64; m]; k]);
            let cap = |i: usize| self.links[i].fd.capacity();
            let spec = JunctionSpec::new(
                incoming.iter().map(|&a| (self.links[a].id.clone(), cap(a))).collect(),
                outgoing.iter().map(|&b| (self.links[b].id.clone(), cap(b))).collect(),
                turning,
                j.model,
            )
            .map_err(|e| match e {
                LtmError::Config(m) => LtmError::Config(format!("{what}: {m}")),
                other => other,
            })?;
            junctions.push(JunctionNode { id: j.id.clone(), incoming, outgoing, spec, static_turns });
        }

        let mut commodities = Vec::new();
        for (id, path) in &self.commodities {
            let what = format!("commodity `{id}`");
            if path.is_empty() {
                return cfg(format!("{what} has an empty path"));
            }
            let idx: Vec<usize> = path.iter().map(|l| find(l, &what)).collect::<Result<_>>()?;
            for w in idx.windows(2) {
                let joined = junctions.iter().any(|j| j.incoming.contains(&w[0]) && j.outgoing.contains(&w[1]));
                if !joined {
                    return cfg(format!(
                        "{what}: links `{}` and `{}` are not connected by a junction",
                        self.links[w[0]].id, self.links[w[1]].id
                    ));
                }
            }
            commodities.push(Commodity { id: id.clone(), path: idx });
        }
        let p_count = commodities.len().max(1);
        let commodity_pos: HashMap<&str, usize> =
            commodities.iter().enumerate().map(|(i, c)| (c.id.as_str(), i)).collect();

        let mut origins = Vec::new();
        for o in self.origins {
            let what = format!("origin `{}`", o.id);
            let to = find(&o.to_link, &what)?;
            claim(&mut upstream_of[to], what.clone(), &o.to_link, "entrance")?;
            let shares = if commodities.is_empty() {
                if !o.shares.is_empty() {
                    return cfg(format!("{what} lists commodity shares but no commodities are declared"));
                }
                vec![1.0]
            } else {
                let mut v = vec![0.0; p_count];
                if o.shares.is_empty() {
                    let starting: Vec<usize> =
                        (0..commodities.len()).filter(|&p| commodities[p].path[0] == to).collect();
                    if starting.is_empty() {
                        return cfg(format!("{what}: no commodity starts on link `{}`", o.to_link));
                    }
                    for &p in &starting {
                        v[p] = 1.0 / starting.len() as f64;
                    }
                } else {
                    for (c, s) in &o.shares {
                        let p = *commodity_pos
                            .get(c.as_str())
                            .ok_or_else(|| LtmError::Config(format!("{what} refers to unknown commodity `{c}`")))?;
                        if commodities[p].path[0] != to {
                            return cfg(format!("{what}: commodity `{c}` does not start on link `{}`", o.to_link));
                        }
                        v[p] += s;
                    }
                }
                if v.iter().any(|&s| s < 0.0) || (v.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return cfg(format!("{what}: commodity shares must be nonnegative and sum to 1"));
                }
                v
            };
            origins.push(Origin { id: o.id, to_link: to, demand: o.demand, shares });
        }

        let mut destinations = Vec::new();
        for (id, from, supply) in self.destinations {
            let what = format!("destination `{id}`");
            let a = find(&from, &what)?;
            claim(&mut downstream_of[a], what.clone(), &from, "exit")?;
            destinations.push(Destination { id, from_link: a, supply });
        }

        for (i, l) in self.links.iter().enumerate() {
            if upstream_of[i].is_none() {
                return cfg(format!("link `{}` has nothing attached to its entrance", l.id));
            }
            if downstream_of[i].is_none() {
                return cfg(format!("link `{}` has nothing attached to its exit", l.id));
            }
        }
        for c in &commodities {
            let first = c.path[0];
            let last = *c.path.last().unwrap();
            if !origins.iter().any(|o| o.to_link == first) {
                return cfg(format!("commodity `{}` does not start at an origin", c.id));
            }
            if !destinations.iter().any(|d| d.from_link == last) {
                return cfg(format!("commodity `{}` does not end at a destination", c.id));
            }
        }

        let mut next_link = vec![vec![None; n]; commodities.len()];
        for (p, c) in commodities.iter().enumerate() {
            for w in c.path.windows(2) {
                next_link[p][w[0]] = Some(w[1]);
            }
        }
        for j in &junctions {
            if j.static_turns {
                continue;
            }
            for &a in &j.incoming {
                if !(0..commodities.len()).any(|p| next_link[p][a].is_some()) {
                    return cfg(format!(
                        "junction `{}`: link `{}` has several exits but neither turns nor commodity paths",
                        j.id, self.links[a].id
                    ));
                }
            }
        }

        let mut links = Vec::with_capacity(n);
        for (i, l) in self.links.into_iter().enumerate() {
            let users: Vec<usize> = (0..commodities.len()).filter(|&p| commodities[p].path.contains(&i)).collect();
            let mut shares = vec![0.0; p_count];
            if users.is_empty() {
                shares.iter_mut().for_each(|s| *s = 1.0 / p_count as f64);
            } else {
                users.iter().for_each(|&p| shares[p] = 1.0 / users.len() as f64);
            }
            links.push(LinkState::with_commodities(l.id, l.fd, l.profile, shares)?);
        }
        Ok(Network { links, junctions, origins, destinations, commodities, link_index, next_link })
    }
}
