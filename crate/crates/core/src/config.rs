//! TOML network configuration documents.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LtmError, Result};
use crate::fd::TriangularFD;
use crate::junction::JunctionModel;
use crate::network::{Network, RateProfile};
use crate::profile::DensityProfile;
use crate::sim::{Formulation, SimConfig};

fn cfg_err(msg: impl Into<String>) -> LtmError {
    LtmError::Config(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "default_formulation")]
    pub formulation: String,
    #[serde(default = "one")]
    pub record_every: usize,
}

fn default_formulation() -> String {
    "cumulative".into()
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub x0: f64,
    pub x1: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub id: String,
    pub length: f64,
    pub v: f64,
    pub w: f64,
    pub kjam: f64,
    /// Missing segments are empty road.
    #[serde(default)]
    pub init: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JunctionSection {
    pub id: String,
    #[serde(rename = "in")]
    pub incoming: Vec<String>,
    #[serde(rename = "out")]
    pub outgoing: Vec<String>,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turns: Option<Vec<Vec<f64>>>,
}

fn default_model() -> String {
    "invariant_fair".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatePoint {
    pub t: f64,
    pub value: f64,
}

/// A constant rate or piecewise-constant breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rate {
    Constant(f64),
    Steps(Vec<RatePoint>),
}

impl Rate {
    fn profile(&self) -> Result<RateProfile> {
        match self {
            Rate::Constant(v) => RateProfile::constant(*v),
            Rate::Steps(p) => RateProfile::steps(&p.iter().map(|r| (r.t, r.value)).collect::<Vec<_>>()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OriginSection {
    pub id: String,
    pub to_link: String,
    pub demand: Rate,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub commodities: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DestinationSection {
    pub id: String,
    pub from_link: String,
    pub supply: Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommoditySection {
    pub id: String,
    pub path: Vec<String>,
}

/// Diverge-merge stability measurement on a simulated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    pub xi: f64,
    /// Link whose inflow is compared with the fixed point.
    pub link: String,
    pub fixed_point: f64,
    pub period: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilitySection>,
}

/// Whole configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub sim: SimSection,
    pub links: Vec<LinkSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub junctions: Vec<JunctionSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub origins: Vec<OriginSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub destinations: Vec<DestinationSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub commodities: Vec<CommoditySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisSection>,
}

impl NetworkConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| cfg_err(format!("malformed config: {}", e.message())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| cfg_err(format!("cannot serialize config: {e}")))
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let formulation: Formulation = self.sim.formulation.parse()?;
        let mut c = SimConfig::new(self.sim.dt, self.sim.horizon)?.with_formulation(formulation);
        c.record_every = self.sim.record_every;
        c.validate()?;
        Ok(c)
    }

    pub fn stability(&self) -> Option<&StabilitySection> {
        self.analysis.as_ref().and_then(|a| a.stability.as_ref())
    }

    pub fn link(&self, id: &str) -> Option<&LinkSection> {
        self.links.iter().find(|l| l.id == id)
    }

    pub fn build_network(&self) -> Result<Network> {
        let mut b = Network::builder();
        for l in &self.links {
            let ctx = |e: LtmError| cfg_err(format!("link `{}`: {}", l.id, e));
            let fd = TriangularFD::new(l.v, l.w, l.kjam).map_err(ctx)?;
            let segs: Vec<(f64, f64, f64)> = l.init.iter().map(|s| (s.x0, s.x1, s.k)).collect();
            let profile = DensityProfile::from_segments(l.length, &segs, &fd, 0.0).map_err(ctx)?;
            b = b.link(&l.id, fd, profile);
        }
        for j in &self.junctions {
            let model: JunctionModel = j.model.parse().map_err(|e: LtmError| cfg_err(format!("junction `{}`: {}", j.id, e)))?;
            let ins: Vec<&str> = j.incoming.iter().map(String::as_str).collect();
            let outs: Vec<&str> = j.outgoing.iter().map(String::as_str).collect();
            b = b.junction(&j.id, &ins, &outs, model, j.turns.clone());
        }
        for o in &self.origins {
            let demand = o.demand.profile().map_err(|e| cfg_err(format!("origin `{}`: {}", o.id, e)))?;
            let shares: Vec<(&str, f64)> = o.commodities.iter().map(|(k, v)| (k.as_str(), *v)).collect();
            b = b.origin(&o.id, &o.to_link, demand, &shares);
        }
        for d in &self.destinations {
            let supply = d.supply.profile().map_err(|e| cfg_err(format!("destination `{}`: {}", d.id, e)))?;
            b = b.destination(&d.id, &d.from_link, supply);
        }
        for c in &self.commodities {
            let path: Vec<&str> = c.path.iter().map(String::as_str).collect();
            b = b.commodity(&c.id, &path);
        }
        b.build()
    }
}
