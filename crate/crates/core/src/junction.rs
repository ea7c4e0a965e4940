//! Junction models: fair merge with FIFO diverge, and the proportional merge.

use crate::error::{domain, LtmError, Result};

/// Largest supported number of incoming links (subset enumeration is `2^n`).
pub const MAX_IN_DEGREE: usize = 8;
const DENOM_EPS: f64 = 1e-15;
const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JunctionModel {
    InvariantFair,
    NonInvariantFairMerge,
}

impl std::str::FromStr for JunctionModel {
    type Err = LtmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "invariant_fair" => Ok(Self::InvariantFair),
            "noninvariant_fair_merge" => Ok(Self::NonInvariantFairMerge),
            other => Err(LtmError::Config(format!("unknown junction model `{other}`"))),
        }
    }
}

/// Incoming and outgoing ports of one junction with their turning proportions.
#[derive(Debug, Clone, PartialEq)]
pub struct JunctionSpec {
    pub incoming: Vec<String>,
    pub outgoing: Vec<String>,
    /// `C_a` of every incoming link.
    pub in_capacity: Vec<f64>,
    /// `C_b` of every outgoing link.
    pub out_capacity: Vec<f64>,
    /// `turning[a][b]` is the proportion of `a`'s outflow bound for `b`.
    pub turning: Vec<Vec<f64>>,
    pub model: JunctionModel,
}

impl JunctionSpec {
    pub fn new(
        incoming: Vec<(String, f64)>,
        outgoing: Vec<(String, f64)>,
        turning: Vec<Vec<f64>>,
        model: JunctionModel,
    ) -> Result<Self> {
        let (incoming, in_capacity): (Vec<_>, Vec<_>) = incoming.into_iter().unzip();
        let (outgoing, out_capacity): (Vec<_>, Vec<_>) = outgoing.into_iter().unzip();
        let spec = Self { incoming, outgoing, in_capacity, out_capacity, turning, model };
        spec.validate()?;
        Ok(spec)
    }

    /// Merge of several links into one.
    pub fn merge(in_capacity: &[f64], out_capacity: f64, model: JunctionModel) -> Result<Self> {
        let incoming = in_capacity.iter().enumerate().map(|(i, &c)| (format!("in{i}"), c)).collect();
        let turning = vec![vec![1.0]; in_capacity.len()];
        Self::new(incoming, vec![("out".into(), out_capacity)], turning, model)
    }

    /// One incoming link splitting with proportions `split`.
    pub fn diverge(in_capacity: f64, out_capacity: &[f64], split: &[f64]) -> Result<Self> {
        let outgoing = out_capacity.iter().enumerate().map(|(i, &c)| (format!("out{i}"), c)).collect();
        Self::new(vec![("in".into(), in_capacity)], outgoing, vec![split.to_vec()], JunctionModel::InvariantFair)
    }

    /// Check shapes and turning proportions.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(LtmError::Config(m));
        let (n, m) = (self.incoming.len(), self.outgoing.len());
        if n == 0 || m == 0 {
            return cfg("junction needs at least one incoming and one outgoing link".into());
        }
        if n > MAX_IN_DEGREE {
            return cfg(format!("junction in-degree {n} exceeds the supported maximum {MAX_IN_DEGREE}"));
        }
        if self.in_capacity.len() != n || self.out_capacity.len() != m {
            return cfg("capacity vectors do not match the port lists".into());
        }
        if self.in_capacity.iter().chain(&self.out_capacity).any(|&c| !(c > 0.0 && c.is_finite())) {
            return cfg("junction capacities must be positive".into());
        }
        if self.turning.len() != n || self.turning.iter().any(|row| row.len() != m) {
            return cfg(format!("turning matrix must be {n} x {m}"));
        }
        for (a, row) in self.turning.iter().enumerate() {
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return cfg(format!("turning proportions of `{}` must lie in [0, 1] and sum to 1", self.incoming[a]));
            }
        }
        if self.model == JunctionModel::NonInvariantFairMerge && m != 1 {
            return cfg("noninvariant_fair_merge needs exactly one outgoing link".into());
        }
        Ok(())
    }

    /// Same ports with a different turning matrix.
    pub fn with_turning(&self, turning: Vec<Vec<f64>>) -> Result<Self> {
        let spec = Self { turning, ..self.clone() };
        spec.validate()?;
        Ok(spec)
    }

    fn check_inputs(&self, demands: &[f64], supplies: &[f64]) -> Result<()> {
        if demands.len() != self.incoming.len() || supplies.len() != self.outgoing.len() {
            return domain("demand/supply vectors do not match the junction ports");
        }
        for (a, (&d, &c)) in demands.iter().zip(&self.in_capacity).enumerate() {
            if !(d >= 0.0) || d > c + BOUND_TOL {
                return domain(format!("demand {d} of `{}` outside [0, {c}]", self.incoming[a]));
            }
        }
        if let Some(s) = supplies.iter().find(|&&s| !(s >= 0.0)) {
            return domain(format!("supply {s} is negative"));
        }
        Ok(())
    }
}

/// Fluxes through a junction.
#[derive(Debug, Clone, PartialEq)]
pub struct JunctionFlows {
    /// Critical demand level; for the proportional merge, the served fraction of demand.
    pub theta: f64,
    /// Out-flux of every incoming link.
    pub g: Vec<f64>,
    /// In-flux of every outgoing link.
    pub f: Vec<f64>,
    /// `commodity_g[a][w] = g_a * share_{a,w}`; empty when no shares were given.
    pub commodity_g: Vec<Vec<f64>>,
}

/// `theta` of the fair-merge min-max problem.
pub fn critical_demand_level(spec: &JunctionSpec, demands: &[f64], supplies: &[f64]) -> Result<f64> {
    spec.check_inputs(demands, supplies)?;
    let n = spec.incoming.len();
    let mut theta = 1.0f64;
    for (b, &s_b) in supplies.iter().enumerate() {
        let xi = |a: usize| spec.turning[a][b];
        let load: f64 = (0..n).map(|a| demands[a] * xi(a)).sum();
        if s_b >= load {
            // every subset gives a ratio of at least one
            continue;
        }
        let mut best = f64::NEG_INFINITY;
        for mask in 1u32..(1 << n) {
            let inside = |a: usize| mask & (1 << a) != 0;
            let denom: f64 = (0..n).filter(|&a| inside(a)).map(|a| spec.in_capacity[a] * xi(a)).sum();
            if denom <= DENOM_EPS {
                continue;
            }
            let rest: f64 = (0..n).filter(|&a| !inside(a)).map(|a| demands[a] * xi(a)).sum();
            best = best.max((s_b - rest) / denom);
        }
        if best == f64::NEG_INFINITY {
            return Err(LtmError::DegenerateTurning { port: b });
        }
        theta = theta.min(best);
    }
    Ok(theta.clamp(0.0, 1.0))
}

fn with_commodities(theta: f64, g: Vec<f64>, spec: &JunctionSpec, shares: Option<&[Vec<f64>]>) -> Result<JunctionFlows> {
    let f = (0..spec.outgoing.len()).map(|b| g.iter().enumerate().map(|(a, ga)| ga * spec.turning[a][b]).sum()).collect();
    let commodity_g = match shares {
        None => Vec::new(),
        Some(sh) => {
            if sh.len() != g.len() {
                return domain("one commodity share vector is needed per incoming link");
            }
            g.iter().zip(sh).map(|(ga, row)| row.iter().map(|p| ga * p).collect()).collect()
        }
    };
    Ok(JunctionFlows { theta, g, f, commodity_g })
}

/// Fair merge with FIFO diverge: `g_a = min(d_a, theta C_a)`, `f_b = sum_a g_a xi_ab`.
pub fn invariant_fluxes(
    spec: &JunctionSpec,
    demands: &[f64],
    supplies: &[f64],
    shares: Option<&[Vec<f64>]>,
) -> Result<JunctionFlows> {
    let theta = critical_demand_level(spec, demands, supplies)?;
    let g = demands.iter().zip(&spec.in_capacity).map(|(&d, &c)| d.min(theta * c)).collect();
    with_commodities(theta, g, spec, shares)
}

/// Proportional merge `g_a = d_a / sum(d) * min(sum(d), s)`.
pub fn noninvariant_merge_fluxes(
    spec: &JunctionSpec,
    demands: &[f64],
    supply: f64,
    shares: Option<&[Vec<f64>]>,
) -> Result<JunctionFlows> {
    if spec.outgoing.len() != 1 {
        return domain("the proportional merge needs a single outgoing link");
    }
    spec.check_inputs(demands, &[supply])?;
    let total: f64 = demands.iter().sum();
    if total <= 0.0 {
        return with_commodities(1.0, vec![0.0; demands.len()], spec, shares);
    }
    let ratio = total.min(supply) / total;
    let g = demands.iter().map(|d| d * ratio).collect();
    with_commodities(ratio, g, spec, shares)
}

/// Evaluate the junction's configured model.
pub fn evaluate(
    spec: &JunctionSpec,
    demands: &[f64],
    supplies: &[f64],
    shares: Option<&[Vec<f64>]>,
) -> Result<JunctionFlows> {
    match spec.model {
        JunctionModel::InvariantFair => invariant_fluxes(spec, demands, supplies, shares),
        JunctionModel::NonInvariantFairMerge => {
            if supplies.len() != 1 {
                return domain("the proportional merge needs a single outgoing link");
            }
            noninvariant_merge_fluxes(spec, demands, supplies[0], shares)
        }
    }
}

/// Whether relaxing every non-binding demand and supply to capacity leaves the fluxes unchanged.
pub fn check_invariance(spec: &JunctionSpec, demands: &[f64], supplies: &[f64]) -> Result<bool> {
    const TOL: f64 = 1e-12;
    let flows = evaluate(spec, demands, supplies, None)?;
    let relaxed_d: Vec<f64> = (0..demands.len())
        .map(|a| if flows.g[a] < demands[a] - TOL { spec.in_capacity[a] } else { flows.g[a] })
        .collect();
    let relaxed_s: Vec<f64> = (0..supplies.len())
        .map(|b| if flows.f[b] < supplies[b] - TOL { spec.out_capacity[b] } else { flows.f[b] })
        .collect();
    let again = evaluate(spec, &relaxed_d, &relaxed_s, None)?;
    let same = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| (p - q).abs() <= TOL);
    Ok(same(&flows.g, &again.g) && same(&flows.f, &again.f))
}
