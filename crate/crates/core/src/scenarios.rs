//! Named scenario presets, built as configuration documents.

use crate::config::{
    AnalysisSection, DestinationSection, JunctionSection, LinkSection, NetworkConfig, OriginSection, Rate, Segment,
    SimSection, StabilitySection,
};
use crate::error::{LtmError, Result};

pub const PRESET_NAMES: [&str; 12] = [
    "riemann_shock",
    "riemann_rarefaction",
    "riemann_bottleneck",
    "riemann_release",
    "riemann_empty_fill",
    "riemann_jam_drain",
    "merge_invariant",
    "merge_noninvariant",
    "dm_stable",
    "dm_unstable",
    "single_link",
    "grid4x4",
];

/// Relative size of the link-1 flux perturbation in the diverge-merge presets.
pub const DM_PERTURBATION: f64 = 0.01;

fn sim(dt: f64, horizon: f64) -> SimSection {
    SimSection { dt, horizon, formulation: "cumulative".into(), record_every: 1 }
}

fn link(id: &str, length: f64, v: f64, w: f64, kjam: f64, init: &[(f64, f64, f64)]) -> LinkSection {
    LinkSection {
        id: id.into(),
        length,
        v,
        w,
        kjam,
        init: init.iter().map(|&(x0, x1, k)| Segment { x0, x1, k }).collect(),
    }
}

/// Unit link with `v = 1`, `w = 1/2`, `K = 3` (capacity 1).
fn unit_link(id: &str, init: &[(f64, f64, f64)]) -> LinkSection {
    link(id, 1.0, 1.0, 0.5, 3.0, init)
}

fn origin(id: &str, to: &str, demand: f64) -> OriginSection {
    OriginSection { id: id.into(), to_link: to.into(), demand: Rate::Constant(demand), commodities: Default::default() }
}

fn destination(id: &str, from: &str, supply: f64) -> DestinationSection {
    DestinationSection { id: id.into(), from_link: from.into(), supply: Rate::Constant(supply) }
}

fn junction(id: &str, ins: &[&str], outs: &[&str], model: &str, turns: Option<Vec<Vec<f64>>>) -> JunctionSection {
    JunctionSection {
        id: id.into(),
        incoming: ins.iter().map(|s| s.to_string()).collect(),
        outgoing: outs.iter().map(|s| s.to_string()).collect(),
        model: model.into(),
        turns,
    }
}

fn single(init: &[(f64, f64, f64)], demand: f64, supply: f64, horizon: f64) -> NetworkConfig {
    NetworkConfig {
        sim: sim(0.01, horizon),
        links: vec![unit_link("a", init)],
        junctions: vec![],
        origins: vec![origin("o", "a", demand)],
        destinations: vec![destination("d", "a", supply)],
        commodities: vec![],
        analysis: None,
    }
}

/// Single-link Riemann problem `k_left | k_right` at mid-link on the unit link.
pub fn riemann(k_left: f64, k_right: f64, demand: f64, supply: f64, horizon: f64) -> NetworkConfig {
    single(&[(0.0, 0.5, k_left), (0.5, 1.0, k_right)], demand, supply, horizon)
}

/// Merge `1, 2 -> 3` of unit links with origin demands `d1`, `d2` and destination supply `s3`.
pub fn merge(d1: f64, d2: f64, s3: f64, model: &str, horizon: f64) -> NetworkConfig {
    NetworkConfig {
        sim: sim(0.01, horizon),
        links: vec![unit_link("1", &[]), unit_link("2", &[]), unit_link("3", &[])],
        junctions: vec![junction("m", &["1", "2"], &["3"], model, None)],
        origins: vec![origin("o1", "1", d1), origin("o2", "2", d2)],
        destinations: vec![destination("d", "3", s3)],
        commodities: vec![],
        analysis: None,
    }
}

/// Diverge-merge loop `0 -> {1, 2} -> 3` started in the SOC-SUC state.
///
/// Links have unit length, `v = 1`, `w = 1/2` and `K = 3 C`. The congested density of link 1
/// is lowered so its flux exceeds `xi C3` by `perturbation * xi C3`.
pub fn diverge_merge(c: [f64; 4], xi: f64, perturbation: f64, horizon: f64) -> Result<NetworkConfig> {
    if !(xi > 0.0 && xi < 1.0) || c.iter().any(|&x| !(x > 0.0)) {
        return Err(LtmError::Config(format!("invalid diverge-merge parameters {c:?}, xi = {xi}")));
    }
    let (v, w) = (1.0, 0.5);
    let k = |ci: f64| 3.0 * ci;
    let q1 = xi * c[3];
    let q2 = (1.0 - xi) * c[3];
    let eps = perturbation * q1;
    let links = vec![
        link("0", 1.0, v, w, k(c[0]), &[(0.0, 1.0, k(c[0]) - c[3] / w)]),
        link("1", 1.0, v, w, k(c[1]), &[(0.0, 1.0, k(c[1]) - (q1 + eps) / w)]),
        link("2", 1.0, v, w, k(c[2]), &[(0.0, 1.0, q2 / v)]),
        link("3", 1.0, v, w, k(c[3]), &[(0.0, 1.0, c[3] / v)]),
    ];
    Ok(NetworkConfig {
        sim: sim(0.01, horizon),
        links,
        junctions: vec![
            junction("diverge", &["0"], &["1", "2"], "invariant_fair", Some(vec![vec![xi, 1.0 - xi]])),
            junction("merge", &["1", "2"], &["3"], "invariant_fair", None),
        ],
        origins: vec![origin("o", "0", c[0])],
        destinations: vec![destination("d", "3", c[3])],
        commodities: vec![],
        analysis: Some(AnalysisSection {
            stability: Some(StabilitySection { xi, link: "1".into(), fixed_point: q1, period: 1.0 / w + 1.0 / v }),
        }),
    })
}

/// Four-by-four grid of two-way-in, two-way-out intersections fed from the north and west.
pub fn grid4x4() -> NetworkConfig {
    let n = 4;
    let mut links = Vec::new();
    let mut junctions = Vec::new();
    let mut origins = Vec::new();
    let mut destinations = Vec::new();
    let h = |i: usize, j: usize| format!("h{i}{j}");
    let v = |i: usize, j: usize| format!("v{i}{j}");
    for i in 0..n {
        for j in 0..=n {
            links.push(unit_link(&h(i, j), &[]));
            links.push(unit_link(&v(j, i), &[]));
        }
        origins.push(origin(&format!("west{i}"), &h(i, 0), 0.3));
        origins.push(origin(&format!("north{i}"), &v(0, i), 0.2));
        destinations.push(destination(&format!("east{i}"), &h(i, n), 1.0));
        destinations.push(destination(&format!("south{i}"), &v(n, i), 1.0));
    }
    // h{i}{j} enters node (i, j) from the west, v{i}{j} from the north
    for i in 0..n {
        for j in 0..n {
            let (hi, vi, ho, vo) = (h(i, j), v(i, j), h(i, j + 1), v(i + 1, j));
            junctions.push(junction(
                &format!("n{i}{j}"),
                &[&hi, &vi],
                &[&ho, &vo],
                "invariant_fair",
                Some(vec![vec![0.7, 0.3], vec![0.3, 0.7]]),
            ));
        }
    }
    NetworkConfig {
        sim: sim(0.05, 20.0),
        links,
        junctions,
        origins,
        destinations,
        commodities: vec![],
        analysis: None,
    }
}

/// Configuration of a named preset.
pub fn preset(name: &str) -> Result<NetworkConfig> {
    Ok(match name {
        "riemann_shock" => riemann(0.4, 2.5, 0.4, 0.25, 4.0),
        "riemann_rarefaction" => riemann(2.5, 0.3, 0.25, 1.0, 4.0),
        "riemann_bottleneck" => single(&[(0.0, 1.0, 0.8)], 0.8, 0.3, 4.0),
        "riemann_release" => single(&[(0.0, 1.0, 2.0)], 0.2, 1.0, 4.0),
        "riemann_empty_fill" => single(&[], 0.6, 1.0, 4.0),
        "riemann_jam_drain" => single(&[(0.0, 1.0, 3.0)], 0.0, 1.0, 4.0),
        "merge_invariant" => merge(1.0, 0.25, 1.0, "invariant_fair", 50.0),
        "merge_noninvariant" => merge(1.0, 0.25, 1.0, "noninvariant_fair_merge", 50.0),
        "dm_stable" => diverge_merge([3.0, 2.0, 1.0, 2.0], 0.7, DM_PERTURBATION, 30.0)?,
        "dm_unstable" => diverge_merge([3.0, 1.0, 2.0, 2.0], 0.4, DM_PERTURBATION, 30.0)?,
        "single_link" => single(&[], 0.5, 1.0, 5.0),
        "grid4x4" => grid4x4(),
        other => return Err(LtmError::Config(format!("unknown preset `{other}`"))),
    })
}
