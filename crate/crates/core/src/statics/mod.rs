//! Stationary states, the traffic statics problem, and stability of the diverge-merge loop.

mod pwl;
pub mod stability;

use std::fmt;

use crate::error::{domain, Result};
use crate::fd::TriangularFD;
use crate::junction::JunctionModel;
use crate::profile::DensityProfile;
use pwl::{equation, leaf, pmax, pmin, Affine, Clause, PExpr, Piece, System};

pub use stability::{classify_stability, measure_decay_ratio, poincare_iterate, DecayEstimate, Stability};

/// `q = C` within this tolerance counts as a critical state.
pub const CRITICAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateKind {
    /// Strictly under-critical.
    Suc,
    /// Critical, `q = C`.
    C,
    /// Strictly over-critical.
    Soc,
    /// Zero-speed shock between the two branches.
    Zs,
}

impl StateKind {
    pub const ALL: [StateKind; 4] = [StateKind::Suc, StateKind::C, StateKind::Soc, StateKind::Zs];
}

impl fmt::Display for StateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StateKind::Suc => "SUC",
            StateKind::C => "C",
            StateKind::Soc => "SOC",
            StateKind::Zs => "ZS",
        })
    }
}

/// Stationary link state: flux `q` with the downstream fraction `beta` congested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryState {
    pub q: f64,
    pub beta: f64,
    pub kind: StateKind,
}

impl StationaryState {
    pub fn new(q: f64, beta: f64, fd: &TriangularFD) -> Result<Self> {
        let c = fd.capacity();
        if !(q >= 0.0 && q <= c + CRITICAL_TOL) {
            return domain(format!("stationary flux {q} outside [0, {c}]"));
        }
        if !(0.0..=1.0).contains(&beta) {
            return domain(format!("congested fraction {beta} outside [0, 1]"));
        }
        let kind = if (c - q).abs() <= CRITICAL_TOL {
            StateKind::C
        } else if beta == 0.0 {
            StateKind::Suc
        } else if beta == 1.0 {
            StateKind::Soc
        } else {
            StateKind::Zs
        };
        Ok(Self { q: q.min(c), beta, kind })
    }

    /// Under- and over-critical densities `(q/v, K - q/w)`.
    pub fn densities(&self, fd: &TriangularFD) -> (f64, f64) {
        fd.branch_densities(self.q)
    }

    /// Initial profile realizing the state on a link of length `length`.
    pub fn profile(&self, fd: &TriangularFD, length: f64) -> Result<DensityProfile> {
        let (k1, k2) = self.densities(fd);
        let split = (1.0 - self.beta) * length;
        let mut segs = Vec::new();
        if split > 0.0 {
            segs.push((0.0, split, k1));
        }
        if split < length {
            segs.push((split, length, k2));
        }
        DensityProfile::from_segments(length, &segs, fd, 0.0)
    }
}

fn storage_term(ss: &StationaryState, fd: &TriangularFD, length: f64) -> f64 {
    (1.0 - ss.q / fd.capacity()) * fd.k_jam() * length
}

/// Link demand and supply in a stationary state.
pub fn stationary_demand_supply(ss: &StationaryState, fd: &TriangularFD, length: f64) -> (f64, f64) {
    let (lambda, gamma) = stationary_queue_vacancy(ss, fd, length);
    let c = fd.capacity();
    let d = if lambda > 0.0 { c } else { ss.q };
    let s = if gamma > 0.0 { c } else { ss.q };
    (d, s)
}

/// Time-independent queue and vacancy sizes of a stationary state.
pub fn stationary_queue_vacancy(ss: &StationaryState, fd: &TriangularFD, length: f64) -> (f64, f64) {
    let room = storage_term(ss, fd, length).max(0.0);
    (ss.beta * room, (1.0 - ss.beta) * room)
}

/// A link of a statics problem: capacity and jam storage `K L`.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticsLink {
    pub id: String,
    pub capacity: f64,
    pub storage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StaticsNode {
    Origin { link: usize, demand: f64 },
    Destination { link: usize, supply: f64 },
    Junction { incoming: Vec<usize>, outgoing: Vec<usize>, turning: Vec<Vec<f64>>, model: JunctionModel },
}

/// Network with constant boundary demands and supplies.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticsProblem {
    pub links: Vec<StaticsLink>,
    pub nodes: Vec<StaticsNode>,
}

/// One link of a statics solution.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSolution {
    pub link: String,
    pub kind: StateKind,
    pub q: f64,
    /// Admissible congested fractions; open at both ends for ZS.
    pub beta_lo: f64,
    pub beta_hi: f64,
    /// Queue and vacancy at the midpoint of the admissible `beta` range.
    pub lambda: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticsSolution {
    pub links: Vec<LinkSolution>,
    /// False when the fluxes are not pinned down (a point of a continuum is reported).
    pub unique: bool,
}

impl StaticsSolution {
    pub fn link(&self, id: &str) -> Option<&LinkSolution> {
        self.links.iter().find(|l| l.link == id)
    }

    pub fn q(&self, id: &str) -> Option<f64> {
        self.link(id).map(|l| l.q)
    }

    pub fn kind(&self, id: &str) -> Option<StateKind> {
        self.link(id).map(|l| l.kind)
    }
}

impl StaticsProblem {
    fn validate(&self) -> Result<()> {
        let n = self.links.len();
        if self.links.iter().any(|l| !(l.capacity > 0.0) || !(l.storage > 0.0)) {
            return domain("statics links need positive capacity and storage");
        }
        let ok = |i: &usize| *i < n;
        for node in &self.nodes {
            match node {
                StaticsNode::Origin { link, demand } | StaticsNode::Destination { link, supply: demand } => {
                    if !ok(link) || !(*demand >= 0.0) {
                        return domain("statics boundary node refers to a missing link or a negative rate");
                    }
                }
                StaticsNode::Junction { incoming, outgoing, turning, model } => {
                    if !incoming.iter().chain(outgoing).all(ok) || turning.len() != incoming.len() {
                        return domain("statics junction is malformed");
                    }
                    if turning.iter().any(|r| r.len() != outgoing.len() || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9) {
                        return domain("statics turning rows must sum to 1");
                    }
                    if *model == JunctionModel::NonInvariantFairMerge && outgoing.len() != 1 {
                        return domain("the proportional merge needs a single outgoing link");
                    }
                }
            }
        }
        Ok(())
    }
}

/// All stationary states of `problem`, by enumeration of link kinds.
pub fn solve_statics(problem: &StaticsProblem) -> Result<Vec<StaticsSolution>> {
    problem.validate()?;
    let n = problem.links.len();
    let mut found: Vec<StaticsSolution> = Vec::new();
    let total = 4usize.pow(n as u32);
    for code in 0..total {
        let kinds: Vec<StateKind> = (0..n).map(|a| StateKind::ALL[(code / 4usize.pow(a as u32)) % 4]).collect();
        for sol in solve_for_kinds(problem, &kinds) {
            let dup = found.iter().any(|f| {
                f.links.iter().zip(&sol.links).all(|(x, y)| x.kind == y.kind && (x.q - y.q).abs() <= 1e-9)
            });
            if !dup {
                found.push(sol);
            }
        }
    }
    Ok(found)
}

struct Layout<'a> {
    problem: &'a StaticsProblem,
    kinds: &'a [StateKind],
    q_var: Vec<Option<usize>>,
    n: usize,
}

impl Layout<'_> {
    fn q(&self, a: usize) -> Affine {
        match self.q_var[a] {
            Some(i) => Affine::var(self.n, i),
            None => Affine::constant(self.n, self.problem.links[a].capacity),
        }
    }

    fn cap(&self, a: usize) -> Affine {
        Affine::constant(self.n, self.problem.links[a].capacity)
    }

    fn demand(&self, a: usize) -> Affine {
        match self.kinds[a] {
            StateKind::Suc => self.q(a),
            _ => self.cap(a),
        }
    }

    fn supply(&self, a: usize) -> Affine {
        match self.kinds[a] {
            StateKind::Soc => self.q(a),
            _ => self.cap(a),
        }
    }

    fn konst(&self, k: f64) -> Affine {
        Affine::constant(self.n, k)
    }
}

fn fair_theta(lay: &Layout, incoming: &[usize], outgoing: &[usize], turning: &[Vec<f64>]) -> PExpr {
    let mut parts = vec![leaf(lay.konst(1.0))];
    let m = incoming.len();
    for (k, &b) in outgoing.iter().enumerate() {
        let load = incoming
            .iter()
            .enumerate()
            .fold(lay.konst(0.0), |acc, (i, &a)| acc.add(&lay.demand(a).scale(turning[i][k])));
        let s_b = lay.supply(b);
        let mut ratios = Vec::new();
        for mask in 1u32..(1 << m) {
            let inside = |i: usize| mask & (1 << i) != 0;
            let denom: f64 = (0..m).filter(|&i| inside(i)).map(|i| lay.problem.links[incoming[i]].capacity * turning[i][k]).sum();
            if denom <= 1e-15 {
                continue;
            }
            let rest = (0..m)
                .filter(|&i| !inside(i))
                .fold(lay.konst(0.0), |acc, i| acc.add(&lay.demand(incoming[i]).scale(turning[i][k])));
            ratios.push(leaf(s_b.sub(&rest).scale(1.0 / denom)));
        }
        if ratios.is_empty() {
            continue;
        }
        // a non-binding outgoing link imposes no limit
        let mut phi: PExpr = vec![(lay.konst(1.0), vec![load.sub(&s_b)])];
        for (v, mut cons) in pmax(&ratios) {
            cons.push(s_b.sub(&load));
            phi.push((v, cons));
        }
        parts.push(phi);
    }
    pmin(&parts)
}

fn solve_for_kinds(problem: &StaticsProblem, kinds: &[StateKind]) -> Vec<StaticsSolution> {
    let nl = problem.links.len();
    let mut q_var = vec![None; nl];
    let mut n = 0;
    for a in 0..nl {
        if kinds[a] != StateKind::C {
            q_var[a] = Some(n);
            n += 1;
        }
    }
    let theta_count = problem
        .nodes
        .iter()
        .filter(|nd| matches!(nd, StaticsNode::Junction { model: JunctionModel::InvariantFair, .. }))
        .count();
    let n_q = n;
    n += theta_count;
    let lay = Layout { problem, kinds, q_var, n };

    let mut clauses: Vec<Clause> = Vec::new();
    let mut next_theta = n_q;
    for node in &problem.nodes {
        match node {
            StaticsNode::Origin { link, demand } => {
                clauses.push(equation(&lay.q(*link), pmin(&[leaf(lay.konst(*demand)), leaf(lay.supply(*link))])));
            }
            StaticsNode::Destination { link, supply } => {
                clauses.push(equation(&lay.q(*link), pmin(&[leaf(lay.demand(*link)), leaf(lay.konst(*supply))])));
            }
            StaticsNode::Junction { incoming, outgoing, turning, model } => {
                match model {
                    JunctionModel::InvariantFair => {
                        let theta = Affine::var(n, next_theta);
                        next_theta += 1;
                        clauses.push(equation(&theta, fair_theta(&lay, incoming, outgoing, turning)));
                        for &a in incoming {
                            let cap_theta = theta.scale(problem.links[a].capacity);
                            clauses.push(equation(&lay.q(a), pmin(&[leaf(lay.demand(a)), leaf(cap_theta)])));
                        }
                    }
                    JunctionModel::NonInvariantFairMerge => clauses.push(proportional_merge(&lay, incoming, outgoing[0])),
                }
                for (k, &b) in outgoing.iter().enumerate() {
                    let into = incoming.iter().enumerate().fold(lay.konst(0.0), |acc, (i, &a)| acc.add(&lay.q(a).scale(turning[i][k])));
                    clauses.push(vec![Piece { eqs: vec![lay.q(b).sub(&into)], les: vec![] }]);
                }
            }
        }
    }
    let mut always = Vec::new();
    for a in 0..nl {
        if lay.q_var[a].is_some() {
            always.push(lay.q(a).scale(-1.0));
            always.push(lay.q(a).sub(&lay.cap(a)));
        }
    }
    for t in n_q..n {
        always.push(Affine::var(n, t).scale(-1.0));
        always.push(Affine::var(n, t).sub(&lay.konst(1.0)));
    }
    let regions = System { n, clauses, always }.solve();

    let strict_ok = |qs: &[f64]| {
        (0..nl).all(|a| kinds[a] == StateKind::C || qs[a] < problem.links[a].capacity - CRITICAL_TOL)
    };
    let fluxes = |x: &[f64]| -> Vec<f64> { (0..nl).map(|a| lay.q(a).eval(x)).collect() };
    let mut out = Vec::new();
    for r in regions {
        let qs: Vec<Vec<f64>> = r.vertices.iter().map(|v| fluxes(v)).collect();
        let unique = qs.iter().all(|q| q.iter().zip(&qs[0]).all(|(x, y)| (x - y).abs() <= 1e-12));
        let mut candidates = if unique { vec![qs[0].clone()] } else { qs.clone() };
        if !unique {
            let m = qs.len() as f64;
            candidates.push((0..nl).map(|a| qs.iter().map(|q| q[a]).sum::<f64>() / m).collect());
        }
        for q in candidates.into_iter().filter(|q| strict_ok(q)) {
            out.push(StaticsSolution { links: describe(problem, kinds, &q), unique });
        }
    }
    out
}

fn proportional_merge(lay: &Layout, incoming: &[usize], b: usize) -> Clause {
    let s = lay.supply(b);
    let total = incoming.iter().fold(lay.konst(0.0), |acc, &a| acc.add(&lay.demand(a)));
    let mut pieces = vec![Piece {
        eqs: incoming.iter().map(|&a| lay.q(a).sub(&lay.demand(a))).collect(),
        les: vec![total.sub(&s)],
    }];
    // supply binds: demand-driven links carry zero, the rest share s in proportion to capacity
    let fixed: f64 = incoming
        .iter()
        .filter(|&&a| lay.kinds[a] != StateKind::Suc)
        .map(|&a| lay.problem.links[a].capacity)
        .sum();
    if fixed > 0.0 {
        let eqs = incoming
            .iter()
            .map(|&a| {
                if lay.kinds[a] == StateKind::Suc {
                    lay.q(a)
                } else {
                    lay.q(a).sub(&s.scale(lay.problem.links[a].capacity / fixed))
                }
            })
            .collect();
        pieces.push(Piece { eqs, les: vec![s.sub(&lay.konst(fixed))] });
    }
    pieces
}

fn describe(problem: &StaticsProblem, kinds: &[StateKind], qs: &[f64]) -> Vec<LinkSolution> {
    problem
        .links
        .iter()
        .zip(kinds)
        .zip(qs)
        .map(|((l, &kind), &q)| {
            let (beta_lo, beta_hi) = match kind {
                StateKind::Suc => (0.0, 0.0),
                StateKind::Soc => (1.0, 1.0),
                StateKind::Zs | StateKind::C => (0.0, 1.0),
            };
            let beta = 0.5 * (beta_lo + beta_hi);
            let room = ((1.0 - q / l.capacity) * l.storage).max(0.0);
            let q = if kind == StateKind::C { l.capacity } else { q };
            LinkSolution {
                link: l.id.clone(),
                kind,
                q,
                beta_lo,
                beta_hi,
                lambda: beta * room,
                gamma: (1.0 - beta) * room,
            }
        })
        .collect()
}

fn dm_problem(c: [f64; 4], xi: f64) -> Result<StaticsProblem> {
    if c.iter().any(|&x| !(x > 0.0)) {
        return domain("capacities must be positive");
    }
    if !(xi > 0.0 && xi < 1.0) {
        return domain(format!("turning proportion {xi} outside (0, 1)"));
    }
    // jam storage of a unit-length link with v = 1, w = 1/2
    let links = (0..4).map(|i| StaticsLink { id: i.to_string(), capacity: c[i], storage: 3.0 * c[i] }).collect();
    Ok(StaticsProblem {
        links,
        nodes: vec![
            StaticsNode::Origin { link: 0, demand: c[0] },
            StaticsNode::Junction {
                incoming: vec![0],
                outgoing: vec![1, 2],
                turning: vec![vec![xi, 1.0 - xi]],
                model: JunctionModel::InvariantFair,
            },
            StaticsNode::Junction {
                incoming: vec![1, 2],
                outgoing: vec![3],
                turning: vec![vec![1.0], vec![1.0]],
                model: JunctionModel::InvariantFair,
            },
            StaticsNode::Destination { link: 3, supply: c[3] },
        ],
    })
}

/// Stationary states of the diverge-merge network with origin demand `C0` and destination supply `C3`.
///
/// Links are `"0"` (origin side), `"1"`, `"2"` (the two branches) and `"3"`.
pub fn solve_statics_dm(c0: f64, c1: f64, c2: f64, c3: f64, xi: f64) -> Result<Vec<StaticsSolution>> {
    solve_statics(&dm_problem([c0, c1, c2, c3], xi)?)
}

/// True for the branch pattern with link 1 over-critical and link 2 under-critical.
pub fn is_soc_suc(sol: &StaticsSolution) -> bool {
    sol.kind("1") == Some(StateKind::Soc) && sol.kind("2") == Some(StateKind::Suc)
}

/// Stationary states of a two-link merge `1, 2 -> 3` with origin demands and destination supply.
pub fn solve_statics_merge(
    c1: f64,
    c2: f64,
    c3: f64,
    d1: f64,
    d2: f64,
    s3: f64,
    model: JunctionModel,
) -> Result<Vec<StaticsSolution>> {
    let caps = [c1, c2, c3];
    if caps.iter().any(|&x| !(x > 0.0)) {
        return domain("capacities must be positive");
    }
    let links = (0..3).map(|i| StaticsLink { id: (i + 1).to_string(), capacity: caps[i], storage: 3.0 * caps[i] }).collect();
    solve_statics(&StaticsProblem {
        links,
        nodes: vec![
            StaticsNode::Origin { link: 0, demand: d1 },
            StaticsNode::Origin { link: 1, demand: d2 },
            StaticsNode::Junction { incoming: vec![0, 1], outgoing: vec![2], turning: vec![vec![1.0], vec![1.0]], model },
            StaticsNode::Destination { link: 2, supply: s3 },
        ],
    })
}
