//! One test per acceptance criterion; each prints a single PASS or FAIL line.

use std::time::Instant;

use ltm_cli::simulate;
use ltm_core::godunov::{compare_with_oracle, godunov_run};
use ltm_core::junction::{check_invariance, evaluate, JunctionModel, JunctionSpec};
use ltm_core::kernel::{candidate_value, check_feasible};
use ltm_core::scenarios::{diverge_merge, DM_PERTURBATION, PRESET_NAMES};
use ltm_core::sim::{run, Formulation, Trajectory};
use ltm_core::statics::{
    classify_stability, is_soc_suc, measure_decay_ratio, solve_statics_dm, solve_statics_merge, StateKind, Stability,
};
use ltm_core::{CumulativeCurve, DensityProfile, TriangularFD};
use ltm_validation::{scenario, Verdict};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn read_column(path: &std::path::Path, link: &str, column: &str) -> Vec<(f64, f64)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let h = r.headers().unwrap().clone();
    let pos = |n: &str| h.iter().position(|x| x == n).unwrap();
    let (ct, cl, cv) = (pos("t"), pos("link_id"), pos(column));
    r.records()
        .map(|r| r.unwrap())
        .filter(|r| &r[cl] == link)
        .map(|r| (r[ct].parse().unwrap(), r[cv].parse().unwrap()))
        .collect()
}

#[test]
fn criterion_1_merge_statics() {
    let mut fails = Verdict::default();
    let cfg = scenario("merge_invariant");
    fails.check(cfg.sim.horizon == 50.0 && cfg.sim.dt == 0.01, || "scenario must use horizon 50, dt 0.01".into());
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    simulate(&cfg, dir.path()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    fails.check(elapsed < 1.0, || format!("simulate took {elapsed:.3} s"));
    let links = dir.path().join("links.csv");
    for (id, target) in [("1", 0.75), ("2", 0.25)] {
        let worst = read_column(&links, id, "g")
            .into_iter()
            .filter(|p| p.0 >= 40.0 - 1e-9)
            .map(|p| (p.1 - target).abs())
            .fold(0.0f64, f64::max);
        fails.check(worst <= 1e-6, || format!("|g{id} - {target}| reaches {worst:e}"));
    }
    let sols = solve_statics_merge(1.0, 1.0, 1.0, 1.0, 0.25, 1.0, JunctionModel::InvariantFair).unwrap();
    let exact = sols.len() == 1
        && sols[0].kind("1") == Some(StateKind::Soc)
        && sols[0].kind("2") == Some(StateKind::Suc)
        && (sols[0].q("1").unwrap() - 0.75).abs() <= 1e-12
        && (sols[0].q("2").unwrap() - 0.25).abs() <= 1e-12;
    fails.check(exact, || format!("statics returned {sols:?}"));
    fails.report(1, "merge statics: simulated and static fluxes 3/4, 1/4");
}

#[test]
fn criterion_2_noninvariant_failure() {
    let mut fails = Verdict::default();
    let sols = solve_statics_merge(1.0, 1.0, 1.0, 1.0, 0.25, 1.0, JunctionModel::NonInvariantFairMerge).unwrap();
    fails.check(sols.is_empty(), || format!("expected no solution, got {}", sols.len()));
    let (d, s) = ([1.0, 0.25], [1.0]);
    let prop = JunctionSpec::merge(&[1.0, 1.0], 1.0, JunctionModel::NonInvariantFairMerge).unwrap();
    let fair = JunctionSpec::merge(&[1.0, 1.0], 1.0, JunctionModel::InvariantFair).unwrap();
    fails.check(!check_invariance(&prop, &d, &s).unwrap(), || "proportional merge reported invariant".into());
    fails.check(check_invariance(&fair, &d, &s).unwrap(), || "fair merge reported non-invariant".into());
    fails.report(2, "non-invariant merge has no stationary state and fails the invariance check");
}

#[test]
fn criterion_3_soc_suc_statics() {
    let mut fails = Verdict::default();
    let mut missing = Vec::new();
    for i in 1..=20 {
        let xi = 0.5 * i as f64 / 21.0;
        let sols = solve_statics_dm(3.0, 1.0, 2.0, 2.0, xi).unwrap();
        let hit = sols.iter().filter(|s| is_soc_suc(s)).any(|s| {
            (s.q("1").unwrap() - 2.0 * xi).abs() <= 1e-12 && (s.q("2").unwrap() - 2.0 * (1.0 - xi)).abs() <= 1e-12
        });
        if !hit {
            missing.push(format!("{xi:.4}"));
        }
    }
    fails.check(missing.is_empty(), || {
        format!("no SOC-SUC with q = (2 xi, 2 (1 - xi)) for {} of 20 values: xi = {}", missing.len(), missing.join(", "))
    });
    for xi in [0.5, 0.6, 0.75, 0.9] {
        let sols = solve_statics_dm(3.0, 1.0, 2.0, 2.0, xi).unwrap();
        fails.check(!sols.iter().any(is_soc_suc), || format!("unexpected SOC-SUC at xi = {xi}"));
    }
    fails.report(3, "SOC-SUC statics on (3,1,2,2) for xi in (0, 1/2)");
}

#[test]
fn criterion_4_stability() {
    let mut fails = Verdict::default();
    let start = Instant::now();
    for (c, xi, tol) in [([3.0, 2.0, 1.0, 2.0], 0.6, 0.05), ([3.0, 2.0, 1.0, 2.0], 0.7, 0.05), ([3.0, 1.0, 2.0, 2.0], 0.4, 0.1)] {
        let cfg = diverge_merge(c, xi, DM_PERTURBATION, 30.0).unwrap();
        let expected = (1.0 - xi) / xi;
        let measured = run(cfg.build_network().unwrap(), cfg.sim_config().unwrap())
            .map_err(|e| e.to_string())
            .and_then(|tr| measure_decay_ratio(&tr.inflow("1").unwrap(), 3.0, xi * c[3]).map_err(|e| e.to_string()))
            .and_then(|est| est.value().ok_or_else(|| "zero signal".to_string()));
        match measured {
            Ok(r) => fails.check((r.abs() - expected).abs() <= tol, || {
                format!("xi = {xi}: ratio {:.4}, expected {expected:.4} +- {tol}", r.abs())
            }),
            Err(e) => fails.fail(format!("xi = {xi}: no ratio ({e})")),
        }
    }
    for (xi, stable) in [(0.4, false), (0.5, false), (0.6, true)] {
        let class = classify_stability(xi).unwrap();
        fails.check((class == Stability::Stable) == stable, || format!("xi = {xi} classified {class}"));
    }
    let elapsed = start.elapsed().as_secs_f64();
    fails.check(elapsed < 10.0, || format!("took {elapsed:.2} s"));
    fails.report(4, "per-period deviation ratio (1 - xi)/xi and stability classification");
}

#[test]
fn criterion_5_oracle_equivalence() {
    let mut fails = Verdict::default();
    let start = Instant::now();
    for name in &PRESET_NAMES[..6] {
        let cfg = scenario(name);
        let net = cfg.build_network().unwrap();
        let horizon = cfg.sim.horizon;
        let snaps = [0.5, 1.0, 2.0, 3.0, horizon];
        let oracle = godunov_run(&net, 1000, None, horizon, &snaps).unwrap();
        let traj = run(net, cfg.sim_config().unwrap()).unwrap();
        let c = compare_with_oracle(&traj, &oracle, 0.2).unwrap();
        fails.check(c.steady_samples > 0, || format!("{name}: no steady segments"));
        fails.check(c.max_flux_error <= 1e-3, || format!("{name}: flux error {:e} C", c.max_flux_error));
        fails.check(c.max_density_l1 <= 0.01, || format!("{name}: density L1 {:e} KL", c.max_density_l1));
    }
    let elapsed = start.elapsed().as_secs_f64();
    fails.check(elapsed < 30.0, || format!("took {elapsed:.2} s"));
    fails.report(5, "boundary fluxes and density fields match the cell oracle on six Riemann problems");
}

fn random_profile(rng: &mut StdRng, fd: &TriangularFD, lo: f64, hi: f64) -> DensityProfile {
    let n = rng.gen_range(1..6);
    let mut cuts: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(0.05..0.95)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.insert(0, 0.0);
    cuts.push(1.0);
    let segs: Vec<(f64, f64, f64)> =
        cuts.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[0], w[1], rng.gen_range(lo..=hi))).collect();
    DensityProfile::from_segments(1.0, &segs, fd, 0.0).unwrap()
}

fn lemma_21(rng: &mut StdRng, fd: &TriangularFD, congested: bool) -> usize {
    let mut bad = 0;
    for _ in 0..100 {
        let p = if congested { random_profile(rng, fd, fd.k_crit(), fd.k_jam()) } else { random_profile(rng, fd, 0.0, fd.k_crit()) };
        let x = rng.gen_range(0.05..0.95);
        let t = rng.gen_range(0.02..0.98) * (x / fd.v_free()).min((1.0 - x) / fd.w_back());
        let (lo, hi) = (x - fd.v_free() * t, x + fd.w_back() * t);
        let b = |y: f64| candidate_value(p.cumulative(y), y, 0.0, x, t, fd).unwrap();
        let best = p.edges_within(lo, hi).map(b).chain([b(lo), b(hi)]).fold(f64::INFINITY, f64::min);
        let end = if congested { b(hi) } else { b(lo) };
        if end > best + 1e-9 {
            bad += 1;
        }
    }
    bad
}

fn lemma_23(rng: &mut StdRng, fd: &TriangularFD) -> usize {
    let mut bad = 0;
    for _ in 0..100 {
        let mut pts = vec![(0.0, 0.0)];
        for _ in 0..rng.gen_range(1..8) {
            let (t0, n0) = *pts.last().unwrap();
            let dt = rng.gen_range(0.1..1.0);
            pts.push((t0 + dt, n0 + rng.gen_range(0.0..=1.0) * fd.capacity() * dt));
        }
        let f = CumulativeCurve::from_samples(&pts).unwrap();
        let (x, t) = (rng.gen_range(0.05..0.95), rng.gen_range(1.0..4.0));
        let s_max = (t - x / fd.v_free()).min(f.end_time());
        let vals: Vec<f64> = (0..=50)
            .map(|i| {
                let s = s_max * i as f64 / 50.0;
                candidate_value(f.eval(s).unwrap(), 0.0, s, x, t, fd).unwrap()
            })
            .collect();
        if vals.windows(2).any(|w| w[1] > w[0] + 1e-12) {
            bad += 1;
        }
    }
    bad
}

fn junction_suite(rng: &mut StdRng) -> (usize, usize) {
    let (mut bad_bounds, mut bad_invariance) = (0, 0);
    for _ in 0..1000 {
        let (m, n) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let cin: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..2.0)).collect();
        let cout: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..2.0)).collect();
        let turning: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
                let s: f64 = w.iter().sum();
                w.iter().map(|x| x / s).collect()
            })
            .collect();
        let spec = JunctionSpec::new(
            cin.iter().enumerate().map(|(i, &c)| (format!("a{i}"), c)).collect(),
            cout.iter().enumerate().map(|(i, &c)| (format!("b{i}"), c)).collect(),
            turning.clone(),
            JunctionModel::InvariantFair,
        )
        .unwrap();
        let d: Vec<f64> = cin.iter().map(|&c| if rng.gen_bool(0.3) { c } else { rng.gen_range(0.0..=c) }).collect();
        let s: Vec<f64> = cout.iter().map(|&c| if rng.gen_bool(0.3) { c } else { rng.gen_range(0.0..=c) }).collect();
        let fl = evaluate(&spec, &d, &s, None).unwrap();
        let within = fl.g.iter().zip(&d).all(|(g, d)| *g >= -1e-12 && *g <= d + 1e-12)
            && fl.f.iter().zip(&s).all(|(f, s)| *f <= s + 1e-12);
        let conserved = (0..n).all(|b| (fl.f[b] - (0..m).map(|a| turning[a][b] * fl.g[a]).sum::<f64>()).abs() <= 1e-12);
        if !(within && conserved) {
            bad_bounds += 1;
        }
        if !check_invariance(&spec, &d, &s).unwrap() {
            bad_invariance += 1;
        }
    }
    (bad_bounds, bad_invariance)
}

fn fluxes(t: &Trajectory) -> Vec<f64> {
    t.records.iter().flat_map(|r| r.links.iter().flat_map(|l| [l.inflow, l.outflow])).collect()
}

#[test]
fn criterion_6_property_suites() {
    let mut fails = Verdict::default();
    let fd = TriangularFD::new(1.0, 0.5, 3.0).unwrap();
    let mut rng = StdRng::seed_from_u64(20);
    let bad = lemma_21(&mut rng, &fd, false);
    fails.check(bad == 0, || format!("upstream-endpoint minimum fails on {bad} of 100 uncongested profiles"));
    let bad = lemma_21(&mut rng, &fd, true);
    fails.check(bad == 0, || format!("downstream-endpoint minimum fails on {bad} of 100 congested profiles"));
    let bad = lemma_23(&mut rng, &fd);
    fails.check(bad == 0, || format!("boundary candidates increase on {bad} of 100 curves"));
    let (bounds, inv) = junction_suite(&mut rng);
    fails.check(bounds == 0, || format!("{bounds} of 1000 junctions break bounds or conservation"));
    fails.check(inv == 0, || format!("{inv} of 1000 junctions fail the invariance check"));

    for name in PRESET_NAMES {
        let cfg = scenario(name);
        let net = cfg.build_network().unwrap();
        let sim = cfg.sim_config().unwrap();
        let a = match run(net.clone(), sim.clone().with_formulation(Formulation::Cumulative)) {
            Ok(t) => t,
            Err(e) => {
                fails.fail(format!("{name}: {e}"));
                continue;
            }
        };
        let b = run(net, sim.with_formulation(Formulation::QueueVacancy)).unwrap();
        let gap = fluxes(&a).iter().zip(fluxes(&b)).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max);
        fails.check(gap <= 1e-9, || format!("{name}: formulations differ by {gap:e}"));
        let negative = a.records.iter().flat_map(|r| &r.links).any(|l| l.lambda < -1e-9 || l.gamma < -1e-9);
        fails.check(!negative, || format!("{name}: negative queue or vacancy"));
        for l in &a.network.links {
            let v = check_feasible(&l.domain_data().unwrap(), l.time());
            fails.check(v.is_empty(), || format!("{name}: link {} infeasible: {}", l.id(), v[0]));
        }
        fails.check(a.max_conservation_drift <= 1e-9, || format!("{name}: drift {:e}", a.max_conservation_drift));
    }
    fails.report(6, "kernel, junction and scenario property suites");
}

#[test]
fn criterion_7_exactness() {
    let mut fails = Verdict::default();
    let cfg = scenario("single_link");
    let (dt, link) = (cfg.sim.dt, &cfg.links[0]);
    let divides = |x: f64| ((x / dt) - (x / dt).round()).abs() < 1e-9;
    fails.check(divides(link.length / link.v) && divides(link.length / link.w), || "dt must divide L/V and L/W".into());
    fails.check(link.init.is_empty(), || "scenario must start empty".into());
    let q = match cfg.origins[0].demand {
        ltm_core::config::Rate::Constant(q) => q,
        _ => panic!("constant demand expected"),
    };
    let traj = run(cfg.build_network().unwrap(), cfg.sim_config().unwrap()).unwrap();
    let l = &traj.network.links[0];
    let tf = link.length / link.v;
    let mut worst = 0.0f64;
    for n in 0..=traj.steps {
        let t = n as f64 * dt;
        let f = q * t;
        let g = q * (t - tf).max(0.0);
        worst = worst.max((l.upstream().eval(t).unwrap() - f).abs());
        worst = worst.max((l.downstream().eval(t).unwrap() - g).abs());
    }
    fails.check(worst <= 1e-12, || format!("largest count error {worst:e}"));
    fails.report(7, "boundary counts equal the analytic counts on the single-link scenario");
}
