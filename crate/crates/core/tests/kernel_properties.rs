use ltm_core::kernel::{boundary_trace, candidate_value, solve_interior, UDomainData};
use ltm_core::network::{Network, RateProfile};
use ltm_core::sim::{run, SimConfig};
use ltm_core::{CumulativeCurve, DensityProfile, TriangularFD};
use proptest::prelude::*;

fn fd() -> TriangularFD {
    TriangularFD::new(1.0, 0.5, 3.0).unwrap()
}

/// Contiguous segments on `[0, 1]` with densities drawn by `k`.
fn profile(k: impl Strategy<Value = f64> + Clone) -> impl Strategy<Value = DensityProfile> {
    prop::collection::vec((0.05f64..1.0, k), 1..6).prop_map(|parts| {
        let total: f64 = parts.iter().map(|p| p.0).sum();
        let mut x = 0.0;
        let segs: Vec<(f64, f64, f64)> = parts
            .iter()
            .enumerate()
            .map(|(i, &(w, k))| {
                let x1 = if i + 1 == parts.len() { 1.0 } else { x + w / total };
                let s = (x, x1, k);
                x = x1;
                s
            })
            .collect();
        DensityProfile::from_segments(1.0, &segs, &fd(), 0.0).unwrap()
    })
}

/// `B(y, 0; x, t)` at the cone endpoints and at every breakpoint inside the cone.
fn initial_candidates(p: &DensityProfile, x: f64, t: f64) -> (f64, f64, f64) {
    let fd = fd();
    let (lo, hi) = (x - fd.v_free() * t, x + fd.w_back() * t);
    let b = |y: f64| candidate_value(p.cumulative(y), y, 0.0, x, t, &fd).unwrap();
    let inner = p.edges_within(lo, hi).map(b).fold(f64::INFINITY, f64::min);
    (b(lo), b(hi), inner)
}

/// `(x, t)` whose initial cone stays inside the unit link.
fn cone_point() -> impl Strategy<Value = (f64, f64)> {
    (0.05f64..0.95, 0.0f64..1.0).prop_map(|(x, r)| {
        let t_max = (x / 1.0).min((1.0 - x) / 0.5);
        (x, (0.02 + 0.96 * r) * t_max)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn uncongested_profiles_minimize_at_upstream_endpoint(p in profile(0.0f64..1.0), (x, t) in cone_point()) {
        let (up, down, inner) = initial_candidates(&p, x, t);
        prop_assert!(up <= down + 1e-9 && up <= inner + 1e-9, "up {up} down {down} inner {inner}");
    }

    #[test]
    fn congested_profiles_minimize_at_downstream_endpoint(p in profile(1.0f64..3.0), (x, t) in cone_point()) {
        let (up, down, inner) = initial_candidates(&p, x, t);
        prop_assert!(down <= up + 1e-9 && down <= inner + 1e-9, "up {up} down {down} inner {inner}");
    }

    #[test]
    fn boundary_candidates_are_nonincreasing_in_time(
        slopes in prop::collection::vec((0.1f64..1.0, 0.0f64..=1.0), 1..8),
        x in 0.05f64..0.95,
        t in 1.0f64..4.0,
    ) {
        let fd = fd();
        let mut pts = vec![(0.0, 0.0)];
        for (dt, q) in &slopes {
            let (t0, n0) = *pts.last().unwrap();
            pts.push((t0 + dt, n0 + q * fd.capacity() * dt));
        }
        let curve = CumulativeCurve::from_samples(&pts).unwrap();
        let s_max = (t - x / fd.v_free()).min(curve.end_time());
        prop_assume!(s_max > 0.0);
        let mut prev = f64::INFINITY;
        for i in 0..=50 {
            let s = s_max * i as f64 / 50.0;
            let b = candidate_value(curve.eval(s).unwrap(), 0.0, s, x, t, &fd).unwrap();
            prop_assert!(b <= prev + 1e-12);
            prev = b;
        }
    }
}

fn simulated_link(segs: &[(f64, f64, f64)], demand: &[(f64, f64)], supply: &[(f64, f64)], horizon: f64) -> UDomainData {
    let fd = fd();
    let net = Network::builder()
        .link("a", fd, DensityProfile::from_segments(1.0, segs, &fd, 0.0).unwrap())
        .origin("o", "a", RateProfile::steps(demand).unwrap(), &[])
        .destination("d", "a", RateProfile::steps(supply).unwrap())
        .build()
        .unwrap();
    let traj = run(net, SimConfig::new(0.01, horizon).unwrap()).unwrap();
    traj.network.links[0].domain_data().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn restriction_reproduces_interior_values(
        k in prop::collection::vec(0.0f64..3.0, 3),
        d in prop::collection::vec(0.0f64..1.0, 2),
        s in prop::collection::vec(0.0f64..1.0, 2),
        (a, b) in (0.05f64..0.45, 0.55f64..0.95),
    ) {
        let fd = fd();
        let horizon = 3.0;
        let data = simulated_link(
            &[(0.0, 0.3, k[0]), (0.3, 0.7, k[1]), (0.7, 1.0, k[2])],
            &[(0.0, d[0]), (1.5, d[1])],
            &[(0.0, s[0]), (1.0, s[1])],
            horizon,
        );
        let sub_profile = data.profile.restrict(a, b, &fd).unwrap();
        let up = boundary_trace(&data, a, horizon).unwrap();
        let down = boundary_trace(&data, b, horizon).unwrap();
        let sub = UDomainData::new(fd, sub_profile, up, down).unwrap();
        for i in 1..=6 {
            for j in 1..=5 {
                let x = a + (b - a) * j as f64 / 6.0;
                let t = horizon * i as f64 / 6.0;
                let whole = solve_interior(&data, x, t).unwrap();
                let part = solve_interior(&sub, x - a, t).unwrap();
                prop_assert!((whole - part).abs() <= 1e-9, "x {x} t {t}: {whole} vs {part}");
            }
        }
    }
}
