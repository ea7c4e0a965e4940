use ltm_core::scenarios::{diverge_merge, DM_PERTURBATION};
use ltm_core::sim::{run, Trajectory};
use ltm_core::statics::{classify_stability, measure_decay_ratio, poincare_iterate, DecayEstimate, Stability};

fn simulate(c: [f64; 4], xi: f64, horizon: f64) -> Trajectory {
    let cfg = diverge_merge(c, xi, DM_PERTURBATION, horizon).unwrap();
    run(cfg.build_network().unwrap(), cfg.sim_config().unwrap()).unwrap()
}

/// Regime persistence and the delay, diverge and merge relations before saturation.
fn check_regime(c: [f64; 4], xi: f64, window: f64) {
    let tr = simulate(c, xi, window);
    let idx = |id: &str| tr.network.link_index(id).unwrap();
    let (l1, l2) = (idx("1"), idx("2"));
    let w_steps = (1.0 / 0.5 / tr.dt).round() as usize;
    let v_steps = (1.0 / tr.dt).round() as usize;
    for (n, r) in tr.records.iter().enumerate() {
        let (a, b) = (&r.links[l1], &r.links[l2]);
        // queue and vacancy sizes build up over the first wave crossing
        if r.t < 2.0 {
            continue;
        }
        assert!(a.lambda > 0.0 && a.gamma.abs() <= 1e-9, "link 1 left SOC at t = {}", r.t);
        assert!(b.lambda.abs() <= 1e-9 && b.gamma > 0.0, "link 2 left SUC at t = {}", r.t);
        assert!((b.inflow - a.inflow * (1.0 - xi) / xi).abs() <= 1e-6);
        assert!((a.outflow - (c[3] - b.outflow)).abs() <= 1e-6);
        if n >= w_steps {
            assert!((a.inflow - tr.records[n - w_steps].links[l1].outflow).abs() <= 1e-6);
        }
        if n >= v_steps {
            assert!((b.outflow - tr.records[n - v_steps].links[l2].inflow).abs() <= 1e-6);
        }
    }
}

#[test]
fn unstable_loop_stays_in_regime_before_saturation() {
    check_regime([3.0, 1.0, 2.0, 2.0], 0.4, 15.0);
}

#[test]
fn stable_loop_stays_in_regime() {
    check_regime([3.0, 2.0, 1.0, 2.0], 0.7, 30.0);
}

#[test]
fn measured_ratio_follows_the_return_map() {
    for (c, xi) in [([3.0, 2.0, 1.0, 2.0], 0.7), ([3.0, 1.0, 2.0, 2.0], 0.4), ([3.0, 1.0, 2.0, 2.0], 1.0 / 3.0 + 0.05)] {
        let tr = simulate(c, xi, 30.0);
        let fp = xi * c[3];
        let est = measure_decay_ratio(&tr.inflow("1").unwrap(), 3.0, fp).unwrap();
        let predicted = poincare_iterate(fp + 1.0, xi, c[3]).unwrap() - fp;
        assert!((est.value().unwrap() - predicted).abs() < 1e-6, "xi {xi}: {est:?} vs {predicted}");
        let growing = predicted.abs() > 1.0;
        assert_eq!(classify_stability(xi).unwrap() == Stability::Stable, !growing);
    }
}

#[test]
fn unperturbed_loop_is_a_zero_signal() {
    let cfg = diverge_merge([3.0, 1.0, 2.0, 2.0], 0.4, 0.0, 12.0).unwrap();
    let tr = run(cfg.build_network().unwrap(), cfg.sim_config().unwrap()).unwrap();
    let est = measure_decay_ratio(&tr.inflow("1").unwrap(), 3.0, 0.8).unwrap();
    assert_eq!(est, DecayEstimate::ZeroSignal);
}
