mod common;

use tsdr_mpc::simulator::{aggregate, list_runs, read_trajectory, run_stats, write_trajectory, Simulator};

#[test]
fn runs_are_reproducible_from_the_seed() {
    let cfg = common::paper();
    let (setup, ctrl) = cfg.build_controller().unwrap();
    let mut sc = cfg.scenario.preset("b").unwrap();
    sc.steps = 12;
    let sim = Simulator::new(&setup, &ctrl, &cfg);
    let a = sim.run(&sc, 3);
    let b = sim.run(&sc, 3);
    assert_eq!(a, b);
    let c = sim.run(&sc, 4);
    assert_ne!(a.steps[5].w, c.steps[5].w);
    sc.runs = 3;
    let all = sim.run_scenario(&sc);
    assert_eq!(all.iter().map(|t| t.run).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert_eq!(all[1], sim.run(&sc, 1));
}

#[test]
fn nominal_loop_settles_inside_the_constraints() {
    let cfg = common::paper();
    let (setup, ctrl) = cfg.build_controller().unwrap();
    let mut sc = cfg.scenario.preset("nominal").unwrap();
    sc.steps = 40;
    let tr = Simulator::new(&setup, &ctrl, &cfg).run(&sc, 0);
    assert!(tr.failure.is_none());
    for st in &tr.steps {
        assert!(st.w.iter().all(|w| *w == 0.0));
        assert!(st.margins.max() <= 1e-9, "k {}: {}", st.k, st.margins);
        assert!(st.u[0].abs() <= 1.0 + 1e-7);
        assert!(st.monotone);
    }
    // With a positive radius the worst case keeps hedging against far
    // violations of x1 <= 2, so the loop settles at a point left of the origin.
    let settle = &tr.steps[30].x;
    for st in &tr.steps[30..] {
        assert!((&st.x - settle).norm() <= 1e-6, "k {}: {}", st.k, st.x);
    }
    assert!(settle[0] < 0.0 && settle.norm() < 0.05, "{settle}");
    // the recorded successor is the model prediction
    for pair in tr.steps.windows(2) {
        let pred = setup.plant.successor(&pair[0].x, &pair[0].u, &pair[0].w);
        assert!((pred - &pair[1].x).amax() < 1e-12);
    }
    let st = run_stats(&tr, &setup, 10);
    let tail: Vec<_> = tr.steps.iter().skip(10).collect();
    let avg = tail.iter().map(|s| s.x.norm_squared() + 0.1 * s.v.norm_squared()).sum::<f64>() / tail.len() as f64;
    assert!((st.average_cost - avg).abs() < 1e-12);
    assert_eq!(st.violation_rate, 0.0);
}

#[test]
fn nominal_loop_reaches_the_origin_for_a_small_radius() {
    let mut cfg = common::paper();
    cfg.ambiguity.radius = 1e-3;
    let (setup, ctrl) = cfg.build_controller().unwrap();
    let mut sc = cfg.scenario.preset("nominal").unwrap();
    sc.steps = 40;
    let tr = Simulator::new(&setup, &ctrl, &cfg).run(&sc, 0);
    assert!(tr.failure.is_none());
    for st in tr.steps.iter().filter(|s| s.k >= 30) {
        assert!(st.x.norm() <= 1e-2, "k {}: {}", st.k, st.x.norm());
    }
}

#[test]
fn logs_round_trip_exactly() {
    let cfg = common::paper();
    let (setup, ctrl) = cfg.build_controller().unwrap();
    let mut sc = cfg.scenario.preset("d").unwrap();
    sc.steps = 8;
    sc.runs = 2;
    let trajs = Simulator::new(&setup, &ctrl, &cfg).run_scenario(&sc);
    let dir = tempfile::tempdir().unwrap();
    for t in &trajs {
        write_trajectory(dir.path(), t, &setup).unwrap();
    }
    assert_eq!(list_runs(dir.path()).unwrap(), vec![0, 1]);
    for t in &trajs {
        let back = read_trajectory(dir.path(), t.run, &setup).unwrap();
        assert_eq!(back.steps.len(), t.steps.len());
        for (a, b) in back.steps.iter().zip(&t.steps) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.u, b.u);
            assert_eq!(a.v, b.v);
            assert_eq!(a.w, b.w);
            assert_eq!(a.plan, b.plan);
            assert_eq!(a.cost, b.cost);
            assert_eq!(a.margins, b.margins);
            assert_eq!(a.zero_distance, b.zero_distance);
        }
        assert_eq!(back.final_state, t.final_state);
    }
    let stats: Vec<_> = trajs.iter().map(|t| run_stats(t, &setup, 2)).collect();
    let agg = aggregate(&stats);
    assert_eq!(agg.runs, 2);
    assert!((agg.average_cost - 0.5 * (stats[0].average_cost + stats[1].average_cost)).abs() < 1e-15);
}

#[test]
fn missing_or_corrupt_logs_are_errors() {
    let cfg = common::paper();
    let setup = cfg.build().unwrap();
    let dir = tempfile::tempdir().unwrap();
    assert!(list_runs(dir.path()).unwrap().is_empty());
    assert!(read_trajectory(dir.path(), 0, &setup).is_err());
    std::fs::write(tsdr_mpc::simulator::run_file(dir.path(), 0), "k,x0\n0,abc\n").unwrap();
    assert!(read_trajectory(dir.path(), 0, &setup).is_err());
}
