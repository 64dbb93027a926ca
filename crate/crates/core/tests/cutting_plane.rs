mod common;

use common::Toy;
use nalgebra::DVector;
use tsdr_mpc::ambiguity::EmpiricalSamples;
use tsdr_mpc::cutting_plane::Termination;

#[test]
fn toy_objective_matches_brute_force() {
    let toy = Toy::standard();
    let cases: [(f64, [f64; 2]); 4] = [(0.8, [0.15, -0.1]), (-0.5, [0.0, 0.0]), (1.2, [0.3, 0.25]), (0.2, [-0.4, 0.6])];
    for (x, ws) in cases {
        let cfg = toy.config(x);
        let (setup, ctrl) = cfg.build_controller().unwrap();
        assert!((setup.riccati.p[(0, 0)] - toy.p()).abs() < 1e-10);
        let samples = EmpiricalSamples::new(ws.iter().map(|w| DVector::from_element(1, *w)).collect()).unwrap();
        let sol = ctrl.solve_step(&DVector::from_element(1, x), &samples).unwrap();
        let (j, u, g) = toy.brute_force(x, &ws);
        assert!((sol.objective - j).abs() <= 1e-3, "x {x}: solver {} vs grid {j} (u {u}, gamma {g})", sol.objective);
        assert!((sol.upper_bound - j).abs() <= 1e-3);
        // the returned point is scored the same way by the oracle
        let at = toy.objective(x, sol.u_bar[0], sol.gamma, &ws);
        assert!((at - j).abs() <= 1e-3, "oracle at solver point {at} vs {j}");
        assert_eq!(sol.diagnostics.termination, Termination::Converged);
    }
}

#[test]
fn master_objectives_are_monotone_on_the_benchmark() {
    let cfg = common::paper();
    let (setup, ctrl) = cfg.build_controller().unwrap();
    let samples = EmpiricalSamples::new(
        (0..10).map(|i| DVector::from_fn(6, |j, _| 0.05 * ((i * 7 + j) as f64).sin())).collect(),
    )
    .unwrap();
    let sol = ctrl.solve_step(&setup.x0, &samples).unwrap();
    let m = &sol.diagnostics.master_objectives;
    assert!(!m.is_empty());
    for w in m.windows(2) {
        assert!(w[1] >= w[0] - 1e-8 * (1.0 + w[0].abs()), "{m:?}");
    }
    assert!(sol.diagnostics.outer_iterations < cfg.solver.max_outer);
    assert!(sol.upper_bound >= sol.objective - 1e-6 * sol.objective.abs());
    assert!(setup.input_box.contains(&ctrl.physical_inputs(&setup.x0, &sol.u_bar).rows(0, 1).into_owned(), 1e-7));
}

#[test]
fn single_solve_at_initial_state() {
    let cfg = common::paper();
    let (setup, ctrl) = cfg.build_controller().unwrap();
    let sol = ctrl.solve_step(&setup.x0, &EmpiricalSamples::zeros(10, 6)).unwrap();
    assert!((sol.objective - 210.6478).abs() < 1e-3, "{}", sol.objective);
    assert!((sol.u_bar[0] + 4.624).abs() < 1e-3);
    // at the origin only the multiplier term remains
    let sol0 = ctrl.solve_step(&DVector::zeros(2), &EmpiricalSamples::zeros(10, 6)).unwrap();
    assert!((sol0.objective - cfg.ambiguity.radius * sol0.gamma).abs() < 1e-6);
}

#[test]
fn larger_radius_never_lowers_the_objective() {
    let cfg = common::paper();
    let setup = cfg.build().unwrap();
    let samples = EmpiricalSamples::new((0..10).map(|i| DVector::from_element(6, 0.02 * i as f64 - 0.1)).collect()).unwrap();
    let x = DVector::from_vec(vec![-1.0, 0.5]);
    let mut last = f64::NEG_INFINITY;
    for r in [1e-4, 1e-3, 1e-2, 5e-2] {
        let ctrl = setup.controller(r, setup.l_c, cfg.solver).unwrap();
        let j = ctrl.solve_step(&x, &samples).unwrap().objective;
        assert!(j >= last - 1e-6 * j.abs(), "radius {r}: {j} < {last}");
        last = j;
    }
}
