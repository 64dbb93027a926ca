use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsdr_mpc::ambiguity::{discrete_wasserstein, gelbrich_mean_bound, gelbrich_trace_bound, transport_cost, DiscreteDistribution, DisturbanceWindow, EmpiricalSamples};
use tsdr_mpc::config::RunConfig;
use tsdr_mpc::penalty::{constraint_slack, dual_value_representation, dual_vertex, penalty_value, second_stage_lp, PenaltyWeights};

const CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/paper_sv.toml");

#[test]
fn strong_duality_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = rng.random_range(1..=12);
        let h: DVector<f64> = DVector::from_fn(m, |_, _| rng.random_range(0.0..50.0));
        let s: DVector<f64> = DVector::from_fn(m, |_, _| rng.random_range(-5.0..5.0));
        let oracle: f64 = h.iter().zip(s.iter()).map(|(a, b)| a * b.max(0.0)).sum();
        let hw = PenaltyWeights::new(h).unwrap();
        let lp = second_stage_lp(&hw, &s).unwrap();
        let pi = dual_vertex(&hw, &s);
        for v in [lp.value, penalty_value(&hw, &s), pi.dot(&s)] {
            worst = worst.max((v - oracle).abs() / (1.0 + oracle.abs()));
        }
        // primal feasibility of the recourse
        assert!((&lp.q_plus - &lp.q_minus - &s).amax() < 1e-7);
    }
    assert!(worst <= 1e-8, "worst relative gap {worst:e}");
}

#[test]
fn penalty_weights_reject_negative_entries() {
    assert!(PenaltyWeights::new(DVector::from_vec(vec![1.0, -0.1])).is_err());
    assert!(second_stage_lp(&PenaltyWeights::new(DVector::from_vec(vec![1.0])).unwrap(), &DVector::zeros(2)).is_err());
    let h = PenaltyWeights::per_row(&DVector::from_vec(vec![1.0, 2.0]), 3).unwrap();
    assert_eq!(h.vector().as_slice(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
}

#[test]
fn dual_representation_on_the_benchmark() {
    let setup = RunConfig::load(CONFIG.as_ref()).unwrap().build().unwrap();
    let l = &setup.lifted;
    let x = DVector::from_vec(vec![-1.9, 1.5]);
    let u = DVector::from_vec(vec![0.4, -0.2, 0.1]);
    let w = DVector::from_vec(vec![0.3, 0.5, -0.1, 0.2, 0.0, 0.4]);
    let s = constraint_slack(l, &x, &u, &w);
    // oracle: margins of the rolled-out states
    let mut xi = x.clone();
    for i in 0..3 {
        xi = &setup.model.a * &xi + &setup.model.b * u.rows(i, 1) + &setup.model.d * w.rows(2 * i, 2);
        assert!((setup.constraints.margins(&xi) - s.rows(4 * i, 4)).amax() < 1e-12);
    }
    let v = dual_value_representation(&setup.penalty, l, &x, &u, &w);
    assert!((v - penalty_value(&setup.penalty, &s)).abs() < 1e-9);
}

#[test]
fn gelbrich_bounds_with_identity_weight_and_zero_radius() {
    let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.3]));
    for n in [1usize, 2, 3, 5] {
        let c_s = DMatrix::identity(2 * n, 2 * n);
        let mu = 0.7;
        assert_eq!(gelbrich_mean_bound(0.0, &c_s, n, mu), (n as f64).sqrt() * mu);
        // stage covariance bound, stacked over the horizon
        assert!((gelbrich_trace_bound(0.0, &c_s, n, &sigma) - n as f64 * sigma.trace()).abs() < 1e-15 * n as f64);
    }
}

#[test]
fn gelbrich_bounds_are_monotone() {
    let setup = RunConfig::load(CONFIG.as_ref()).unwrap().build().unwrap();
    let c_s = setup.transport_weight().unwrap();
    let grid = [0.0, 1e-4, 1e-3, 0.01, 0.1, 1.0];
    let sigma = |s: f64| DMatrix::identity(2, 2) * s;
    for w in grid.windows(2) {
        assert!(gelbrich_mean_bound(w[1], &c_s, 3, 0.2) > gelbrich_mean_bound(w[0], &c_s, 3, 0.2));
        assert!(gelbrich_mean_bound(0.01, &c_s, 3, w[1]) > gelbrich_mean_bound(0.01, &c_s, 3, w[0]));
        assert!(gelbrich_trace_bound(w[1], &c_s, 3, &sigma(0.1)) > gelbrich_trace_bound(w[0], &c_s, 3, &sigma(0.1)));
        assert!(gelbrich_trace_bound(0.01, &c_s, 3, &sigma(w[1])) > gelbrich_trace_bound(0.01, &c_s, 3, &sigma(w[0])));
    }
    assert!((gelbrich_mean_bound(0.01, &c_s, 3, 0.0) - 0.3447).abs() < 1e-3);
    assert!((gelbrich_trace_bound(0.01, &c_s, 3, &sigma(0.1)) - 8.24).abs() < 1e-2);
}

#[test]
fn distance_from_zero_matches_direct_sum() {
    let cfg = RunConfig::load(CONFIG.as_ref()).unwrap();
    let setup = cfg.build().unwrap();
    let amb = setup.controller(0.01, setup.l_c, cfg.solver).unwrap().reform.ambiguity;
    let c_s = setup.transport_weight().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples: Vec<DVector<f64>> = (0..10).map(|_| DVector::from_fn(6, |_, _| rng.random_range(-0.2..0.2))).collect();
    let oracle = samples.iter().map(|w| 0.5 * (w.transpose() * &c_s * w)[(0, 0)]).sum::<f64>() / 10.0;
    let es = EmpiricalSamples::new(samples).unwrap();
    assert!((es.distance_from_zero(&amb) - oracle).abs() < 1e-14);
    assert_eq!(EmpiricalSamples::zeros(4, 6).distance_from_zero(&amb), 0.0);
}

#[test]
fn bootstrap_draws_from_the_window() {
    let mut win = DisturbanceWindow::new(&DMatrix::identity(2, 2), 3);
    for i in 0..5 {
        win.push(DVector::from_element(2, i as f64));
    }
    assert_eq!(win.len(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s = win.bootstrap(20, 3, 2, &mut rng);
    for v in &s.samples {
        for i in 0..3 {
            let a = v[2 * i];
            assert!([2.0, 3.0, 4.0].contains(&a) && v[2 * i + 1] == a);
        }
    }
    let w = win.record(&DVector::from_vec(vec![1.0, 2.0]), &DVector::from_vec(vec![0.5, 0.5]));
    assert_eq!(w.as_slice(), &[0.5, 1.5]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn one_dimensional_transport_is_sorted_matching(
        a in prop::collection::vec(-3.0f64..3.0, 4),
        b in prop::collection::vec(-3.0f64..3.0, 4),
        weight in 0.1f64..4.0,
    ) {
        let pts = |v: &[f64]| v.iter().map(|x| DVector::from_element(1, *x)).collect::<Vec<_>>();
        let wm = DMatrix::from_element(1, 1, weight);
        let got = discrete_wasserstein(
            &DiscreteDistribution::uniform(pts(&a)).unwrap(),
            &DiscreteDistribution::uniform(pts(&b)).unwrap(),
            |p, q| transport_cost(&wm, p, q),
        ).unwrap();
        let (mut sa, mut sb) = (a.clone(), b.clone());
        sa.sort_by(f64::total_cmp);
        sb.sort_by(f64::total_cmp);
        let oracle = sa.iter().zip(&sb).map(|(x, y)| 0.5 * weight * (x - y).powi(2)).sum::<f64>() / 4.0;
        prop_assert!((got - oracle).abs() <= 1e-7 * (1.0 + oracle));
    }

    #[test]
    fn penalty_is_convex_and_nonnegative(
        h in prop::collection::vec(0.0f64..10.0, 5),
        s1 in prop::collection::vec(-4.0f64..4.0, 5),
        s2 in prop::collection::vec(-4.0f64..4.0, 5),
        t in 0.0f64..1.0,
    ) {
        let h = PenaltyWeights::new(DVector::from_vec(h)).unwrap();
        let (a, b) = (DVector::from_vec(s1), DVector::from_vec(s2));
        let mid = &a * t + &b * (1.0 - t);
        let f = |s: &DVector<f64>| penalty_value(&h, s);
        prop_assert!(f(&a) >= 0.0);
        prop_assert!(f(&mid) <= t * f(&a) + (1.0 - t) * f(&b) + 1e-12);
    }
}
