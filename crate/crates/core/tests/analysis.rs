mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use tsdr_mpc::analysis::{c1_constant, compute_constants, propagation_constants, sigma_bar_1, sigma_bar_2, sigma_bar_3, summarize, theorem3_bound, young_epsilon, Auditor, ConstantInputs};
use tsdr_mpc::linalg::quad;
use tsdr_mpc::simulator::{Simulator, Trajectory};

fn pow_sum(r: f64, lo: i64, hi: i64) -> f64 {
    (lo..=hi).map(|i| r.powi(i as i32)).sum()
}

/// The five propagation sums written out as plain loops.
fn loop_constants(l: f64, n: usize) -> [f64; 5] {
    let n = n as i64;
    let a1 = pow_sum(l, 0, n - 2);
    let a2 = pow_sum(l * l, 0, n - 2);
    let a3 = (0..=n - 2).map(|i| pow_sum(l, 0, i - 1).powi(2)).sum::<f64>();
    let a4 = pow_sum(l * l, 1, n);
    let a5 = (1..=n).map(|i| pow_sum(l * l, 0, i - 1)).sum::<f64>();
    [a1.sqrt(), a2.sqrt(), a3.sqrt(), a4.sqrt(), a5.sqrt()]
}

fn inputs() -> ConstantInputs {
    ConstantInputs::from_setup(&common::paper().build().unwrap()).unwrap()
}

#[test]
fn propagation_constants_match_loops() {
    for l in [0.0, 1e-9, 1e-3, 0.3, 0.9, 0.99, 1.0, 1.031269, 1.5, 2.0] {
        for n in 1..=8 {
            let got = propagation_constants(l, n);
            let want = loop_constants(l, n);
            for i in 0..5 {
                assert!((got[i] - want[i]).abs() <= 1e-10 * (1.0 + want[i]), "L {l} N {n} C_A{}: {} vs {}", i + 1, got[i], want[i]);
            }
        }
    }
}

#[test]
fn c1_matches_loop_oracle() {
    let inp = inputs();
    let n = inp.horizon as i64;
    let lbu = inp.l_b * inp.u_u;
    let mut want = 0.0;
    for i in 0..n {
        want += 2.0 * inp.lmax_q * (pow_sum(inp.l_a, 0, i - 1) * lbu).powi(2) + 2.0 * inp.lmax_r * inp.u_u * inp.u_u;
    }
    want += 2.0 * inp.lmax_p * (pow_sum(inp.l_a, 0, n - 1) * lbu).powi(2);
    assert!((c1_constant(&inp) - want).abs() < 1e-9 * want);
    assert!((want - 854.4).abs() < 0.1);
}

#[test]
fn benchmark_constants() {
    let inp = inputs();
    let k = compute_constants(&inp, 1.0, 1.0);
    assert_eq!(k.k0, 0.25 * inp.lmin_q);
    assert!((k.c_l - 4.8265).abs() < 1e-3);
    assert!(!k.contractive);
    assert!((k.c2 - (k.c1 + 4.0 * inp.h_sq + 0.25 * (inp.l_b1 * inp.u_u).powi(2))).abs() < 1e-6 * k.c2);
    // every derived constant is finite and nonnegative
    for v in [k.k1, k.k2, k.k31, k.k32, k.k4, k.k5, k.c_w1, k.c_w2, k.c_sn] {
        assert!(v.is_finite() && v >= 0.0);
    }
    // smaller Young parameters make the split terms larger
    let k2 = compute_constants(&inp, 0.1, 0.1);
    assert!(k2.k2 > k.k2 && k2.k5 > k.k5 && k2.k32 > k.k32 && k2.k4 > k.k4);
}

#[test]
fn young_epsilon_cases() {
    assert_eq!(young_epsilon(2.0, 0.0, 0.0, 0.0), 0.125);
    assert_eq!(young_epsilon(2.0, 1e-9, 0.0, 0.0), 1e-3);
    assert_eq!(young_epsilon(2.0, 0.0, 1e-4, 0.0), 1e-2);
    assert_eq!(young_epsilon(2.0, 0.0, 0.0, 4.0), 0.125);
}

#[test]
fn bound_vanishes_at_zero_and_partially_vanishes() {
    let inp = inputs();
    let b = theorem3_bound(&inp, 0.0, 0.0, 0.0).unwrap();
    assert_eq!(b.total, 0.0);
    assert_eq!(b.sigma, [0.0; 3]);
    let b = theorem3_bound(&inp, 0.0, 0.0, 0.2).unwrap();
    assert_eq!(b.sigma_bar[0], 0.0);
    assert_eq!(b.sigma_bar[1], 0.0);
    assert!(b.sigma_bar[2] > 0.0);
    assert!(theorem3_bound(&inp, -1e-3, 0.0, 0.0).is_err());
    assert!(theorem3_bound(&inp, 0.0, f64::NAN, 0.0).is_err());
}

#[test]
fn envelopes_dominate_the_terms() {
    let inp = inputs();
    for (e, m, t) in [(0.01, 0.0, 0.2), (1e-4, 0.1, 0.02), (0.5, 0.7, 0.5), (1e-6, 1e-3, 1e-3)] {
        let b = theorem3_bound(&inp, e, m, t).unwrap();
        for i in 0..3 {
            assert!(b.sigma_bar[i] >= b.sigma[i] - 1e-9 * b.sigma[i].abs(), "({e},{m},{t}) term {i}: {} < {}", b.sigma_bar[i], b.sigma[i]);
        }
        assert!((b.total - b.sigma_bar.iter().sum::<f64>()).abs() < 1e-9 * b.total);
    }
}

#[test]
fn bound_is_monotone_on_grids() {
    let inp = inputs();
    let grid = [0.0, 1e-6, 1e-4, 1e-2, 0.1, 1.0];
    for w in grid.windows(2) {
        let f = |e, m, t| theorem3_bound(&inp, e, m, t).unwrap().total;
        assert!(f(w[1], 0.1, 0.1) > f(w[0], 0.1, 0.1));
        assert!(f(0.01, w[1], 0.1) > f(0.01, w[0], 0.1));
        assert!(f(0.01, 0.1, w[1]) > f(0.01, 0.1, w[0]));
    }
    let k = compute_constants(&inp, 1.0, 0.05);
    for w in grid.windows(2) {
        assert!(sigma_bar_1(&k, inp.lmin_cs, w[1]) > sigma_bar_1(&k, inp.lmin_cs, w[0]));
        assert!(sigma_bar_2(&k, w[1]) > sigma_bar_2(&k, w[0]));
        assert!(sigma_bar_3(&k, w[1]) > sigma_bar_3(&k, w[0]));
    }
}

fn short_run(id: &str, steps: usize) -> (tsdr_mpc::config::Setup, Trajectory, tsdr_mpc::config::RunConfig) {
    let cfg = common::paper();
    let (setup, ctrl) = cfg.build_controller().unwrap();
    let mut sc = cfg.scenario.preset(id).unwrap();
    sc.steps = steps;
    let tr = Simulator::new(&setup, &ctrl, &cfg).run(&sc, 0);
    (setup, tr, cfg)
}

#[test]
fn zero_disturbance_recursion_is_a_telescoping_identity() {
    let (setup, tr, _) = short_run("nominal", 12);
    let aud = Auditor::new(&setup, 0.01).unwrap();
    let zero = DVector::zeros(6);
    let w = &setup.weights;
    let m = &setup.model;
    for (k, st) in tr.steps.iter().enumerate().take(10) {
        let x_next = &tr.steps[k + 1].x;
        for eps in [0.1, 0.5, 2.0] {
            let margin = aud.check_prop2(st, x_next, &zero, eps);
            // rollout oracle for the shifted candidate from the nominal successor
            let mut cand = vec![st.plan[1], st.plan[2], 0.0];
            let mut x = x_next.clone();
            let mut v_next = quad(&x, &w.q);
            for (i, c) in cand.iter_mut().enumerate() {
                let v = DVector::from_element(1, *c);
                v_next += quad(&v, &w.r);
                x = &m.a * &x + &m.b * &v;
                v_next += if i < 2 { quad(&x, &w.q) } else { quad(&x, &w.p) };
            }
            let v0 = aud.v_q(&st.x, &st.plan, &zero);
            let stage = w.stage_cost(&st.x, &st.v);
            let want = v0 - stage - v_next / (1.0 + eps);
            assert!((margin - want).abs() < 1e-9 * (1.0 + v0), "k {k}: {margin} vs {want}");
            assert!(margin >= -1e-9);
        }
    }
}

#[test]
fn audits_pass_on_a_disturbed_run_for_several_young_parameters() {
    let (setup, tr, cfg) = short_run("a", 25);
    assert!(tr.failure.is_none());
    let aud = Auditor::new(&setup, cfg.ambiguity.radius).unwrap();
    for eps_c1 in [0.1, 1.0, 10.0] {
        let rows = aud.audit(&tr, cfg.analysis.young_eps, eps_c1, 1e-6);
        let s = summarize(&rows, 1e-6);
        assert!(s.min_prop3.unwrap() >= -1e-6, "eps_c1 {eps_c1}: {s:?}");
        assert!(s.min_prop1.unwrap() >= -1e-6);
        assert!(s.min_prop2.unwrap() >= -1e-6);
        assert!(s.max_dynamics.unwrap() <= 1e-9);
        assert!(s.min_terminal.unwrap() >= -1e-8);
        assert_eq!(s.flagged, 0, "{s:?}");
    }
}

#[test]
fn tampered_logs_are_flagged() {
    let (setup, tr, cfg) = short_run("a", 15);
    let aud = Auditor::new(&setup, cfg.ambiguity.radius).unwrap();
    let flagged = |t: &Trajectory| aud.audit(t, 0.5, 1.0, 1e-6).iter().filter(|r| r.flagged).map(|r| r.k).collect::<Vec<_>>();
    assert!(flagged(&tr).is_empty());

    let mut t = tr.clone();
    t.steps[5].x[0] += 1e-3;
    assert!(flagged(&t).contains(&4));

    let mut t = tr.clone();
    t.steps[7].u[0] = 1.5;
    assert!(flagged(&t).contains(&7));

    let mut t = tr.clone();
    t.steps[3].margins[2] += 0.1;
    assert_eq!(flagged(&t), vec![3]);

    let mut t = tr.clone();
    t.steps[2].plan[0] += 1e6;
    assert!(flagged(&t).contains(&2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn propagation_constants_are_monotone_in_the_norm(l in 0.0f64..2.0, dl in 1e-3f64..0.5, n in 2usize..8) {
        let a = propagation_constants(l, n);
        let b = propagation_constants(l + dl, n);
        for i in [0usize, 1, 3, 4] {
            prop_assert!(b[i] >= a[i]);
        }
    }

    #[test]
    fn bound_is_nonnegative_and_finite(e in 0.0f64..1.0, m in 0.0f64..1.0, t in 0.0f64..1.0) {
        let b = theorem3_bound(&inputs(), e, m, t).unwrap();
        prop_assert!(b.total.is_finite() && b.total >= 0.0);
        prop_assert!(b.young_eps > 0.0 && b.young_eps <= 1.0 / (4.0 * b.constants.c_l) + 1e-15);
    }
}
