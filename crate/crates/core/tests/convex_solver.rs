use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use tsdr_mpc::convex::{parse_standard_form, ConvexProgram, NormConstraint, SolveStatus, WarmStart};

/// Projected gradient on a box, the reference for box-constrained QPs.
fn projected_gradient(h: &DMatrix<f64>, c: &DVector<f64>, lo: &[f64], hi: &[f64]) -> DVector<f64> {
    let l = h.clone().symmetric_eigen().eigenvalues.max();
    let step = 1.0 / l;
    let mut z = DVector::zeros(c.len());
    for _ in 0..200_000 {
        let g = h * &z + c;
        let mut next = &z - g * step;
        for i in 0..next.len() {
            next[i] = next[i].clamp(lo[i], hi[i]);
        }
        let done = (&next - &z).amax() < 1e-14;
        z = next;
        if done {
            break;
        }
    }
    z
}

fn spd(seed: &[f64], n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |i, j| seed[(i * n + j) % seed.len()]);
    &m * m.transpose() + DMatrix::identity(n, n) * 0.5
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn box_qp_matches_projected_gradient(
        n in 2usize..6,
        seed in prop::collection::vec(-1.0f64..1.0, 36),
        c in prop::collection::vec(-3.0f64..3.0, 6),
        width in prop::collection::vec(0.1f64..2.0, 6),
    ) {
        let h = spd(&seed, n);
        let c = DVector::from_column_slice(&c[..n]);
        let lo: Vec<f64> = width[..n].iter().map(|w| -w).collect();
        let hi: Vec<f64> = width[..n].iter().map(|w| 0.5 * w).collect();
        let mut p = ConvexProgram::new(n);
        p.hessian = h.clone();
        p.linear = c.clone();
        for i in 0..n {
            p.set_bounds(i, lo[i], hi[i]);
        }
        let sol = p.solve();
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        let z = projected_gradient(&h, &c, &lo, &hi);
        let oracle = 0.5 * z.dot(&(&h * &z)) + c.dot(&z);
        prop_assert!((sol.objective - oracle).abs() <= 1e-6 * (1.0 + oracle.abs()));
        prop_assert!((sol.x - z).amax() <= 1e-5);
    }

    #[test]
    fn objective_invariant_under_variable_reordering(
        n in 2usize..6,
        seed in prop::collection::vec(-1.0f64..1.0, 36),
        c in prop::collection::vec(-3.0f64..3.0, 6),
        a in prop::collection::vec(-1.0f64..1.0, 6),
        shift in 0usize..5,
    ) {
        let h = spd(&seed, n);
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let build = |perm: &[usize]| {
            let mut p = ConvexProgram::new(n);
            for i in 0..n {
                p.linear[perm[i]] = c[i];
                for j in 0..n {
                    p.hessian[(perm[i], perm[j])] = h[(i, j)];
                }
                p.set_bounds(perm[i], -1.0, 1.0);
            }
            p.add_le((0..n).map(|i| (perm[i], a[i])).collect(), 0.3);
            p.norm = Some(NormConstraint {
                matrix: DMatrix::from_fn(2, n, |r, j| if perm.iter().position(|&q| q == j).unwrap() % 2 == r { 1.0 } else { 0.0 }),
                offset: DVector::from_vec(vec![0.1, -0.2]),
                radius: 0.9,
            });
            p.solve()
        };
        let id: Vec<usize> = (0..n).collect();
        let s1 = build(&id);
        let s2 = build(&perm);
        prop_assert_eq!(s1.status, SolveStatus::Optimal);
        prop_assert_eq!(s2.status, SolveStatus::Optimal);
        prop_assert!((s1.objective - s2.objective).abs() <= 1e-8 * (1.0 + s1.objective.abs()));
    }

    #[test]
    fn warm_start_after_an_added_cut_matches_cold(
        n in 2usize..6,
        seed in prop::collection::vec(-1.0f64..1.0, 36),
        c in prop::collection::vec(-3.0f64..3.0, 6),
        rows in prop::collection::vec(-1.0f64..1.0, 18),
    ) {
        let mut p = ConvexProgram::new(n);
        p.hessian = spd(&seed, n);
        p.linear = DVector::from_column_slice(&c[..n]);
        for i in 0..n {
            p.set_bounds(i, -2.0, 2.0);
        }
        p.norm = Some(NormConstraint { matrix: DMatrix::identity(n, n), offset: DVector::zeros(n), radius: 1.5 });
        p.add_le((0..n).map(|i| (i, rows[i])).collect(), 0.2);
        let first = p.solve();
        prop_assert_eq!(first.status, SolveStatus::Optimal);
        // A new row, cutting off the previous optimum, plus a new variable.
        let a: DVector<f64> = DVector::from_column_slice(&rows[6..6 + n]);
        let mut q = ConvexProgram::new(n + 1);
        q.hessian.view_mut((0, 0), (n, n)).copy_from(&p.hessian);
        q.hessian[(n, n)] = 1.0;
        q.linear.rows_mut(0, n).copy_from(&p.linear);
        for i in 0..=n {
            q.set_bounds(i, -2.0, 2.0);
        }
        q.norm = Some(NormConstraint { matrix: DMatrix::identity(n, n + 1), offset: DVector::zeros(n), radius: 1.5 });
        q.inequalities = p.inequalities.clone();
        let cut = a.dot(&first.x) - 0.1;
        let mut terms: Vec<(usize, f64)> = (0..n).map(|i| (i, a[i])).collect();
        terms.push((n, rows[12]));
        q.add_le(terms, cut);
        let cold = q.solve();
        let warm = q.solve_from(&WarmStart::from_solution(&first));
        prop_assert_eq!(cold.status, SolveStatus::Optimal);
        prop_assert_eq!(warm.status, SolveStatus::Optimal);
        prop_assert!((cold.objective - warm.objective).abs() <= 1e-8 * (1.0 + cold.objective.abs()));
    }

    #[test]
    fn projection_onto_ball(c in prop::collection::vec(-4.0f64..4.0, 3), r in 0.1f64..3.0) {
        // min 1/2||z - c||^2 s.t. ||z|| <= r has the closed form c * min(1, r/||c||).
        let c = DVector::from_vec(c);
        let mut p = ConvexProgram::new(3);
        p.hessian = DMatrix::identity(3, 3);
        p.linear = -&c;
        p.norm = Some(NormConstraint { matrix: DMatrix::identity(3, 3), offset: DVector::zeros(3), radius: r });
        let sol = p.solve();
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        let expect = &c * (r / c.norm()).min(1.0);
        prop_assert!((sol.x - expect).amax() < 1e-6);
    }
}

#[test]
fn small_lp_vertex() {
    // min x + y s.t. x + 2y >= 2, 3x + y >= 3, x, y >= 0; optimum (4/5, 3/5).
    let mut p = ConvexProgram::new(2);
    p.linear = DVector::from_vec(vec![1.0, 1.0]);
    p.add_le(vec![(0, -1.0), (1, -2.0)], -2.0);
    p.add_le(vec![(0, -3.0), (1, -1.0)], -3.0);
    p.set_bounds(0, 0.0, f64::INFINITY);
    p.set_bounds(1, 0.0, f64::INFINITY);
    let sol = p.solve();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective - 1.4).abs() < 1e-8);
    assert!((sol.x[0] - 0.8).abs() < 1e-7 && (sol.x[1] - 0.6).abs() < 1e-7);
    // Both rows active: duals solve [1 3; 2 1] y = [1; 1].
    assert!((sol.inequality_duals[0] - 0.4).abs() < 1e-7);
    assert!((sol.inequality_duals[1] - 0.2).abs() < 1e-7);
}

#[test]
fn equality_constrained_qp() {
    let n = 5;
    let mut p = ConvexProgram::new(n);
    p.hessian = DMatrix::identity(n, n);
    p.add_eq((0..n).map(|i| (i, 1.0)).collect(), 1.0);
    let sol = p.solve();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.x.clone() - DVector::from_element(n, 0.2)).amax() < 1e-9);
    assert!((sol.equality_duals[0] + 0.2).abs() < 1e-8);
}

#[test]
fn detects_infeasible_bounds() {
    let mut p = ConvexProgram::new(1);
    p.hessian[(0, 0)] = 1.0;
    p.add_le(vec![(0, -1.0)], -1.0);
    p.add_le(vec![(0, 1.0)], 0.0);
    assert_eq!(p.solve().status, SolveStatus::Infeasible);
}

#[test]
fn detects_unbounded_lp() {
    let mut p = ConvexProgram::new(2);
    p.linear = DVector::from_vec(vec![-1.0, 0.0]);
    p.set_bounds(0, 0.0, f64::INFINITY);
    p.set_bounds(1, -1.0, 1.0);
    assert_eq!(p.solve().status, SolveStatus::Unbounded);
}

#[test]
fn zero_radius_norm_constraint_pins_image() {
    let mut p = ConvexProgram::new(3);
    p.hessian = DMatrix::identity(3, 3);
    p.norm = Some(NormConstraint {
        matrix: DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0]),
        offset: DVector::from_vec(vec![-1.0, 0.0]),
        radius: 0.0,
    });
    let sol = p.solve();
    assert_eq!(sol.status, SolveStatus::Optimal);
    // Minimum-norm point of {z0 + z1 = 1, z1 + z2 = 0}.
    let expect = DVector::from_vec(vec![2.0 / 3.0, 1.0 / 3.0, -1.0 / 3.0]);
    assert!((sol.x - expect).amax() < 1e-8);
}

#[test]
fn standard_form_text_round_trip() {
    let mut p = ConvexProgram::new(3);
    p.hessian = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 0.0]);
    p.linear = DVector::from_vec(vec![1.0, -1.0, 0.25]);
    p.constant = 3.5;
    p.add_le(vec![(0, 1.0), (2, -1.0)], 0.5);
    p.add_eq(vec![(1, 1.0), (2, 1.0)], 0.1);
    p.set_bounds(2, -2.0, f64::INFINITY);
    p.norm = Some(NormConstraint { matrix: DMatrix::identity(3, 3), offset: DVector::zeros(3), radius: 4.0 });
    let text = p.to_standard_form_text();
    assert!(text.starts_with("convex-program 1\nvars 3\n"));
    let q = parse_standard_form(&text).unwrap();
    assert_eq!(p, q);
    let (a, b) = (p.solve(), q.solve());
    assert_eq!(a.x, b.x);
}

#[test]
fn malformed_text_reports_line() {
    let err = parse_standard_form("convex-program 1\nvars x\n").unwrap_err();
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn bound_duals_close_stationarity() {
    // min 1/2||z||^2 - c'z on a box: the gradient is balanced by the active bounds.
    let mut p = ConvexProgram::new(3);
    p.hessian = DMatrix::identity(3, 3);
    p.linear = DVector::from_vec(vec![-3.0, 0.5, 2.0]);
    for i in 0..3 {
        p.set_bounds(i, -1.0, 1.0);
    }
    let sol = p.solve();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let grad = &sol.x + &p.linear;
    let res = grad + &sol.upper_duals - &sol.lower_duals;
    assert!(res.amax() < 1e-7, "{res}");
    assert!((sol.upper_duals[0] - 2.0).abs() < 1e-7 && (sol.lower_duals[2] - 1.0).abs() < 1e-7);
}
