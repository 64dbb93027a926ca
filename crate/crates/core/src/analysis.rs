//! Stability constants, the asymptotic performance bound and offline audits
//! of the per-step cost inequalities over closed-loop logs.
//!
//! All quantities are expressed in the model frame the controller optimizes
//! in: with pre-stabilization the plant matrix is `A + B K` and the decision
//! is the correction `v`, so stage costs are `||x||_Q^2 + ||v||_R^2`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::ambiguity::{gelbrich_mean_bound, gelbrich_trace_bound};
use crate::config::Setup;
use crate::linalg::{lambda_max, lambda_min, quad, spectral_norm, sym_eigenvalues};
use crate::penalty::penalty_value;
use crate::simulator::{ScenarioStats, StepRecord, Trajectory};
use crate::{Error, Result};

/// Problem data the constants are built from.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConstantInputs {
    pub horizon: usize,
    pub l_a: f64,
    pub l_b: f64,
    pub l_d: f64,
    pub u_u: f64,
    /// `||F Bbar||_2`.
    pub l_b1: f64,
    pub lmax_q: f64,
    pub lmin_q: f64,
    pub lmax_r: f64,
    pub lmax_p: f64,
    /// `lambda_max(F0' F0)`.
    pub lmax_f0: f64,
    pub lmin_cs: f64,
    pub lmax_cs: f64,
    /// `||h||^2` of the stacked penalty vector.
    pub h_sq: f64,
    pub l_c: f64,
}

impl ConstantInputs {
    pub fn from_setup(setup: &Setup) -> Result<Self> {
        let w = &setup.weights;
        let f0 = &setup.constraints.f0;
        let cs = sym_eigenvalues(&setup.transport_weight()?);
        Ok(Self {
            horizon: setup.lifted.horizon,
            l_a: setup.bounds.l_a,
            l_b: setup.bounds.l_b,
            l_d: setup.bounds.l_d,
            u_u: setup.bounds.u_u,
            l_b1: spectral_norm(&setup.lifted.b1()),
            lmax_q: lambda_max(&w.q),
            lmin_q: lambda_min(&w.q),
            lmax_r: lambda_max(&w.r),
            lmax_p: lambda_max(&w.p),
            lmax_f0: lambda_max(&(f0.transpose() * f0)),
            lmin_cs: cs[0],
            lmax_cs: cs[cs.len() - 1],
            h_sq: setup.penalty.vector().norm_squared(),
            l_c: setup.l_c,
        })
    }

    /// `c_l = 2 lambda_max(P) / lambda_min(Q)`.
    pub fn c_l(&self) -> f64 {
        2.0 * self.lmax_p / self.lmin_q
    }
}

/// `sum_{i=lo}^{hi} r^i` (zero when `hi < lo`).
fn geometric(r: f64, lo: i64, hi: i64) -> f64 {
    if hi < lo {
        return 0.0;
    }
    if (1.0 - r).abs() < 1e-12 {
        return (hi - lo + 1) as f64;
    }
    (r.powi(lo as i32) - r.powi(hi as i32 + 1)) / (1.0 - r)
}

/// `C_A1 .. C_A5`.
pub fn propagation_constants(l_a: f64, n: usize) -> [f64; 5] {
    let n = n as i64;
    let l2 = l_a * l_a;
    let s1 = geometric(l_a, 0, n - 2);
    let s2 = geometric(l2, 0, n - 2);
    // sum_{i=0}^{N-2} (sum_{j<i} L^j)^2 = sum_i (s_i)^2 with s_i = sum_{j=0}^{i-1} L^j
    let a3 = if (1.0 - l_a).abs() < 1e-12 {
        (0..=n - 2).map(|i| (i * i) as f64).sum()
    } else {
        ((n - 1).max(0) as f64 - 2.0 * s1 + s2) / ((1.0 - l_a) * (1.0 - l_a))
    };
    let a4 = geometric(l2, 1, n);
    // sum_{i=1}^{N} sum_{j=0}^{i-1} L^{2j}
    let a5 = if (1.0 - l2).abs() < 1e-12 {
        (n * (n + 1) / 2) as f64
    } else {
        (n as f64 - a4) / (1.0 - l2)
    };
    [s1.sqrt(), s2.sqrt(), a3.max(0.0).sqrt(), a4.sqrt(), a5.sqrt()]
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StabilityConstants {
    pub c1: f64,
    pub c2: f64,
    pub c_a: [f64; 5],
    pub c_w1: f64,
    pub c_w2: f64,
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k31: f64,
    pub k32: f64,
    pub k4: f64,
    pub k5: f64,
    pub c_l: f64,
    pub c_sn: f64,
    pub l_b1: f64,
    pub eps_c1: f64,
    pub eps_c2: f64,
    /// Whether `L_A < 1`; the constants are only meaningful then.
    pub contractive: bool,
}

/// The quadratic-cost offset `c_1`.
pub fn c1_constant(inp: &ConstantInputs) -> f64 {
    let n = inp.horizon as i64;
    let lbu = inp.l_b * inp.u_u;
    let mut c1 = 0.0;
    for i in 0..n {
        let s = geometric(inp.l_a, 0, i - 1) * lbu;
        c1 += inp.lmax_q * s * s + inp.lmax_r * inp.u_u * inp.u_u;
    }
    let s = geometric(inp.l_a, 0, n - 1) * lbu;
    2.0 * c1 + 2.0 * inp.lmax_p * s * s
}

/// Evaluates every constant with Young parameters `eps_c1`, `eps_c2`.
pub fn compute_constants(inp: &ConstantInputs, eps_c1: f64, eps_c2: f64) -> StabilityConstants {
    let n = inp.horizon as i32;
    let [a1, a2, a3, a4, a5] = propagation_constants(inp.l_a, inp.horizon);
    let ld2 = inp.l_d * inp.l_d;
    let la_n1 = inp.l_a.powi(n - 1);
    let la_2n1 = inp.l_a.powi(2 * (n - 1));
    let (pmax, qmin, qmax) = (inp.lmax_p, inp.lmin_q, inp.lmax_q);
    let c_w1 = inp.lmax_f0 * ld2 * a5 * a5;
    let c_w2 = inp.lmax_f0 * ld2 * a4 * a4;
    let c1 = c1_constant(inp);
    let c2 = c1 + 4.0 * inp.h_sq + 0.25 * inp.l_b1 * inp.l_b1 * inp.u_u * inp.u_u;
    let k0 = 0.25 * qmin;
    let k1 = 12.0 * inp.l_c * pmax * pmax / qmin * ld2 * la_2n1 + pmax * ld2 * la_2n1 + pmax * ld2 * la_n1 * (1.0 + a1 * a1) + 2.0 * qmax * ld2 * a2 * a2;
    let k2 = 12.0 * inp.l_c * pmax * pmax / qmin * ld2 * (a1 * a1 + 1.0).powi(2)
        + 2.0 * qmax * ld2 * a3 * a3
        + pmax * ld2 * (1.0 + 2.0 * a1 + a1.powi(4))
        + pmax * ld2 * la_n1 * (1.0 + a1 * a1)
        + c_w1 / (4.0 * eps_c2);
    let k31 = pmax * qmin * inp.l_d * a4 * inp.u_u * inp.l_b * a5;
    let k32 = pmax * ld2 * a5 * a5 + c_w1 / (4.0 * eps_c1) + 12.0 * pmax * pmax / qmin * ld2 * a4.powi(4);
    let k4 = qmax * ld2 * a3 * a3 + pmax * ld2 * a2 * a2 + c_w1 / (4.0 * eps_c2) + pmax * ld2 * (1.0 + 2.0 * a1);
    let k5 = pmax * ld2 * a5 * a5 + c_w1 / (4.0 * eps_c1);
    StabilityConstants {
        c1,
        c2,
        c_a: [a1, a2, a3, a4, a5],
        c_w1,
        c_w2,
        k0,
        k1,
        k2,
        k31,
        k32,
        k4,
        k5,
        c_l: inp.c_l(),
        c_sn: (inp.lmax_cs * inp.horizon as f64 / inp.lmin_cs).sqrt(),
        l_b1: inp.l_b1,
        eps_c1,
        eps_c2,
        contractive: inp.l_a < 1.0,
    }
}

/// Young parameter `min{1/(4 c_l), max{eps^(1/3), mu^(1/2), tr^(1/2)}}`,
/// falling back to `1/(4 c_l)` when all three arguments vanish.
pub fn young_epsilon(c_l: f64, radius: f64, mu_bar: f64, tr_sigma: f64) -> f64 {
    let cap = 1.0 / (4.0 * c_l);
    let m = radius.cbrt().max(mu_bar.sqrt()).max(tr_sigma.sqrt());
    if m > 0.0 {
        cap.min(m)
    } else {
        cap
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PerformanceBound {
    pub radius: f64,
    pub mu_bar: f64,
    pub tr_sigma: f64,
    /// Chosen Young parameter.
    pub young_eps: f64,
    /// `sigma_1..3` at the chosen parameter.
    pub sigma: [f64; 3],
    /// `sigma_bar_1..3` envelopes.
    pub sigma_bar: [f64; 3],
    pub total: f64,
    pub constants: StabilityConstants,
}

/// `sigma_bar_1(eps)`.
pub fn sigma_bar_1(k: &StabilityConstants, lmin_cs: f64, radius: f64) -> f64 {
    let cl4 = 4.0 * k.c_l;
    let a = 32.0 * (k.k2 + k.k32 + k.k4 + k.k5) / lmin_cs * radius.powf(2.0 / 3.0).max(cl4 * radius);
    let b = 4.0 * 2f64.sqrt() * k.k31 / lmin_cs.sqrt() * radius.powf(1.0 / 6.0).max(cl4 * radius.sqrt());
    2.0 * (a + b + k.c2 * radius.cbrt())
}

/// `sigma_bar_2(mu)`.
pub fn sigma_bar_2(k: &StabilityConstants, mu: f64) -> f64 {
    let cl4 = 4.0 * k.c_l;
    let a = 0.25 * k.c_w2 * mu * mu;
    let b = 2.0 * (k.k1 + 2.0 * (k.k2 + k.k32) * k.c_sn * k.c_sn) * mu.powf(1.5).max(cl4 * mu * mu);
    let c = 2.0 * k.k31 * k.c_sn * mu.sqrt().max(cl4 * mu);
    2.0 * (a + b + c + k.c2 * mu.sqrt())
}

/// `sigma_bar_3(tr Sigma)`.
pub fn sigma_bar_3(k: &StabilityConstants, tr: f64) -> f64 {
    let cl4 = 4.0 * k.c_l;
    let a = (2.0 * k.k1 + 4.0 * (k.k4 + k.k5) * k.c_sn * k.c_sn) * tr.sqrt().max(cl4 * tr);
    2.0 * (a + 0.25 * k.c_w2 * tr + k.c2 * tr.sqrt())
}

/// Asymptotic average-cost bound for radius `eps`, mean bound `mu_bar` and
/// covariance-trace bound `tr_sigma`.
pub fn theorem3_bound(inp: &ConstantInputs, radius: f64, mu_bar: f64, tr_sigma: f64) -> Result<PerformanceBound> {
    if !(radius >= 0.0 && mu_bar >= 0.0 && tr_sigma >= 0.0) {
        return Err(Error::InvalidParameter("bound arguments must be nonnegative".into()));
    }
    let e = young_epsilon(inp.c_l(), radius, mu_bar, tr_sigma);
    let k = compute_constants(inp, 1.0, e);
    let f = (1.0 + e) / e;
    let lmin = inp.lmin_cs;
    let csn2 = k.c_sn * k.c_sn;
    let s1 = f * (k.k2 + k.k32 + k.k4 + k.k5) * 16.0 * radius / lmin + f * k.k31 * 2.0 * (2.0 * radius).sqrt() / lmin.sqrt();
    let s2 = f * k.k31 * k.c_sn * mu_bar + 0.25 * e * k.c_w2 * mu_bar * mu_bar + f * (k.k1 + 2.0 * (k.k2 + k.k32) * csn2) * mu_bar * mu_bar;
    let s3 = 0.25 * e * k.c_w2 * tr_sigma + f * (k.k1 + 2.0 * (k.k4 + k.k5) * csn2) * tr_sigma;
    let sb = [sigma_bar_1(&k, lmin, radius), sigma_bar_2(&k, mu_bar), sigma_bar_3(&k, tr_sigma)];
    Ok(PerformanceBound { radius, mu_bar, tr_sigma, young_eps: e, sigma: [s1, s2, s3], sigma_bar: sb, total: sb.iter().sum(), constants: k })
}

/// Worst-case moment bounds over the ambiguity ball.
#[derive(Debug, Clone, Serialize)]
pub struct WorstCaseMomentBounds {
    pub radius: f64,
    pub mu_bar: f64,
    pub tr_sigma: f64,
    pub lmin_cs: f64,
    pub lmax_cs: f64,
    /// Bound on the worst-case mean norm.
    pub mean: f64,
    /// Bound on the worst-case covariance trace.
    pub trace: f64,
}

pub fn gelbrich_report(radius: f64, c_s: &DMatrix<f64>, horizon: usize, mu_bar: f64, sigma_bar: &DMatrix<f64>) -> WorstCaseMomentBounds {
    let ev = sym_eigenvalues(c_s);
    WorstCaseMomentBounds {
        radius,
        mu_bar,
        tr_sigma: sigma_bar.trace(),
        lmin_cs: ev[0],
        lmax_cs: ev[ev.len() - 1],
        mean: gelbrich_mean_bound(radius, c_s, horizon, mu_bar),
        trace: gelbrich_trace_bound(radius, c_s, horizon, sigma_bar),
    }
}

/// Per-realization checkers bound to one setup.
pub struct Auditor<'a> {
    pub setup: &'a Setup,
    pub c1: f64,
    pub c_l: f64,
    pub l_b1: f64,
    pub u_u: f64,
    pub h_sq: f64,
    /// Ambiguity radius the logs were produced with.
    pub radius: f64,
}

impl<'a> Auditor<'a> {
    pub fn new(setup: &'a Setup, radius: f64) -> Result<Self> {
        let inp = ConstantInputs::from_setup(setup)?;
        Ok(Self { setup, c1: c1_constant(&inp), c_l: inp.c_l(), l_b1: inp.l_b1, u_u: inp.u_u, h_sq: inp.h_sq, radius })
    }

    fn stage(&self, x: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.setup.weights.stage_cost(x, v)
    }

    /// `V_q(u, w)` from state `x`.
    pub fn v_q(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let s = self.setup;
        quad(x, &s.weights.q) + quad(&s.lifted.predict(x, u, w), &s.weights.q_bar) + quad(u, &s.weights.r_bar)
    }

    /// `V_c(u, w)` from state `x`.
    pub fn v_c(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let l = &self.setup.lifted;
        let slack = l.b1() * u + l.fd() * w + &l.f * (&l.a_bar * x) + &l.g;
        penalty_value(&self.setup.penalty, &slack)
    }

    /// `||Dbar w||^2_Qbar + 2 (Abar x + Bbar u)' Qbar Dbar w`.
    pub fn g1(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let l = &self.setup.lifted;
        let qb = &self.setup.weights.q_bar;
        let dw = &l.d_bar * w;
        quad(&dw, qb) + 2.0 * (&l.a_bar * x + &l.b_bar * u).dot(&(qb * dw))
    }

    /// RHS minus LHS of the quadratic-cost upper bound at one step.
    pub fn check_prop1(&self, step: &StepRecord, w_bar: &DVector<f64>) -> f64 {
        let lhs = self.v_q(&step.x, &step.plan, w_bar);
        let rhs = self.c_l * self.stage(&step.x, &step.v) + self.g1(&step.x, &step.plan, w_bar) + self.c1;
        rhs - lhs
    }

    /// RHS minus LHS of the one-step recursion for the shifted candidate
    /// `[v_1|k, .., v_{N-1}|k, 0]` started at the realized `x_next` and driven by
    /// the realized `w_next` over the next horizon.
    pub fn check_prop2(&self, step: &StepRecord, x_next: &DVector<f64>, w_next: &DVector<f64>, eps: f64) -> f64 {
        let s = self.setup;
        let (a, b, d) = (&s.model.a, &s.model.b, &s.model.d);
        let (p, q) = (&s.weights.p, &s.weights.q);
        let (n, nu, nw, nx) = (s.lifted.horizon, s.lifted.nu, s.lifted.nw, s.lifted.nx);
        let mut cand = DVector::zeros(n * nu);
        if n > 1 {
            cand.rows_mut(0, (n - 1) * nu).copy_from(&step.plan.rows(nu, (n - 1) * nu));
        }
        let z = s.lifted.predict(&step.x, &step.plan, &DVector::zeros(n * nw));
        let zi = |i: usize| z.rows((i - 1) * nx, nx).into_owned();
        let mut xc = vec![x_next.clone()];
        for i in 0..n {
            let next = a * &xc[i] + b * cand.rows(i * nu, nu) + d * w_next.rows(i * nw, nw);
            xc.push(next);
        }
        let delta: Vec<DVector<f64>> = (0..n).map(|i| &xc[i] - zi(i + 1)).collect();
        let lhs = self.v_q(x_next, &cand, w_next) / (1.0 + eps);
        let dn = &delta[n - 1];
        let g2 = quad(dn, p) + 2.0 * zi(n).dot(&(p * dn));
        let dw = d * w_next.rows((n - 1) * nw, nw);
        let free = a * &xc[n - 1];
        let delta_f = quad(&dw, p) + 2.0 * free.dot(&(p * &dw));
        let sum: f64 = delta[..n - 1].iter().map(|v| quad(v, q)).sum();
        let v0 = self.v_q(&step.x, &step.plan, &DVector::zeros(n * nw));
        let rhs = v0 - self.stage(&step.x, &step.v) + sum / eps + (g2 + delta_f) / (1.0 + eps);
        rhs - lhs
    }

    /// RHS minus LHS of the penalty-cost bound with Young parameter `eps_c1`.
    pub fn check_prop3(&self, step: &StepRecord, w_bar: &DVector<f64>, w_prev: &DVector<f64>, eps_c1: f64) -> f64 {
        let l = &self.setup.lifted;
        let lhs = self.v_c(&step.x, &step.plan, w_bar);
        let fdw = (l.fd() * w_bar).norm_squared();
        let fadw = (&l.f * (&l.a_bar * (&self.setup.model.d * w_prev))).norm_squared();
        let rhs = 3.0 * eps_c1 * self.h_sq + (self.l_b1 * self.l_b1 * self.u_u * self.u_u + fdw + fadw) / (4.0 * eps_c1);
        rhs - lhs
    }

    /// `J(k) - V_q(u*, 0) - V_c(u*, 0)`.
    pub fn check_lemma4(&self, step: &StepRecord) -> f64 {
        let zero = DVector::zeros(self.setup.lifted.horizon * self.setup.lifted.nw);
        step.cost - self.v_q(&step.x, &step.plan, &zero) - self.v_c(&step.x, &step.plan, &zero)
    }

    /// `(sqrt(l_c) ||x|| + relaxation)^2 - ||A^N x + C_AB u||^2`.
    pub fn terminal_margin(&self, step: &StepRecord) -> f64 {
        let zn = self.setup.lifted.terminal(&step.x, &step.plan);
        let r = self.setup.l_c.sqrt() * step.x.norm() + step.terminal_relaxation;
        r * r - zn.norm_squared()
    }

    /// Relative mismatch between the logged successor and `A x + B u + D w`.
    pub fn dynamics_residual(&self, step: &StepRecord, x_next: &DVector<f64>) -> f64 {
        let s = self.setup;
        let pred = s.plant.successor(&step.x, &step.u, &step.w);
        let applied = &s.gain * &step.x + &step.v;
        let input = (&applied - &step.u).norm();
        (&pred - x_next).norm().max(input) / (1.0 + x_next.norm())
    }

    /// Audits one trajectory; `eps` and `eps_c1` are the Young parameters.
    pub fn audit(&self, traj: &Trajectory, eps: f64, eps_c1: f64, tol: f64) -> Vec<AuditRow> {
        let s = self.setup;
        let (n, nw) = (s.lifted.horizon, s.lifted.nw);
        let steps = &traj.steps;
        let stack = |from: usize| -> Option<DVector<f64>> {
            (from + n <= steps.len()).then(|| {
                let mut w = DVector::zeros(n * nw);
                for i in 0..n {
                    w.rows_mut(i * nw, nw).copy_from(&steps[from + i].w);
                }
                w
            })
        };
        let mut rows = Vec::with_capacity(steps.len());
        for (k, st) in steps.iter().enumerate() {
            let x_next = steps.get(k + 1).map_or(&traj.final_state, |n| &n.x);
            let w_bar = stack(k);
            let prop1 = w_bar.as_ref().map(|w| self.check_prop1(st, w));
            let prop2 = stack(k + 1).map(|w| self.check_prop2(st, x_next, &w, eps));
            let prop3 = match (&w_bar, k) {
                (Some(w), k) if k >= 1 => Some(self.check_prop3(st, w, &steps[k - 1].w, eps_c1)),
                _ => None,
            };
            let lemma4 = self.check_lemma4(st);
            let premise = st.zero_distance <= self.radius * (1.0 + 1e-9);
            let terminal = self.terminal_margin(st);
            let dynamics = self.dynamics_residual(st, x_next);
            let logged = (s.constraints.margins(&st.x) - &st.margins).amax();
            let input_ok = s.input_box.contains(&st.u, 1e-7);
            let flagged = [prop1, prop2, prop3].iter().flatten().any(|m| *m < -tol)
                || (premise && lemma4 < -tol)
                || terminal < -1e-8
                || dynamics > 1e-9
                || logged > 1e-9
                || !input_ok;
            rows.push(AuditRow { run: traj.run, k: st.k, prop1, prop2, prop3, lemma4, premise, terminal, dynamics, input_ok, flagged });
        }
        rows
    }
}

/// One audited step. `None` marks a check that needs disturbances past the end of the log.
#[derive(Debug, Clone, Serialize)]
pub struct AuditRow {
    pub run: usize,
    pub k: usize,
    pub prop1: Option<f64>,
    pub prop2: Option<f64>,
    pub prop3: Option<f64>,
    pub lemma4: f64,
    /// Whether the zero distribution lies in the ball at this step, the
    /// premise under which `lemma4 >= 0` is guaranteed.
    pub premise: bool,
    pub terminal: f64,
    pub dynamics: f64,
    pub input_ok: bool,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditSummary {
    pub rows: usize,
    pub flagged: usize,
    pub min_prop1: Option<f64>,
    pub min_prop2: Option<f64>,
    pub min_prop3: Option<f64>,
    pub min_lemma4: Option<f64>,
    /// Steps whose zero-distribution premise fails.
    pub outside_premise: usize,
    /// Steps with a negative `lemma4` margin where the premise fails (not flagged).
    pub lemma4_outside_premise: usize,
    pub min_terminal: Option<f64>,
    pub max_dynamics: Option<f64>,
}

impl AuditSummary {
    pub fn passed(&self) -> bool {
        self.flagged == 0
    }
}

fn fold_min(it: impl Iterator<Item = f64>) -> Option<f64> {
    it.fold(None, |m, v| Some(m.map_or(v, |m: f64| m.min(v))))
}

pub fn summarize(rows: &[AuditRow], tol: f64) -> AuditSummary {
    AuditSummary {
        rows: rows.len(),
        flagged: rows.iter().filter(|r| r.flagged).count(),
        min_prop1: fold_min(rows.iter().filter_map(|r| r.prop1)),
        min_prop2: fold_min(rows.iter().filter_map(|r| r.prop2)),
        min_prop3: fold_min(rows.iter().filter_map(|r| r.prop3)),
        min_lemma4: fold_min(rows.iter().map(|r| r.lemma4)),
        outside_premise: rows.iter().filter(|r| !r.premise).count(),
        lemma4_outside_premise: rows.iter().filter(|r| !r.premise && r.lemma4 < -tol).count(),
        min_terminal: fold_min(rows.iter().map(|r| r.terminal)),
        max_dynamics: fold_min(rows.iter().map(|r| -r.dynamics)).map(|v| -v),
    }
}

/// Per-step margins followed by a `summary` row.
pub fn write_audit(path: &Path, rows: &[AuditRow], summary: &AuditSummary) -> Result<()> {
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v}"));
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["run", "k", "prop1", "prop2", "prop3", "lemma4", "premise", "terminal", "dynamics", "input_ok", "flagged"])?;
    for r in rows {
        wtr.write_record([
            r.run.to_string(),
            r.k.to_string(),
            opt(r.prop1),
            opt(r.prop2),
            opt(r.prop3),
            format!("{}", r.lemma4),
            r.premise.to_string(),
            format!("{}", r.terminal),
            format!("{}", r.dynamics),
            r.input_ok.to_string(),
            r.flagged.to_string(),
        ])?;
    }
    wtr.write_record([
        "summary".to_string(),
        summary.rows.to_string(),
        opt(summary.min_prop1),
        opt(summary.min_prop2),
        opt(summary.min_prop3),
        opt(summary.min_lemma4),
        summary.outside_premise.to_string(),
        opt(summary.min_terminal),
        opt(summary.max_dynamics),
        String::new(),
        summary.flagged.to_string(),
    ])?;
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CostBoundReport {
    pub empirical: f64,
    pub bound: f64,
    pub exceeded: bool,
}

/// Compares the scenario's post-burn-in average stage cost with the bound.
pub fn average_cost_vs_bound(stats: &ScenarioStats, bound: &PerformanceBound) -> CostBoundReport {
    CostBoundReport { empirical: stats.average_cost, bound: bound.total, exceeded: stats.average_cost > bound.total }
}
