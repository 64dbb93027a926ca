//! Finite convex reformulation of the worst-case expectation over the ball,
//! and the inner worst-case evaluation used by the separation step.
//!
//! For a sample `w^s` and multiplier `gamma`, the inner problem is
//!
//! ```text
//! V(u, gamma; w^s) = max_w  ||Dbar w||^2_Qbar + 2 (Abar x + Bbar u)' Qbar Dbar w
//!                            + V_c(u, w) - gamma c(w, w^s)
//! ```
//!
//! With `V_c(u, w) = max_pi pi's(w)` over the recourse dual vertices, each
//! fixed `pi` gives a concave quadratic in `w` maximized at
//! `w* = C1^-1 C2`, `C1 = gamma C_s - 2 Dbar'Qbar Dbar`,
//! `C2 = C0 + (F Dbar)' pi`, `C0 = 2 Dbar'Qbar (Abar x + Bbar u) + gamma C_s w^s`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::ambiguity::AmbiguitySet;
use crate::error::{Error, Result};
use crate::linalg::{self, quad};
use crate::penalty::{dual_vertex, penalty_value, PenaltyWeights};
use crate::system::{CostWeights, LiftedProblem};

/// Most penalized rows for which the inner maximum enumerates every vertex.
pub const ENUMERATION_LIMIT: usize = 16;

/// `gamma > lower` keeps `C1` positive definite; `floor` adds a relative margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaDomain {
    pub lower: f64,
    pub floor: f64,
}

impl GammaDomain {
    pub fn new(lower: f64, margin: f64) -> Self {
        let floor = if lower > 0.0 { lower * (1.0 + margin) } else { margin };
        Self { lower, floor }
    }

    pub fn check(&self, gamma: f64) -> Result<()> {
        if gamma.is_finite() && gamma >= self.floor * (1.0 - 1e-12) && gamma > self.lower {
            Ok(())
        } else {
            Err(Error::GammaDomain { gamma, floor: self.floor })
        }
    }
}

/// `lambda_max(C_s^-1/2 (2 Dbar'Qbar Dbar) C_s^-1/2)`.
pub fn gamma_lower_bound(lifted: &LiftedProblem, weights: &CostWeights, c_s: &DMatrix<f64>) -> Result<f64> {
    let chol = linalg::cholesky(c_s, "C_s")?;
    let m = (lifted.d_bar.transpose() * &weights.q_bar * &lifted.d_bar) * 2.0;
    let l = chol.l();
    let li_m = l.solve_lower_triangular(&m).ok_or(Error::NotPositiveDefinite("C_s"))?;
    let s = l.solve_lower_triangular(&li_m.transpose()).ok_or(Error::NotPositiveDefinite("C_s"))?;
    Ok(linalg::lambda_max(&s).max(0.0))
}

/// Result of the inner worst-case evaluation for one sample.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub value: f64,
    pub pi: DVector<f64>,
    pub w: DVector<f64>,
    pub xi: DVector<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct Reformulation {
    pub lifted: LiftedProblem,
    pub weights: CostWeights,
    pub penalty: PenaltyWeights,
    pub ambiguity: AmbiguitySet,
    pub gamma: GammaDomain,
    pub ascent_cap: usize,
    fd: DMatrix<f64>,
    b1: DMatrix<f64>,
    fa: DMatrix<f64>,
    dqd2: DMatrix<f64>,
    qd: DMatrix<f64>,
    hu: DMatrix<f64>,
}

impl Reformulation {
    pub fn new(lifted: LiftedProblem, weights: CostWeights, penalty: PenaltyWeights, ambiguity: AmbiguitySet, gamma_margin: f64) -> Result<Self> {
        if penalty.len() != lifted.horizon * lifted.nc {
            return Err(Error::Dimension(format!("penalty has {} entries, expected {}", penalty.len(), lifted.horizon * lifted.nc)));
        }
        if weights.q.nrows() != lifted.nx || weights.r.nrows() != lifted.nu {
            return Err(Error::Dimension("weights do not match the plant".into()));
        }
        let lower = gamma_lower_bound(&lifted, &weights, &ambiguity.c_s)?;
        let fd = lifted.fd();
        let b1 = lifted.b1();
        let fa = &lifted.f * &lifted.a_bar;
        let qd = &weights.q_bar * &lifted.d_bar;
        let dqd2 = linalg::symmetrize(&(lifted.d_bar.transpose() * &qd * 2.0));
        let hu = linalg::symmetrize(&(lifted.b_bar.transpose() * &weights.q_bar * &lifted.b_bar + &weights.r_bar));
        Ok(Self { lifted, weights, penalty, ambiguity, gamma: GammaDomain::new(lower, gamma_margin), ascent_cap: 100, fd, b1, fa, dqd2, qd, hu })
    }

    pub fn fd(&self) -> &DMatrix<f64> {
        &self.fd
    }

    pub fn b1(&self) -> &DMatrix<f64> {
        &self.b1
    }

    /// `Bbar'Qbar Bbar + Rbar`.
    pub fn input_hessian(&self) -> &DMatrix<f64> {
        &self.hu
    }

    /// `Qbar Dbar`.
    pub fn qd(&self) -> &DMatrix<f64> {
        &self.qd
    }

    /// `F Abar x + G`.
    pub fn output_offset(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.fa * x + &self.lifted.g
    }

    /// `||u||^2_{Bbar'Qbar Bbar + Rbar} + 2 (Abar x)'Qbar Bbar u + eps gamma`.
    pub fn first_stage_cost(&self, u: &DVector<f64>, gamma: f64, x: &DVector<f64>) -> f64 {
        let ax = &self.lifted.a_bar * x;
        quad(u, &self.hu) + 2.0 * ax.dot(&(&self.weights.q_bar * (&self.lifted.b_bar * u))) + self.ambiguity.radius * gamma
    }

    /// `||x||^2_Q + ||Abar x||^2_Qbar`, the part of the cost fixed by the state.
    pub fn constant_term(&self, x: &DVector<f64>) -> f64 {
        quad(x, &self.weights.q) + quad(&(&self.lifted.a_bar * x), &self.weights.q_bar)
    }

    /// Quadratic stage cost over the horizon, `V_q(u, w)`.
    pub fn v_q(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
        quad(x, &self.weights.q) + quad(&self.lifted.predict(x, u, w), &self.weights.q_bar) + quad(u, &self.weights.r_bar)
    }

    /// Recourse penalty `V_c(u, w)`.
    pub fn v_c(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
        penalty_value(&self.penalty, &self.slack(x, u, w))
    }

    /// `B1 u + F Dbar w + F Abar x + G`.
    pub fn slack(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        &self.b1 * u + &self.fd * w + self.output_offset(x)
    }

    /// `gamma C_s - 2 Dbar'Qbar Dbar` (no domain check).
    pub fn c1(&self, gamma: f64) -> DMatrix<f64> {
        &self.ambiguity.c_s * gamma - &self.dqd2
    }

    pub fn c0(&self, u: &DVector<f64>, gamma: f64, x: &DVector<f64>, w_s: &DVector<f64>) -> DVector<f64> {
        let nominal = &self.lifted.a_bar * x + &self.lifted.b_bar * u;
        self.qd.transpose() * nominal * 2.0 + &self.ambiguity.c_s * w_s * gamma
    }

    fn c1_cholesky(&self, gamma: f64) -> Result<Cholesky<f64, Dyn>> {
        self.gamma.check(gamma)?;
        Cholesky::new(self.c1(gamma)).ok_or(Error::GammaDomain { gamma, floor: self.gamma.floor })
    }

    /// Objective of the inner problem at an arbitrary `w`, with the exact penalty.
    pub fn inner_objective(&self, u: &DVector<f64>, gamma: f64, x: &DVector<f64>, w_s: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let nominal = &self.lifted.a_bar * x + &self.lifted.b_bar * u;
        let dw = &self.lifted.d_bar * w;
        quad(&dw, &self.weights.q_bar) + 2.0 * nominal.dot(&(&self.weights.q_bar * &dw)) + self.v_c(x, u, w)
            - gamma * self.ambiguity.transport_cost(w, w_s)
    }

    /// Closed-form maximizer over `w` for a fixed dual vertex `pi`.
    pub fn inner_for_vertex(&self, u: &DVector<f64>, gamma: f64, x: &DVector<f64>, w_s: &DVector<f64>, pi: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let chol = self.c1_cholesky(gamma)?;
        let c0 = self.c0(u, gamma, x, w_s);
        let base = &self.b1 * u + self.output_offset(x);
        Ok(self.vertex_value(&chol, &c0, &base, gamma, w_s, pi))
    }

    fn vertex_value(&self, chol: &Cholesky<f64, Dyn>, c0: &DVector<f64>, base: &DVector<f64>, gamma: f64, w_s: &DVector<f64>, pi: &DVector<f64>) -> (f64, DVector<f64>) {
        let c2 = c0 + self.fd.transpose() * pi;
        let w = chol.solve(&c2);
        let value = 0.5 * c2.dot(&w) + pi.dot(base) - 0.5 * gamma * quad(w_s, &self.ambiguity.c_s);
        (value, w)
    }

    /// Global maximum of the inner problem. With `y = C1^-1 C0` and
    /// `M = F Dbar C1^-1 (F Dbar)'` the vertex value is the convex quadratic
    /// `pi'(F Dbar y + base) + 1/2 pi'M pi` plus a constant, so its maximum over
    /// the box vertices is found by Gray-code enumeration when there are at
    /// most `ENUMERATION_LIMIT` penalized rows, and by coordinate ascent from
    /// several starts otherwise.
    pub fn eval_v(&self, u: &DVector<f64>, gamma: f64, x: &DVector<f64>, w_s: &DVector<f64>) -> Result<InnerSolution> {
        let chol = self.c1_cholesky(gamma)?;
        let c0 = self.c0(u, gamma, x, w_s);
        let base = &self.b1 * u + self.output_offset(x);
        let h = self.penalty.vector();
        let rows: Vec<usize> = (0..h.len()).filter(|i| h[*i] > 0.0).collect();
        if rows.len() <= ENUMERATION_LIMIT {
            let pi = self.enumerate_vertices(&chol, &c0, &base, &rows);
            let (value, w) = self.vertex_value(&chol, &c0, &base, gamma, w_s, &pi);
            return Ok(self.finish(value, pi, w, &base, u, 1 << rows.len()));
        }
        let mut starts = vec![dual_vertex(&self.penalty, &(&base + &self.fd * w_s))];
        for cand in [DVector::zeros(h.len()), h.clone()] {
            if !starts.contains(&cand) {
                starts.push(cand);
            }
        }
        let mut best: Option<InnerSolution> = None;
        for pi0 in starts {
            let sol = self.ascend(&chol, &c0, &base, u, gamma, w_s, pi0)?;
            if best.as_ref().is_none_or(|b| sol.value > b.value) {
                best = Some(sol);
            }
        }
        Ok(best.expect("at least one start"))
    }

    fn enumerate_vertices(&self, chol: &Cholesky<f64, Dyn>, c0: &DVector<f64>, base: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
        let h = self.penalty.vector();
        let k = rows.len();
        let fd = self.fd.select_rows(rows);
        let a = &fd * chol.solve(c0) + base.select_rows(rows);
        let m = &fd * chol.solve(&fd.transpose());
        let mut on = vec![false; k];
        let mut q = DVector::<f64>::zeros(k);
        let (mut val, mut best, mut best_on) = (0.0, 0.0, on.clone());
        for step in 1u64..(1u64 << k) {
            let i = step.trailing_zeros() as usize;
            let hi = h[rows[i]];
            let sign = if on[i] { -1.0 } else { 1.0 };
            val += sign * hi * (a[i] + q[i]) + 0.5 * hi * hi * m[(i, i)];
            q.axpy(sign * hi, &m.column(i), 1.0);
            on[i] = !on[i];
            if val > best {
                best = val;
                best_on.copy_from_slice(&on);
            }
        }
        let mut pi = DVector::zeros(h.len());
        for (j, r) in rows.iter().enumerate() {
            if best_on[j] {
                pi[*r] = h[*r];
            }
        }
        pi
    }

    #[allow(clippy::too_many_arguments)]
    fn ascend(&self, chol: &Cholesky<f64, Dyn>, c0: &DVector<f64>, base: &DVector<f64>, u: &DVector<f64>, gamma: f64, w_s: &DVector<f64>, pi0: DVector<f64>) -> Result<InnerSolution> {
        let mut pi = pi0;
        let (mut value, mut w) = self.vertex_value(chol, c0, base, gamma, w_s, &pi);
        for it in 1..=self.ascent_cap {
            let s = base + &self.fd * &w;
            let next = dual_vertex(&self.penalty, &s);
            if next == pi {
                return Ok(self.finish(value, pi, w, base, u, it));
            }
            let (v2, w2) = self.vertex_value(chol, c0, base, gamma, w_s, &next);
            if v2 <= value {
                // A tie between vertices; the current point is already a fixed point in value.
                return Ok(self.finish(value, pi, w, base, u, it));
            }
            pi = next;
            value = v2;
            w = w2;
        }
        Err(Error::AscentCap(self.ascent_cap))
    }

    /// Inner objective, active vertex and output at a given `w`.
    pub fn evaluate_at(&self, u: &DVector<f64>, gamma: f64, x: &DVector<f64>, w_s: &DVector<f64>, w: DVector<f64>) -> InnerSolution {
        let base = &self.b1 * u + self.output_offset(x);
        let pi = dual_vertex(&self.penalty, &(&base + &self.fd * &w));
        let value = self.inner_objective(u, gamma, x, w_s, &w);
        self.finish(value, pi, w, &base, u, 0)
    }

    fn finish(&self, value: f64, pi: DVector<f64>, w: DVector<f64>, base: &DVector<f64>, u: &DVector<f64>, iterations: usize) -> InnerSolution {
        // xi excludes the input term: xi = F Dbar w + F Abar x + G.
        let xi = &self.fd * &w + base - &self.b1 * u;
        InnerSolution { value, pi, w, xi, iterations }
    }
}
