//! Convex quadratic programs with linear constraints, variable bounds and at
//! most one Euclidean-norm constraint, solved by a primal-dual interior-point
//! method.
//!
//! Problem form:
//!
//! ```text
//! minimize    1/2 z'Hz + c'z + c0
//! subject to  a_i'z <= b_i,  e_j'z = f_j,  lo <= z <= hi,
//!             ||M z + m0||_2 <= r
//! ```

mod cones;
mod dump;
mod ipm;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub use dump::parse_standard_form;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn new(terms: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self { terms, rhs }
    }

    pub fn eval(&self, z: &DVector<f64>) -> f64 {
        self.terms.iter().map(|&(i, v)| v * z[i]).sum()
    }
}

/// `||matrix z + offset||_2 <= radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormConstraint {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexProgram {
    n: usize,
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
    pub inequalities: Vec<LinearRow>,
    pub equalities: Vec<LinearRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub norm: Option<NormConstraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericalFailure,
}

/// Residuals of the returned point in the units of the original program.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct KktResiduals {
    /// Largest constraint violation.
    pub primal: f64,
    /// Stationarity residual relative to `1 + ||c||_inf`.
    pub dual: f64,
    /// Complementarity relative to `1 + |objective|`.
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub objective: f64,
    pub residuals: KktResiduals,
    pub iterations: usize,
    /// Multipliers of `inequalities`, in order.
    pub inequality_duals: DVector<f64>,
    /// Multipliers of `equalities`, in order.
    pub equality_duals: DVector<f64>,
    /// Multipliers of the finite lower and upper bounds (zero elsewhere).
    pub lower_duals: DVector<f64>,
    pub upper_duals: DVector<f64>,
    /// Multiplier of the norm constraint, `(t, v)` with `||v|| <= t`; empty without one.
    pub norm_dual: DVector<f64>,
}

/// Starting point taken from a related solve, in the units of the program.
/// Shorter vectors are padded with zeros, so variables and rows appended
/// since the previous solve start at zero.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub x: DVector<f64>,
    pub inequality_duals: DVector<f64>,
    pub lower_duals: DVector<f64>,
    pub upper_duals: DVector<f64>,
    pub norm_dual: DVector<f64>,
}

impl WarmStart {
    pub fn from_solution(sol: &Solution) -> Self {
        Self {
            x: sol.x.clone(),
            inequality_duals: sol.inequality_duals.clone(),
            lower_duals: sol.lower_duals.clone(),
            upper_duals: sol.upper_duals.clone(),
            norm_dual: sol.norm_dual.clone(),
        }
    }
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    pub max_iterations: usize,
    pub feasibility_tol: f64,
    pub gap_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { max_iterations: 120, feasibility_tol: 1e-10, gap_tol: 1e-10 }
    }
}

impl ConvexProgram {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            hessian: DMatrix::zeros(n, n),
            linear: DVector::zeros(n),
            constant: 0.0,
            inequalities: Vec::new(),
            equalities: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            norm: None,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn add_le(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.inequalities.push(LinearRow::new(terms, rhs));
    }

    pub fn add_eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push(LinearRow::new(terms, rhs));
    }

    pub fn set_bounds(&mut self, i: usize, lo: f64, hi: f64) {
        self.lower[i] = lo;
        self.upper[i] = hi;
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.hessian * z)) + self.linear.dot(z) + self.constant
    }

    /// Largest violation of any constraint at `z`.
    pub fn max_violation(&self, z: &DVector<f64>) -> f64 {
        let mut v: f64 = 0.0;
        for r in &self.inequalities {
            v = v.max(r.eval(z) - r.rhs);
        }
        for r in &self.equalities {
            v = v.max((r.eval(z) - r.rhs).abs());
        }
        for i in 0..self.n {
            v = v.max(self.lower[i] - z[i]).max(z[i] - self.upper[i]);
        }
        if let Some(nc) = &self.norm {
            v = v.max((&nc.matrix * z + &nc.offset).norm() - nc.radius);
        }
        v
    }

    /// Largest violation with each row divided by `max(1, ||row||_inf)`.
    pub fn scaled_violation(&self, z: &DVector<f64>) -> f64 {
        let amax = |r: &LinearRow| r.terms.iter().fold(1.0_f64, |a, t| a.max(t.1.abs()));
        let mut v: f64 = 0.0;
        for r in &self.inequalities {
            v = v.max((r.eval(z) - r.rhs) / amax(r));
        }
        for r in &self.equalities {
            v = v.max((r.eval(z) - r.rhs).abs() / amax(r));
        }
        for i in 0..self.n {
            v = v.max(self.lower[i] - z[i]).max(z[i] - self.upper[i]);
        }
        if let Some(nc) = &self.norm {
            v = v.max(((&nc.matrix * z + &nc.offset).norm() - nc.radius) / nc.matrix.amax().max(1.0));
        }
        v.max(0.0)
    }

    /// Checks shapes, finiteness and positive semidefiniteness of the Hessian.
    pub fn validate(&self) -> Result<(), String> {
        if self.hessian.shape() != (self.n, self.n) || self.linear.len() != self.n {
            return Err("objective dimensions".into());
        }
        if self.lower.len() != self.n || self.upper.len() != self.n {
            return Err("bound dimensions".into());
        }
        if self.hessian.iter().chain(self.linear.iter()).any(|v| !v.is_finite()) || !self.constant.is_finite() {
            return Err("non-finite objective".into());
        }
        for r in self.inequalities.iter().chain(self.equalities.iter()) {
            if r.terms.iter().any(|&(i, v)| i >= self.n || !v.is_finite()) || !r.rhs.is_finite() {
                return Err("bad constraint row".into());
            }
        }
        for i in 0..self.n {
            if self.lower[i] > self.upper[i] || self.lower[i].is_nan() || self.upper[i].is_nan() {
                return Err(format!("bounds of variable {i}"));
            }
        }
        if let Some(nc) = &self.norm {
            if nc.matrix.ncols() != self.n || nc.matrix.nrows() != nc.offset.len() || !(nc.radius >= 0.0) {
                return Err("norm constraint".into());
            }
        }
        let asym = (&self.hessian - self.hessian.transpose()).amax();
        if asym > 1e-9 * (1.0 + self.hessian.amax()) {
            return Err("hessian not symmetric".into());
        }
        if self.n > 0 && crate::linalg::lambda_min(&self.hessian) < -1e-9 * (1.0 + self.hessian.amax()) {
            return Err("hessian not positive semidefinite".into());
        }
        Ok(())
    }

    pub fn solve(&self) -> Solution {
        self.solve_with(&SolverSettings::default())
    }

    pub fn solve_with(&self, settings: &SolverSettings) -> Solution {
        ipm::solve(self, settings, None)
    }

    /// Solves from a warm start; falls back to a cold start if that fails.
    pub fn solve_from(&self, start: &WarmStart) -> Solution {
        let settings = SolverSettings::default();
        let sol = ipm::solve(self, &settings, Some(start));
        if sol.is_optimal() {
            return sol;
        }
        let cold = ipm::solve(self, &settings, None);
        Solution { iterations: cold.iterations + sol.iterations, ..cold }
    }

    pub fn to_standard_form_text(&self) -> String {
        dump::write_standard_form(self)
    }
}
