//! Second-stage recourse: the exact-penalty LP
//! `min h'q+ s.t. q+ - q- = s, q+, q- >= 0` and its vertex dual.

use nalgebra::DVector;

use crate::convex::ConvexProgram;
use crate::error::{Error, Result};
use crate::linalg::stack_vec;
use crate::system::LiftedProblem;

/// Strictly positive penalty vector `h` over the lifted constraint rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyWeights(DVector<f64>);

impl PenaltyWeights {
    pub fn new(h: DVector<f64>) -> Result<Self> {
        if h.is_empty() || h.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter("penalty weights must be finite and > 0".into()));
        }
        Ok(Self(h))
    }

    /// Repeats per-row weights over the horizon.
    pub fn per_row(h0: &DVector<f64>, horizon: usize) -> Result<Self> {
        Self::new(stack_vec(h0, horizon))
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Recourse {
    pub value: f64,
    pub q_plus: DVector<f64>,
    pub q_minus: DVector<f64>,
}

/// Solves the recourse LP with the interior-point solver.
pub fn second_stage_lp(h: &PenaltyWeights, s: &DVector<f64>) -> Result<Recourse> {
    let m = h.len();
    if s.len() != m {
        return Err(Error::Dimension(format!("slack has {} rows, penalty has {m}", s.len())));
    }
    let mut prog = ConvexProgram::new(2 * m);
    for i in 0..m {
        prog.linear[i] = h.0[i];
        prog.set_bounds(i, 0.0, f64::INFINITY);
        prog.set_bounds(m + i, 0.0, f64::INFINITY);
        prog.add_eq(vec![(i, 1.0), (m + i, -1.0)], s[i]);
    }
    let sol = prog.solve();
    if !sol.is_optimal() {
        return Err(Error::Solver { status: sol.status });
    }
    Ok(Recourse {
        value: sol.objective,
        q_plus: sol.x.rows(0, m).into_owned(),
        q_minus: sol.x.rows(m, m).into_owned(),
    })
}

/// `h' max(0, s)`.
pub fn penalty_value(h: &PenaltyWeights, s: &DVector<f64>) -> f64 {
    h.0.iter().zip(s.iter()).map(|(hi, si)| hi * si.max(0.0)).sum()
}

/// Maximizing vertex of `{pi : 0 <= pi <= h}` for `pi's`: `h_i` where `s_i > 0`.
pub fn dual_vertex(h: &PenaltyWeights, s: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(s.len(), h.0.iter().zip(s.iter()).map(|(hi, si)| if *si > 0.0 { *hi } else { 0.0 }))
}

/// `F(Abar x + Bbar u + Dbar w) + G`.
pub fn constraint_slack(lifted: &LiftedProblem, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    &lifted.f * lifted.predict(x, u, w) + &lifted.g
}

/// `max_{pi in vertices} pi'(B1 u + F Dbar w + F Abar x + G)`.
pub fn dual_value_representation(h: &PenaltyWeights, lifted: &LiftedProblem, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let s = constraint_slack(lifted, x, u, w);
    dual_vertex(h, &s).dot(&s)
}
