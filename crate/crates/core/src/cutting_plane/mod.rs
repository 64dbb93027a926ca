//! Per-step controller: a cutting-plane loop that alternates a master
//! relaxation, a dual step adding recourse vertices, and a separation step
//! adding worst-case support points.

mod master;

use std::collections::HashMap;

use master::RowKey;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ambiguity::EmpiricalSamples;
use crate::convex::{ConvexProgram, NormConstraint, Solution, WarmStart};
use crate::error::{Error, Result};
use crate::linalg::quad;
use crate::penalty::dual_vertex;
use crate::reformulation::Reformulation;
use crate::system::{InputBox, LtiSystem};

/// Transport-cost cap on new support points, relative to `n * epsilon`, and
/// its growth per outer iteration.
const TRUST_START: f64 = 1.0;
const TRUST_GROWTH: f64 = 4.0;
/// Relative violation at which a pooled support cut joins the master.
const POOL_TOL: f64 = 1e-10;

/// Transport term used in the support cuts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CutForm {
    /// `- gamma * 1/2 ||xi^s - xi^w||_C^2`; a valid lower bound.
    #[default]
    GammaQuadratic,
    /// `- 1/2 ||xi^s - xi^w||_C^2` with no multiplier.
    Unscaled,
    /// `- gamma * ||xi^s - xi^w||_2`.
    GammaNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CuttingPlaneSettings {
    pub tol_cut: f64,
    pub tol_sep: f64,
    pub gamma_margin: f64,
    pub max_outer: usize,
    pub max_master: usize,
    pub ascent_cap: usize,
    pub cut_form: CutForm,
    /// Enlarge the terminal radius when the admissible input set is empty.
    pub relax_terminal: bool,
}

impl Default for CuttingPlaneSettings {
    fn default() -> Self {
        Self {
            tol_cut: 1e-7,
            tol_sep: 1e-6,
            gamma_margin: 1e-6,
            max_outer: 200,
            max_master: 500,
            ascent_cap: 100,
            cut_form: CutForm::GammaQuadratic,
            relax_terminal: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    IterationCap,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveDiagnostics {
    pub outer_iterations: usize,
    pub master_solves: usize,
    pub supports: usize,
    pub vertex_cuts: usize,
    /// Cuts of the full master: `n` support cuts per support plus vertex cuts.
    pub cuts: usize,
    /// Support cuts present in the last master solve (the rest were never violated).
    pub active_cuts: usize,
    pub master_objectives: Vec<f64>,
    pub ipm_iterations: usize,
    pub termination: Termination,
    /// Amount by which the terminal radius was enlarged (0 when feasible).
    pub terminal_relaxation: f64,
}

/// A support point of the relaxation with its recourse vertices.
#[derive(Debug, Clone)]
pub struct Support {
    pub w: DVector<f64>,
    pub xi: DVector<f64>,
    pub vertices: Vec<DVector<f64>>,
    lin_u: DVector<f64>,
    offset: f64,
}

#[derive(Debug, Clone)]
pub struct StepSolution {
    /// Planned input sequence in the controller's coordinates.
    pub u_bar: DVector<f64>,
    pub gamma: f64,
    /// Lower bound from the final master plus the state-only cost terms.
    pub objective: f64,
    /// `f1 + mean V` at the returned point plus the same constant.
    pub upper_bound: f64,
    pub supports: Vec<Support>,
    pub diagnostics: SolveDiagnostics,
}

/// Distributionally robust MPC step solver.
///
/// `system` is the model the controller predicts with (pre-stabilized when a
/// gain is used); the physical input is `u_i = K z_i + v_i` along the
/// nominal prediction `z`.
#[derive(Debug, Clone)]
pub struct Controller {
    pub reform: Reformulation,
    pub system: LtiSystem,
    pub gain: DMatrix<f64>,
    pub input_box: InputBox,
    pub terminal_lc: f64,
    pub settings: CuttingPlaneSettings,
    input_rows: DMatrix<f64>,
    input_state: DMatrix<f64>,
    b1t: DMatrix<f64>,
    bqd2: DMatrix<f64>,
}

impl Controller {
    pub fn new(reform: Reformulation, system: LtiSystem, gain: DMatrix<f64>, input_box: InputBox, terminal_lc: f64, settings: CuttingPlaneSettings) -> Result<Self> {
        let l = &reform.lifted;
        let (nx, nu, n) = (l.nx, l.nu, l.horizon);
        if gain.shape() != (nu, nx) || input_box.lower.len() != nu {
            return Err(Error::Dimension("gain or input box does not match the plant".into()));
        }
        if !(terminal_lc > 0.0) {
            return Err(Error::InvalidParameter("terminal constant l_c must be > 0".into()));
        }
        // z_0..z_{N-1} = Z0 x + B0 u.
        let mut z0 = DMatrix::zeros(n * nx, nx);
        z0.view_mut((0, 0), (nx, nx)).copy_from(&DMatrix::identity(nx, nx));
        if n > 1 {
            z0.view_mut((nx, 0), ((n - 1) * nx, nx)).copy_from(&l.a_bar.view((0, 0), ((n - 1) * nx, nx)));
        }
        let mut b0 = DMatrix::zeros(n * nx, n * nu);
        if n > 1 {
            b0.view_mut((nx, 0), ((n - 1) * nx, n * nu)).copy_from(&l.b_bar.view((0, 0), ((n - 1) * nx, n * nu)));
        }
        let kbar = crate::linalg::repeat_diag(&gain, n);
        let input_rows = &kbar * b0 + DMatrix::identity(n * nu, n * nu);
        let input_state = kbar * z0;
        let b1t = reform.b1().transpose();
        let bqd2 = l.b_bar.transpose() * reform.qd() * 2.0;
        let mut reform = reform;
        reform.ascent_cap = settings.ascent_cap;
        Ok(Self { reform, system, gain, input_box, terminal_lc, settings, input_rows, input_state, b1t, bqd2 })
    }

    pub fn horizon(&self) -> usize {
        self.reform.lifted.horizon
    }

    /// Physical inputs `K z_i + v_i` along the nominal prediction.
    pub fn physical_inputs(&self, x: &DVector<f64>, u_bar: &DVector<f64>) -> DVector<f64> {
        &self.input_rows * u_bar + &self.input_state * x
    }

    fn terminal_constraint(&self, x: &DVector<f64>, radius: f64) -> NormConstraint {
        NormConstraint { matrix: self.reform.lifted.c_ab.clone(), offset: &self.reform.lifted.a_pow_n * x, radius }
    }

    fn input_bounds(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.horizon();
        let off = &self.input_state * x;
        let up = crate::linalg::stack_vec(&self.input_box.upper, n) - &off;
        let lo = crate::linalg::stack_vec(&self.input_box.lower, n) - &off;
        (lo, up)
    }

    /// Minimum of `||A^N x + C_AB u||` over the input box.
    pub fn min_terminal_norm(&self, x: &DVector<f64>) -> Result<f64> {
        let m = self.input_rows.ncols();
        let (lo, up) = self.input_bounds(x);
        let mut p = ConvexProgram::new(m);
        let c = &self.reform.lifted.c_ab;
        let a = &self.reform.lifted.a_pow_n * x;
        p.hessian = c.transpose() * c * 2.0;
        p.linear = c.transpose() * &a * 2.0;
        p.constant = a.norm_squared();
        for r in 0..m {
            let row: Vec<(usize, f64)> = (0..m).map(|j| (j, self.input_rows[(r, j)])).collect();
            p.add_le(row.clone(), up[r]);
            p.add_le(row.into_iter().map(|(j, v)| (j, -v)).collect(), -lo[r]);
        }
        let sol = p.solve();
        match sol.status {
            crate::convex::SolveStatus::Optimal => Ok(sol.objective.max(0.0).sqrt()),
            crate::convex::SolveStatus::Infeasible => Err(Error::EmptyInputSet { min_norm: f64::INFINITY, radius: 0.0 }),
            status => Err(Error::Solver { status }),
        }
    }

    fn make_support(&self, x: &DVector<f64>, w: DVector<f64>, xi: DVector<f64>) -> Support {
        let r = &self.reform;
        let dw = &r.lifted.d_bar * &w;
        let ax = &r.lifted.a_bar * x;
        let lin_u = &self.bqd2 * &w;
        let offset = quad(&dw, &r.weights.q_bar) + 2.0 * ax.dot(&(&r.weights.q_bar * &dw));
        Support { w, xi, vertices: Vec::new(), lin_u, offset }
    }

    /// Solves one step from state `x` with the given empirical samples.
    pub fn solve_step(&self, x: &DVector<f64>, samples: &EmpiricalSamples) -> Result<StepSolution> {
        let r = &self.reform;
        let st = &self.settings;
        let nw_total = r.lifted.horizon * r.lifted.nw;
        if x.len() != r.lifted.nx || samples.samples.iter().any(|s| s.len() != nw_total) {
            return Err(Error::Dimension("state or sample length".into()));
        }
        let mut radius = self.terminal_lc.sqrt() * x.norm();
        let min_norm = self.min_terminal_norm(x)?;
        let mut relaxation = 0.0;
        if min_norm > radius * (1.0 + 1e-9) + 1e-12 {
            if !st.relax_terminal {
                return Err(Error::EmptyInputSet { min_norm, radius });
            }
            let relaxed = min_norm * (1.0 + 1e-6) + 1e-9;
            relaxation = relaxed - radius;
            radius = relaxed;
        }
        let (input_lower, input_upper) = self.input_bounds(x);
        // Repeated samples collapse into one weighted atom; the master then
        // carries one epigraph variable per distinct sample.
        let mut atoms: Vec<DVector<f64>> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let unit = 1.0 / samples.len() as f64;
        for w in &samples.samples {
            match atoms.iter().position(|a| a == w) {
                Some(k) => weights[k] += unit,
                None => {
                    atoms.push(w.clone());
                    weights.push(unit);
                }
            }
        }
        let atoms = EmpiricalSamples { samples: atoms };
        let xi_samples = atoms.outputs(&r.lifted, x);
        let data = master::StepData {
            hessian: r.input_hessian(),
            linear_u: r.lifted.b_bar.transpose() * (&r.weights.q_bar * (&r.lifted.a_bar * x)) * 2.0,
            radius: r.ambiguity.radius,
            gamma_floor: r.gamma.floor,
            xi_samples,
            weights,
            output_weight: &r.ambiguity.output_weight,
            input_rows: &self.input_rows,
            input_upper,
            input_lower,
            terminal: Some(self.terminal_constraint(x, radius)),
            b1t: &self.b1t,
            cut_form: st.cut_form,
        };
        let mut supports: Vec<Support> = Vec::new();
        // Support cuts enter the master lazily: a cut joins once it is violated
        // by a master solution, so each converged master equals the full one.
        let mut active: Vec<Vec<bool>> = Vec::new();
        for (s, (w, xi)) in atoms.samples.iter().zip(&data.xi_samples).enumerate() {
            if let Some(k) = supports.iter().position(|sup| &sup.w == w) {
                active[k][s] = true;
            } else {
                supports.push(self.make_support(x, w.clone(), xi.clone()));
                let mut row = vec![false; atoms.len()];
                row[s] = true;
                active.push(row);
            }
        }
        let constant = r.constant_term(x);
        let mut diag = SolveDiagnostics {
            outer_iterations: 0,
            master_solves: 0,
            supports: 0,
            vertex_cuts: 0,
            cuts: 0,
            active_cuts: 0,
            master_objectives: Vec::new(),
            ipm_iterations: 0,
            termination: Termination::Converged,
            terminal_relaxation: relaxation,
        };
        let n = atoms.len();
        let mut last: Option<(Solution, Vec<RowKey>)> = None;
        loop {
            diag.outer_iterations += 1;
            if diag.outer_iterations > st.max_outer {
                return Err(self.cap(diag, &supports, n));
            }
            // Master and dual step until no vertex or pooled cut is violated.
            let (z, lay) = loop {
                diag.master_solves += 1;
                if diag.master_solves > st.max_master {
                    return Err(self.cap(diag, &supports, n));
                }
                let (prog, lay, keys) = master::build(&data, &supports, &active);
                let sol = match &last {
                    Some((prev, prev_keys)) => prog.solve_from(&carry_over(prev, prev_keys, &keys)),
                    _ => prog.solve(),
                };
                diag.ipm_iterations += sol.iterations;
                if !sol.is_optimal() {
                    return Err(Error::Solver { status: sol.status });
                }
                last = Some((sol.clone(), keys));
                let (sol, _) = last.as_ref().unwrap();
                let mut pooled = false;
                for (wi, sup) in supports.iter().enumerate() {
                    for s in 0..n {
                        if !active[wi][s] && master::cut_violation(&data, &lay, &sol.x, s, wi, sup) > POOL_TOL {
                            active[wi][s] = true;
                            pooled = true;
                        }
                    }
                }
                if pooled {
                    continue;
                }
                diag.master_objectives.push(sol.objective);
                let u = sol.x.rows(0, lay.m).into_owned();
                let mut added = false;
                for (wi, sup) in supports.iter_mut().enumerate() {
                    let s = r.b1() * &u + &sup.xi;
                    let pi = dual_vertex(&r.penalty, &s);
                    let val = pi.dot(&s);
                    let theta = sol.x[lay.theta(wi)];
                    if val > theta + st.tol_cut * (1.0 + theta.abs()) && !sup.vertices.contains(&pi) && pi.iter().any(|v| *v != 0.0) {
                        sup.vertices.push(pi);
                        added = true;
                    }
                }
                if !added {
                    break (sol.clone(), lay);
                }
            };
            let u = z.x.rows(0, lay.m).into_owned();
            let gamma = z.x[lay.gamma()].max(r.gamma.floor);
            let trust = TRUST_START * (samples.len() as f64 * r.ambiguity.radius).max(f64::MIN_POSITIVE) * TRUST_GROWTH.powi(diag.outer_iterations as i32 - 1);
            let mut new_supports: Vec<Support> = Vec::new();
            let mut new_active: Vec<Vec<bool>> = Vec::new();
            let mut v_sum = 0.0;
            for (s, w_s) in atoms.samples.iter().enumerate() {
                let full = r.eval_v(&u, gamma, x, w_s)?;
                v_sum += data.weights[s] * full.value;
                let nu = z.x[lay.nu(s)];
                let violated = |v: f64| v > nu + st.tol_cut * (1.0 + nu.abs());
                if !violated(full.value) {
                    continue;
                }
                // Far maximizers (gamma near its floor) give badly scaled cuts;
                // a violated point on the way there is an equally valid cut.
                let dist = r.ambiguity.transport_cost(&full.w, w_s);
                let mut cap = trust;
                let mut inner = None;
                while cap < dist {
                    let t = (cap / dist).sqrt();
                    let near = r.evaluate_at(&u, gamma, x, w_s, w_s + (&full.w - w_s) * t);
                    if violated(near.value) {
                        inner = Some(near);
                        break;
                    }
                    cap *= TRUST_GROWTH * TRUST_GROWTH;
                }
                let inner = inner.unwrap_or(full);
                let c = &r.ambiguity.output_weight;
                let dist_ok = |sup: &Support| {
                    let d = &sup.xi - &inner.xi;
                    d.dot(&(c * &d)).sqrt() > st.tol_sep * (1.0 + inner.xi.dot(&(c * &inner.xi)).sqrt())
                };
                if supports.iter().chain(new_supports.iter()).all(dist_ok) {
                    let mut sup = self.make_support(x, inner.w.clone(), inner.xi.clone());
                    if inner.pi.iter().any(|v| *v != 0.0) {
                        sup.vertices.push(inner.pi.clone());
                    }
                    new_supports.push(sup);
                    let mut row = vec![false; n];
                    row[s] = true;
                    new_active.push(row);
                }
            }
            if new_supports.is_empty() {
                diag.supports = supports.len();
                diag.vertex_cuts = supports.iter().map(|s| s.vertices.len()).sum();
                diag.cuts = diag.vertex_cuts + n * supports.len();
                diag.active_cuts = active.iter().flatten().filter(|a| **a).count();
                let upper = r.first_stage_cost(&u, gamma, x) + v_sum + constant;
                return Ok(StepSolution { u_bar: u, gamma, objective: z.objective + constant, upper_bound: upper, supports, diagnostics: diag });
            }
            supports.extend(new_supports);
            active.extend(new_active);
        }
    }

    fn cap(&self, mut diag: SolveDiagnostics, supports: &[Support], n: usize) -> Error {
        diag.termination = Termination::IterationCap;
        diag.outer_iterations = diag.outer_iterations.min(self.settings.max_outer);
        diag.master_solves = diag.master_solves.min(self.settings.max_master);
        diag.supports = supports.len();
        diag.vertex_cuts = supports.iter().map(|s| s.vertices.len()).sum();
        diag.cuts = diag.vertex_cuts + n * supports.len();
        Error::IterationCap(Box::new(diag))
    }
}

/// Previous master solution as a warm start for the next one: variables keep
/// their index, row duals follow their key, new rows start at zero.
fn carry_over(prev: &Solution, prev_keys: &[RowKey], keys: &[RowKey]) -> WarmStart {
    let dual: HashMap<RowKey, f64> = prev_keys.iter().copied().zip(prev.inequality_duals.iter().copied()).collect();
    let mut ws = WarmStart::from_solution(prev);
    ws.inequality_duals = DVector::from_iterator(keys.len(), keys.iter().map(|k| dual.get(k).copied().unwrap_or(0.0)));
    ws
}
