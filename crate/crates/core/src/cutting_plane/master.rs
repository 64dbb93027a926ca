//! Assembly of the master relaxation over the current support points and
//! dual vertices.
//!
//! Variables are laid out as `[u (N n_u) | gamma | nu (n) | theta (one per support)]`.

use nalgebra::{DMatrix, DVector};

use crate::convex::{ConvexProgram, NormConstraint};

use super::{CutForm, Support};

pub(super) struct StepData<'a> {
    pub hessian: &'a DMatrix<f64>,
    pub linear_u: DVector<f64>,
    pub radius: f64,
    pub gamma_floor: f64,
    pub xi_samples: Vec<DVector<f64>>,
    /// Probability of each distinct sample.
    pub weights: Vec<f64>,
    pub output_weight: &'a DMatrix<f64>,
    pub input_rows: &'a DMatrix<f64>,
    pub input_upper: DVector<f64>,
    pub input_lower: DVector<f64>,
    pub terminal: Option<NormConstraint>,
    pub b1t: &'a DMatrix<f64>,
    pub cut_form: CutForm,
}

pub(super) struct Layout {
    pub m: usize,
    pub n: usize,
    pub omega: usize,
}

impl Layout {
    pub fn gamma(&self) -> usize {
        self.m
    }

    pub fn nu(&self, s: usize) -> usize {
        self.m + 1 + s
    }

    pub fn theta(&self, w: usize) -> usize {
        self.m + 1 + self.n + w
    }

    pub fn len(&self) -> usize {
        self.m + 1 + self.n + self.omega
    }
}

pub(super) fn transport(form: CutForm, c: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let d = a - b;
    match form {
        CutForm::GammaQuadratic | CutForm::Unscaled => 0.5 * d.dot(&(c * &d)),
        CutForm::GammaNorm => d.norm(),
    }
}

/// Transport coefficient of the support cut `(s, w)`.
pub(super) fn cut_coefficient(data: &StepData, s: usize, sup: &Support) -> f64 {
    transport(data.cut_form, data.output_weight, &data.xi_samples[s], &sup.xi)
}

/// Violation of the support cut `(s, w)` at `z`, relative to its scale.
pub(super) fn cut_violation(data: &StepData, lay: &Layout, z: &DVector<f64>, s: usize, wi: usize, sup: &Support) -> f64 {
    let c = cut_coefficient(data, s, sup);
    let mut lhs = -z[lay.nu(s)] + z[lay.theta(wi)] + sup.lin_u.dot(&z.rows(0, lay.m));
    let rhs = match data.cut_form {
        CutForm::Unscaled => c - sup.offset,
        _ => {
            lhs -= c * z[lay.gamma()];
            -sup.offset
        }
    };
    (lhs - rhs) / (1.0 + rhs.abs())
}

/// What an inequality row of the master stands for; stable across rebuilds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(super) enum RowKey {
    Cut(usize, usize),
    Vertex(usize, usize),
    InputUpper(usize),
    InputLower(usize),
}

/// Master over the support cuts flagged in `active[w][s]` and all vertex cuts.
pub(super) fn build(data: &StepData, supports: &[Support], active: &[Vec<bool>]) -> (ConvexProgram, Layout, Vec<RowKey>) {
    let m = data.hessian.nrows();
    let n = data.xi_samples.len();
    let lay = Layout { m, n, omega: supports.len() };
    let mut p = ConvexProgram::new(lay.len());
    p.hessian.view_mut((0, 0), (m, m)).copy_from(&(data.hessian * 2.0));
    p.linear.rows_mut(0, m).copy_from(&data.linear_u);
    p.linear[lay.gamma()] = data.radius;
    for s in 0..n {
        p.linear[lay.nu(s)] = data.weights[s];
    }
    p.set_bounds(lay.gamma(), data.gamma_floor, f64::INFINITY);
    for w in 0..supports.len() {
        p.set_bounds(lay.theta(w), 0.0, f64::INFINITY);
    }
    let mut keys = Vec::new();
    for (wi, sup) in supports.iter().enumerate() {
        for s in 0..n {
            if !active[wi][s] {
                continue;
            }
            let c = cut_coefficient(data, s, sup);
            let mut terms: Vec<(usize, f64)> = Vec::with_capacity(m + 3);
            terms.push((lay.nu(s), -1.0));
            terms.push((lay.theta(wi), 1.0));
            for j in 0..m {
                terms.push((j, sup.lin_u[j]));
            }
            let rhs = match data.cut_form {
                CutForm::Unscaled => c - sup.offset,
                _ => {
                    terms.push((lay.gamma(), -c));
                    -sup.offset
                }
            };
            p.add_le(terms, rhs);
            keys.push(RowKey::Cut(wi, s));
        }
        for (k, pi) in sup.vertices.iter().enumerate() {
            let coef = data.b1t * pi;
            let mut terms: Vec<(usize, f64)> = Vec::with_capacity(m + 1);
            terms.push((lay.theta(wi), -1.0));
            for j in 0..m {
                terms.push((j, coef[j]));
            }
            p.add_le(terms, -pi.dot(&sup.xi));
            keys.push(RowKey::Vertex(wi, k));
        }
    }
    for r in 0..data.input_rows.nrows() {
        let row: Vec<(usize, f64)> = (0..m).map(|j| (j, data.input_rows[(r, j)])).collect();
        p.add_le(row.clone(), data.input_upper[r]);
        p.add_le(row.into_iter().map(|(j, v)| (j, -v)).collect(), -data.input_lower[r]);
        keys.extend([RowKey::InputUpper(r), RowKey::InputLower(r)]);
    }
    if let Some(t) = &data.terminal {
        let mut mat = DMatrix::zeros(t.matrix.nrows(), lay.len());
        mat.view_mut((0, 0), (t.matrix.nrows(), m)).copy_from(&t.matrix);
        p.norm = Some(NormConstraint { matrix: mat, offset: t.offset.clone(), radius: t.radius });
    }
    (p, lay, keys)
}
