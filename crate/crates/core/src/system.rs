//! Plant model, lifted prediction matrices, Riccati terminal ingredients and
//! the structural checks that gate controller construction.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, all_finite, mat_pow, rank, repeat_diag, spectral_norm, stack_vec};

/// Discrete-time LTI plant `x+ = A x + B u + D w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || d.nrows() != n {
            return Err(Error::Dimension(format!(
                "A is {}x{}, B is {}x{}, D is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        if n == 0 || b.ncols() == 0 || d.ncols() == 0 {
            return Err(Error::Dimension("empty state, input or disturbance".into()));
        }
        for (m, name) in [(&a, "A"), (&b, "B"), (&d, "D")] {
            if !all_finite(m) {
                return Err(Error::NonFinite(name));
            }
        }
        Ok(Self { a, b, d })
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn nw(&self) -> usize {
        self.d.ncols()
    }

    /// `A x + B u`, the disturbance-free successor.
    pub fn nominal(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    pub fn successor(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        self.nominal(x, u) + &self.d * w
    }
}

/// Polytopic state constraint `F0 x + G0 <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateConstraints {
    pub f0: DMatrix<f64>,
    pub g0: DVector<f64>,
}

impl StateConstraints {
    pub fn new(f0: DMatrix<f64>, g0: DVector<f64>) -> Result<Self> {
        if f0.nrows() != g0.len() || f0.nrows() == 0 {
            return Err(Error::Dimension(format!("F0 has {} rows, G0 has {}", f0.nrows(), g0.len())));
        }
        if !all_finite(&f0) || g0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("F0/G0"));
        }
        Ok(Self { f0, g0 })
    }

    pub fn nc(&self) -> usize {
        self.f0.nrows()
    }

    /// Row values of `F0 x + G0`; positive entries are violations.
    pub fn margins(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.f0 * x + &self.g0
    }
}

/// Input box `lower <= u <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBox {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl InputBox {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension("input bounds differ in length".into()));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidParameter("input lower bound exceeds upper bound".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, u: &DVector<f64>, tol: f64) -> bool {
        u.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }

    /// `sqrt(N) * ||u_max - u_min||`.
    pub fn horizon_diameter(&self, n: usize) -> f64 {
        (n as f64).sqrt() * (&self.upper - &self.lower).norm()
    }
}

/// Stacked prediction matrices over a horizon `N`.
///
/// Predicted states are `x_1..x_N = Abar x + Bbar u + Dbar w`; the lifted
/// constraint is `F xbar + G <= 0` and `z_N = A^N x + C_AB u`.
#[derive(Debug, Clone)]
pub struct LiftedProblem {
    pub horizon: usize,
    pub nx: usize,
    pub nu: usize,
    pub nw: usize,
    pub nc: usize,
    pub a_bar: DMatrix<f64>,
    pub b_bar: DMatrix<f64>,
    pub d_bar: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c_ab: DMatrix<f64>,
    pub a_pow_n: DMatrix<f64>,
}

fn toeplitz(a: &DMatrix<f64>, m: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let (nx, nm) = (a.nrows(), m.ncols());
    let mut out = DMatrix::zeros(n * nx, n * nm);
    let mut blk = m.clone();
    for lag in 0..n {
        for j in 0..n - lag {
            let i = j + lag;
            out.view_mut((i * nx, j * nm), (nx, nm)).copy_from(&blk);
        }
        blk = a * blk;
    }
    out
}

pub fn build_lifted(sys: &LtiSystem, cons: &StateConstraints, n: usize) -> Result<LiftedProblem> {
    if n == 0 {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    if cons.f0.ncols() != sys.nx() {
        return Err(Error::Dimension(format!("F0 has {} columns, state has {}", cons.f0.ncols(), sys.nx())));
    }
    let nx = sys.nx();
    let mut a_bar = DMatrix::zeros(n * nx, nx);
    let mut pow = sys.a.clone();
    for i in 0..n {
        a_bar.view_mut((i * nx, 0), (nx, nx)).copy_from(&pow);
        pow = &sys.a * pow;
    }
    let a_pow_n = a_bar.view(((n - 1) * nx, 0), (nx, nx)).into_owned();
    let b_bar = toeplitz(&sys.a, &sys.b, n);
    let d_bar = toeplitz(&sys.a, &sys.d, n);
    let c_ab = b_bar.view(((n - 1) * nx, 0), (nx, n * sys.nu())).into_owned();
    Ok(LiftedProblem {
        horizon: n,
        nx,
        nu: sys.nu(),
        nw: sys.nw(),
        nc: cons.nc(),
        a_bar,
        b_bar,
        d_bar,
        f: repeat_diag(&cons.f0, n),
        g: stack_vec(&cons.g0, n),
        c_ab,
        a_pow_n,
    })
}

impl LiftedProblem {
    /// `F Dbar`, the disturbance-to-constraint map.
    pub fn fd(&self) -> DMatrix<f64> {
        &self.f * &self.d_bar
    }

    /// `B1 = F Bbar`.
    pub fn b1(&self) -> DMatrix<f64> {
        &self.f * &self.b_bar
    }

    /// Predicted states `x_1..x_N` stacked.
    pub fn predict(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        &self.a_bar * x + &self.b_bar * u + &self.d_bar * w
    }

    pub fn terminal(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a_pow_n * x + &self.c_ab * u
    }
}

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub p: DMatrix<f64>,
    /// Gain with `u = K x`.
    pub k: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Residual of `A'PA - P + Q - A'PB (R + B'PB)^-1 B'PA = 0` (max abs entry).
pub fn riccati_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let s = r + b.transpose() * p * b;
    let bpa = b.transpose() * p * a;
    let lu = s.lu();
    let corr = match lu.solve(&bpa) {
        Some(x) => bpa.transpose() * x,
        None => return f64::INFINITY,
    };
    let res = a.transpose() * p * a - p + q - corr;
    linalg::max_abs(&res)
}

/// Solves the DARE by the structure-preserving doubling algorithm.
pub fn solve_riccati(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<RiccatiSolution> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::Dimension("riccati data".into()));
    }
    let r_chol = linalg::cholesky(r, "R")?;
    if linalg::lambda_min(q) < -1e-12 {
        return Err(Error::InvalidParameter("Q must be positive semidefinite".into()));
    }
    let id = DMatrix::<f64>::identity(n, n);
    let mut ak = a.clone();
    let mut gk = b * r_chol.solve(&b.transpose());
    let mut hk = linalg::symmetrize(q);
    let mut iterations = 0;
    for it in 1..=80 {
        iterations = it;
        let w = (&id + &gk * &hk).lu();
        let (wa, wg) = match (w.solve(&ak), w.solve(&gk)) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(Error::RiccatiDiverged { residual: f64::INFINITY }),
        };
        let h_next = linalg::symmetrize(&(&hk + ak.transpose() * &hk * &wa));
        let g_next = linalg::symmetrize(&(&gk + &ak * wg * ak.transpose()));
        let a_next = &ak * wa;
        let delta = linalg::max_abs(&(&h_next - &hk));
        let scale = linalg::max_abs(&h_next).max(1.0);
        hk = h_next;
        gk = g_next;
        ak = a_next;
        if !all_finite(&hk) {
            break;
        }
        if delta <= 1e-15 * scale {
            break;
        }
    }
    let mut p = hk;
    let mut residual = riccati_residual(a, b, q, r, &p);
    // A couple of fixed-point sweeps polish the last digits.
    for _ in 0..3 {
        if !residual.is_finite() {
            break;
        }
        let s = r + b.transpose() * &p * b;
        let bpa = b.transpose() * &p * a;
        let Some(x) = s.lu().solve(&bpa) else { break };
        let next = linalg::symmetrize(&(a.transpose() * &p * a + q - bpa.transpose() * x));
        let res = riccati_residual(a, b, q, r, &next);
        if res < residual {
            p = next;
            residual = res;
        } else {
            break;
        }
    }
    let scale = linalg::max_abs(&p).max(1.0);
    if !residual.is_finite() || residual > 1e-9 * scale {
        return Err(Error::RiccatiDiverged { residual });
    }
    if linalg::lambda_min(&p) < -1e-10 * scale {
        return Err(Error::RiccatiDiverged { residual });
    }
    let s = r + b.transpose() * &p * b;
    let k = -s.lu().solve(&(b.transpose() * &p * a)).ok_or(Error::RiccatiDiverged { residual })?;
    Ok(RiccatiSolution { p, k, residual, iterations })
}

/// `(A + B K, B, D)`.
pub fn prestabilize(sys: &LtiSystem, k: &DMatrix<f64>) -> Result<LtiSystem> {
    if k.shape() != (sys.nu(), sys.nx()) {
        return Err(Error::Dimension("gain shape".into()));
    }
    LtiSystem::new(&sys.a + &sys.b * k, sys.b.clone(), sys.d.clone())
}

/// Disturbance-observability matrix `[F0 D; F0 A D; ...; F0 A^{N-1} D]` and its rank.
pub fn disturbance_observability(f0: &DMatrix<f64>, a: &DMatrix<f64>, d: &DMatrix<f64>, n: usize) -> (DMatrix<f64>, usize) {
    let nc = f0.nrows();
    let mut out = DMatrix::zeros(nc * n, d.ncols());
    let mut ad = d.clone();
    for i in 0..n {
        out.view_mut((i * nc, 0), (nc, d.ncols())).copy_from(&(f0 * &ad));
        ad = a * ad;
    }
    let r = rank(&out);
    (out, r)
}

/// Smallest admissible `l_c`: `lambda_max(((A+BK)^N)' (A+BK)^N)`.
pub fn lc_threshold(a: &DMatrix<f64>, b: &DMatrix<f64>, k: &DMatrix<f64>, n: usize) -> f64 {
    let ak = mat_pow(&(a + b * k), n);
    linalg::lambda_max(&(ak.transpose() * &ak))
}

/// Whether `((A+BK)^N)'(A+BK)^N <= l_c I`.
pub fn check_lc(a: &DMatrix<f64>, b: &DMatrix<f64>, k: &DMatrix<f64>, n: usize, l_c: f64) -> bool {
    lc_threshold(a, b, k, n) <= l_c
}

/// Operator-norm bounds `L_A, L_B, L_D` and the input diameter `u_u`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormBounds {
    pub l_a: f64,
    pub l_b: f64,
    pub l_d: f64,
    pub u_u: f64,
    pub contractive: bool,
}

impl NormBounds {
    pub fn ensure_contractive(&self) -> Result<()> {
        if self.contractive {
            Ok(())
        } else {
            Err(Error::NotContractive { norm: self.l_a })
        }
    }
}

pub fn norm_bounds(sys: &LtiSystem, input: &InputBox, n: usize) -> NormBounds {
    let l_a = spectral_norm(&sys.a);
    NormBounds {
        l_a,
        l_b: spectral_norm(&sys.b),
        l_d: spectral_norm(&sys.d),
        u_u: input.horizon_diameter(n),
        contractive: l_a < 1.0,
    }
}

/// Stage and terminal weights with their stacked forms
/// `Qbar = diag(Q,..,Q,P)` and `Rbar = diag(R,..,R)`.
#[derive(Debug, Clone)]
pub struct CostWeights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub q_bar: DMatrix<f64>,
    pub r_bar: DMatrix<f64>,
}

impl CostWeights {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, p: DMatrix<f64>, n: usize) -> Result<Self> {
        if q.nrows() != q.ncols() || p.shape() != q.shape() || r.nrows() != r.ncols() {
            return Err(Error::Dimension("weights".into()));
        }
        linalg::cholesky(&q, "Q")?;
        linalg::cholesky(&r, "R")?;
        let mut blocks: Vec<&DMatrix<f64>> = std::iter::repeat_n(&q, n - 1).collect();
        blocks.push(&p);
        let q_bar = linalg::block_diag(&blocks);
        let r_bar = repeat_diag(&r, n);
        Ok(Self { q, r, p, q_bar, r_bar })
    }

    /// `||x||_Q^2 + ||u||_R^2`.
    pub fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        linalg::quad(x, &self.q) + linalg::quad(u, &self.r)
    }

    pub fn terminal_cost(&self, x: &DVector<f64>) -> f64 {
        linalg::quad(x, &self.p)
    }
}
