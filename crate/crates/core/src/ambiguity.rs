//! Wasserstein ambiguity: empirical disturbance samples, the pulled-back
//! transport cost, discrete optimal transport and moment bounds of the ball.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::convex::ConvexProgram;
use crate::error::{Error, Result};
use crate::linalg::{self, pinv, quad};
use crate::system::LiftedProblem;

/// `C_s = (F Dbar)' C (F Dbar)`, the transport weight on stacked disturbances.
pub fn transport_weight(lifted: &LiftedProblem, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let fd = lifted.fd();
    if c.shape() != (fd.nrows(), fd.nrows()) {
        return Err(Error::Dimension(format!("output weight must be {0}x{0}", fd.nrows())));
    }
    Ok(linalg::symmetrize(&(fd.transpose() * c * &fd)))
}

/// Ball of radius `epsilon` in the transport cost
/// `c(w, w') = 1/2 (w - w')' C_s (w - w')`.
#[derive(Debug, Clone)]
pub struct AmbiguitySet {
    pub radius: f64,
    pub output_weight: DMatrix<f64>,
    pub c_s: DMatrix<f64>,
    c_s_chol: Cholesky<f64, Dyn>,
}

impl AmbiguitySet {
    pub fn new(lifted: &LiftedProblem, output_weight: DMatrix<f64>, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidParameter(format!("radius must be > 0, got {radius}")));
        }
        linalg::cholesky(&output_weight, "output weight C")?;
        let c_s = transport_weight(lifted, &output_weight)?;
        let c_s_chol = linalg::cholesky(&c_s, "C_s (disturbances not observable through the constraints)")?;
        Ok(Self { radius, output_weight, c_s, c_s_chol })
    }

    pub fn c_s_cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.c_s_chol
    }

    pub fn transport_cost(&self, w: &DVector<f64>, w2: &DVector<f64>) -> f64 {
        transport_cost(&self.c_s, w, w2)
    }

    pub fn output_cost(&self, xi: &DVector<f64>, xi2: &DVector<f64>) -> f64 {
        transport_cost(&self.output_weight, xi, xi2)
    }
}

pub fn transport_cost(weight: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let d = a - b;
    0.5 * quad(&d, weight)
}

/// Stacked disturbance samples `w^1..w^n`, each of length `N n_w`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSamples {
    pub samples: Vec<DVector<f64>>,
}

impl EmpiricalSamples {
    pub fn new(samples: Vec<DVector<f64>>) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::InvalidParameter("at least one sample is required".into()));
        };
        if samples.iter().any(|s| s.len() != first.len()) {
            return Err(Error::Dimension("samples differ in length".into()));
        }
        Ok(Self { samples })
    }

    pub fn zeros(n: usize, dim: usize) -> Self {
        Self { samples: vec![DVector::zeros(dim); n] }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Output samples `xi = F Dbar w + F Abar x + G`.
    pub fn outputs(&self, lifted: &LiftedProblem, x: &DVector<f64>) -> Vec<DVector<f64>> {
        let fd = lifted.fd();
        let base = &lifted.f * (&lifted.a_bar * x) + &lifted.g;
        self.samples.iter().map(|w| &fd * w + &base).collect()
    }

    /// `(1/n) sum c(0, w^s)`: the transport distance from a Dirac at zero to
    /// the empirical distribution. Assumption-2 holds when this is `<= epsilon`.
    pub fn distance_from_zero(&self, amb: &AmbiguitySet) -> f64 {
        let z = DVector::zeros(amb.c_s.nrows());
        self.samples.iter().map(|w| amb.transport_cost(&z, w)).sum::<f64>() / self.len() as f64
    }
}

/// Sliding window of disturbances recovered from consecutive states.
#[derive(Debug, Clone)]
pub struct DisturbanceWindow {
    capacity: usize,
    buf: VecDeque<DVector<f64>>,
    d_pinv: DMatrix<f64>,
}

impl DisturbanceWindow {
    pub fn new(d: &DMatrix<f64>, capacity: usize) -> Self {
        Self { capacity: capacity.max(1), buf: VecDeque::new(), d_pinv: pinv(d) }
    }

    /// Records `D^+ (x_next - nominal)` where `nominal = A x + B u`.
    pub fn record(&mut self, x_next: &DVector<f64>, nominal: &DVector<f64>) -> DVector<f64> {
        let w = &self.d_pinv * (x_next - nominal);
        self.push(w.clone());
        w
    }

    pub fn push(&mut self, w: DVector<f64>) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(w);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// `n` stacked samples, each made of `horizon` draws with replacement;
    /// all-zero samples while the window is empty.
    pub fn bootstrap<R: Rng>(&self, n: usize, horizon: usize, nw: usize, rng: &mut R) -> EmpiricalSamples {
        if self.buf.is_empty() {
            return EmpiricalSamples::zeros(n, horizon * nw);
        }
        let samples = (0..n)
            .map(|_| {
                let mut v = DVector::zeros(horizon * nw);
                for i in 0..horizon {
                    let w = &self.buf[rng.random_range(0..self.buf.len())];
                    v.rows_mut(i * nw, nw).copy_from(w);
                }
                v
            })
            .collect();
        EmpiricalSamples { samples }
    }
}

/// Worst-case mean-norm bound over the ball:
/// `(sqrt(lmax(C_s) N) mu + 2 sqrt(2 eps)) / sqrt(lmin(C_s))`.
pub fn gelbrich_mean_bound(radius: f64, c_s: &DMatrix<f64>, horizon: usize, mean_bound: f64) -> f64 {
    let ev = linalg::sym_eigenvalues(c_s);
    let (lmin, lmax) = (ev[0], ev[ev.len() - 1]);
    ((lmax * horizon as f64).sqrt() * mean_bound + 2.0 * (2.0 * radius).sqrt()) / lmin.sqrt()
}

/// Worst-case covariance-trace bound over the ball:
/// `(sqrt(lmax(C_s) N tr(Sigma)) + 2 sqrt(2 eps))^2 / lmin(C_s)`.
pub fn gelbrich_trace_bound(radius: f64, c_s: &DMatrix<f64>, horizon: usize, cov_bound: &DMatrix<f64>) -> f64 {
    let ev = linalg::sym_eigenvalues(c_s);
    let (lmin, lmax) = (ev[0], ev[ev.len() - 1]);
    let t = (lmax * horizon as f64 * cov_bound.trace()).sqrt() + 2.0 * (2.0 * radius).sqrt();
    t * t / lmin
}

/// Finitely supported distribution.
#[derive(Debug, Clone)]
pub struct DiscreteDistribution {
    pub points: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(points: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::Dimension("points and weights must be non-empty and equal in number".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("weights must be nonnegative and sum to one".into()));
        }
        Ok(Self { points, weights })
    }

    pub fn uniform(points: Vec<DVector<f64>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n.max(1) as f64; n])
    }
}

/// Optimal-transport cost between two discrete distributions, by LP.
pub fn discrete_wasserstein<F>(p: &DiscreteDistribution, q: &DiscreteDistribution, cost: F) -> Result<f64>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> f64,
{
    let (m, n) = (p.points.len(), q.points.len());
    let mut prog = ConvexProgram::new(m * n);
    for i in 0..m {
        for j in 0..n {
            prog.linear[i * n + j] = cost(&p.points[i], &q.points[j]);
            prog.set_bounds(i * n + j, 0.0, f64::INFINITY);
        }
        prog.add_eq((0..n).map(|j| (i * n + j, 1.0)).collect(), p.weights[i]);
    }
    // The last column marginal is implied by the others.
    for j in 0..n - 1 {
        prog.add_eq((0..m).map(|i| (i * n + j, 1.0)).collect(), q.weights[j]);
    }
    let sol = prog.solve();
    if !sol.is_optimal() {
        return Err(Error::Solver { status: sol.status });
    }
    Ok(sol.objective.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_window_bootstraps_zeros() {
        let w = DisturbanceWindow::new(&DMatrix::identity(2, 2), 50);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = w.bootstrap(4, 3, 2, &mut rng);
        assert_eq!(s.len(), 4);
        assert!(s.samples.iter().all(|v| v.len() == 6 && v.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn window_keeps_latest_entries() {
        let mut w = DisturbanceWindow::new(&DMatrix::identity(1, 1), 3);
        for k in 0..5 {
            w.push(DVector::from_element(1, k as f64));
        }
        assert_eq!(w.len(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = w.bootstrap(20, 2, 1, &mut rng);
        assert!(s.samples.iter().flat_map(|v| v.iter()).all(|x| *x >= 2.0));
    }

    #[test]
    fn reconstruction_inverts_dynamics() {
        let d = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 1.0, 1.0]);
        let mut win = DisturbanceWindow::new(&d, 5);
        let nominal = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let w = DVector::from_vec(vec![0.25, -0.5]);
        let got = win.record(&(&nominal + &d * &w), &nominal);
        assert!((got - w).amax() < 1e-12);
    }

    #[test]
    fn one_dimensional_transport_is_sorted_matching() {
        let p = DiscreteDistribution::uniform(vec![0.0, 1.0, 5.0].into_iter().map(|v| DVector::from_element(1, v)).collect()).unwrap();
        let q = DiscreteDistribution::uniform(vec![4.0, 0.5, 2.0].into_iter().map(|v| DVector::from_element(1, v)).collect()).unwrap();
        let w = discrete_wasserstein(&p, &q, |a, b| (a[0] - b[0]).abs()).unwrap();
        assert!((w - (0.5 + 1.0 + 1.0) / 3.0).abs() < 1e-7);
    }
}
