//! Cone arithmetic for the product of a nonnegative orthant and at most one
//! second-order cone, plus Nesterov-Todd scaling.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Cones {
    pub orth: usize,
    pub soc: usize,
}

impl Cones {
    pub fn dim(&self) -> usize {
        self.orth + self.soc
    }

    pub fn degree(&self) -> f64 {
        (self.orth + usize::from(self.soc > 0)) as f64
    }

    pub fn identity(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.dim());
        for i in 0..self.orth {
            e[i] = 1.0;
        }
        if self.soc > 0 {
            e[self.orth] = 1.0;
        }
        e
    }

    /// Smallest `a` with `v + a e` in the closed cone.
    pub fn shift_needed(&self, v: &DVector<f64>) -> f64 {
        let mut a = f64::NEG_INFINITY;
        for i in 0..self.orth {
            a = a.max(-v[i]);
        }
        if self.soc > 0 {
            let t = v[self.orth];
            let r = v.rows(self.orth + 1, self.soc - 1).norm();
            a = a.max(r - t);
        }
        a
    }

    /// Largest step `a` (capped at `cap`) keeping `u + a du` in the cone.
    pub fn max_step(&self, u: &DVector<f64>, du: &DVector<f64>, cap: f64) -> f64 {
        let mut a = cap;
        for i in 0..self.orth {
            if du[i] < 0.0 {
                a = a.min(-u[i] / du[i]);
            }
        }
        if self.soc > 0 {
            a = a.min(soc_max_step(&u.rows(self.orth, self.soc).into_owned(), &du.rows(self.orth, self.soc).into_owned(), cap));
        }
        a.max(0.0)
    }

    /// Jordan product `u o v`.
    pub fn prod(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for i in 0..self.orth {
            out[i] = u[i] * v[i];
        }
        if self.soc > 0 {
            let o = self.orth;
            let k = self.soc;
            let u0 = u[o];
            let v0 = v[o];
            out[o] = u.rows(o, k).dot(&v.rows(o, k));
            for j in 1..k {
                out[o + j] = u0 * v[o + j] + v0 * u[o + j];
            }
        }
        out
    }

    /// Solves `lambda o x = d`.
    pub fn div(&self, lambda: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for i in 0..self.orth {
            out[i] = d[i] / lambda[i];
        }
        if self.soc > 0 {
            let o = self.orth;
            let k = self.soc;
            let l0 = lambda[o];
            let l1 = lambda.rows(o + 1, k - 1);
            let d1 = d.rows(o + 1, k - 1);
            let det = jdet(l0, l1.norm());
            let x0 = (l0 * d[o] - l1.dot(&d1)) / det;
            out[o] = x0;
            for j in 1..k {
                out[o + j] = (d[o + j] - x0 * lambda[o + j]) / l0;
            }
        }
        out
    }
}

fn soc_max_step(u: &DVector<f64>, du: &DVector<f64>, cap: f64) -> f64 {
    let k = u.len();
    let u1 = u.rows(1, k - 1);
    let d1 = du.rows(1, k - 1);
    let a = du[0] * du[0] - d1.norm_squared();
    let b = 2.0 * (u[0] * du[0] - u1.dot(&d1));
    let c = jdet(u[0], u1.norm());
    let mut best = cap;
    if du[0] < 0.0 {
        best = best.min(-u[0] / du[0]);
    }
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return best;
    }
    if a.abs() <= 1e-14 * scale {
        if b < 0.0 {
            best = best.min(-c / b);
        }
        return best;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return best;
    }
    let sq = disc.sqrt();
    // Numerically stable roots.
    let qq = -0.5 * (b + b.signum() * sq);
    let r1 = qq / a;
    let r2 = if qq != 0.0 { c / qq } else { r1 };
    for r in [r1, r2] {
        if r > 0.0 {
            best = best.min(r);
        }
    }
    best
}

/// Nesterov-Todd scaling `W` with `W z = W^-1 s = lambda`.
#[derive(Debug, Clone)]
pub(crate) struct NtScaling {
    pub orth_w: DVector<f64>,
    pub soc: Option<SocScaling>,
}

#[derive(Debug, Clone)]
pub(crate) struct SocScaling {
    pub beta: f64,
    pub wbar: DVector<f64>,
}

impl SocScaling {
    fn matrix(&self, inverse: bool) -> DMatrix<f64> {
        let k = self.wbar.len();
        let w0 = self.wbar[0];
        let w1 = self.wbar.rows(1, k - 1);
        let sign = if inverse { -1.0 } else { 1.0 };
        let mut m = DMatrix::zeros(k, k);
        m[(0, 0)] = w0;
        for i in 1..k {
            m[(0, i)] = sign * w1[i - 1];
            m[(i, 0)] = sign * w1[i - 1];
            for j in 1..k {
                m[(i, j)] = w1[i - 1] * w1[j - 1] / (1.0 + w0) + if i == j { 1.0 } else { 0.0 };
            }
        }
        let f = if inverse { 1.0 / self.beta } else { self.beta };
        m * f
    }
}

/// `v0^2 - ||v1||^2` factored to avoid cancellation near the boundary.
fn jdet(v0: f64, v1n: f64) -> f64 {
    ((v0 - v1n) * (v0 + v1n)).max(0.0)
}

fn jnorm(v: &DVector<f64>) -> f64 {
    let k = v.len();
    jdet(v[0], v.rows(1, k - 1).norm()).sqrt()
}

impl NtScaling {
    pub fn identity(cones: &Cones) -> Self {
        let soc = (cones.soc > 0).then(|| {
            let mut wbar = DVector::zeros(cones.soc);
            wbar[0] = 1.0;
            SocScaling { beta: 1.0, wbar }
        });
        Self { orth_w: DVector::from_element(cones.orth, 1.0), soc }
    }

    pub fn new(cones: &Cones, s: &DVector<f64>, z: &DVector<f64>) -> Self {
        let orth_w = DVector::from_fn(cones.orth, |i, _| (s[i] / z[i]).sqrt());
        let soc = (cones.soc > 0).then(|| {
            let o = cones.orth;
            let k = cones.soc;
            let ss = s.rows(o, k).into_owned();
            let zz = z.rows(o, k).into_owned();
            let sn = jnorm(&ss);
            let zn = jnorm(&zz);
            let sb = &ss / sn;
            let zb = &zz / zn;
            let g = ((1.0 + sb.dot(&zb)) / 2.0).sqrt();
            let mut wbar = DVector::zeros(k);
            wbar[0] = (sb[0] + zb[0]) / (2.0 * g);
            for j in 1..k {
                wbar[j] = (sb[j] - zb[j]) / (2.0 * g);
            }
            SocScaling { beta: (sn / zn).sqrt(), wbar }
        });
        Self { orth_w, soc }
    }

    fn apply(&self, v: &DVector<f64>, inverse: bool) -> DVector<f64> {
        let o = self.orth_w.len();
        let mut out = v.clone();
        for i in 0..o {
            out[i] = if inverse { v[i] / self.orth_w[i] } else { v[i] * self.orth_w[i] };
        }
        if let Some(sc) = &self.soc {
            let k = sc.wbar.len();
            let m = sc.matrix(inverse);
            let r = m * v.rows(o, k);
            out.rows_mut(o, k).copy_from(&r);
        }
        out
    }

    pub fn w(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply(v, false)
    }

    pub fn winv(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply(v, true)
    }

    pub fn winv2(&self, v: &DVector<f64>) -> DVector<f64> {
        self.winv(&self.winv(v))
    }

    /// Diagonal of `W^-2` on the orthant part.
    pub fn orth_weights(&self) -> DVector<f64> {
        self.orth_w.map(|w| 1.0 / (w * w))
    }

    /// Dense `W^-2` on the cone block.
    pub fn soc_winv2(&self) -> Option<DMatrix<f64>> {
        self.soc.as_ref().map(|sc| {
            let m = sc.matrix(true);
            &m * &m
        })
    }
}
