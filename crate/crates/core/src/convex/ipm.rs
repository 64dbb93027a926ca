//! Infeasible-start primal-dual interior-point method with Mehrotra
//! predictor-corrector steps.
//!
//! The Newton system is reduced to `(P + G'W^-2 G) dx + A'dy = r`. Variables
//! that never share a constraint row (and have no off-diagonal curvature)
//! form a diagonal block that is eliminated first, so the dense factorization
//! only touches the remaining coupled variables.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::cones::{Cones, NtScaling};
use super::{ConvexProgram, KktResiduals, Solution, SolveStatus, SolverSettings, WarmStart};

#[derive(Debug, Clone)]
struct Row {
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl Row {
    fn from_terms(terms: &[(usize, f64)]) -> Self {
        let mut t: Vec<(usize, f64)> = terms.to_vec();
        t.sort_by_key(|p| p.0);
        let mut idx: Vec<usize> = Vec::with_capacity(t.len());
        let mut val: Vec<f64> = Vec::with_capacity(t.len());
        for (i, v) in t {
            if idx.last() == Some(&i) {
                *val.last_mut().unwrap() += v;
            } else {
                idx.push(i);
                val.push(v);
            }
        }
        let keep: Vec<usize> = (0..idx.len()).filter(|&k| val[k] != 0.0).collect();
        Self { idx: keep.iter().map(|&k| idx[k]).collect(), val: keep.iter().map(|&k| val[k]).collect() }
    }

    fn dot(&self, x: &DVector<f64>) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, &v)| v * x[i]).sum()
    }

    fn scale(&mut self, f: f64) {
        for v in &mut self.val {
            *v *= f;
        }
    }

    fn amax(&self) -> f64 {
        self.val.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy)]
enum Origin {
    Ineq(usize),
    Lower(usize),
    Upper(usize),
}

struct Soc {
    cols: Vec<usize>,
    g: DMatrix<f64>,
}

struct Std {
    n: usize,
    p: DMatrix<f64>,
    q: DVector<f64>,
    orth: Vec<Row>,
    origin: Vec<Origin>,
    orth_scale: Vec<f64>,
    soc: Option<Soc>,
    eq: Vec<Row>,
    eq_origin: Vec<Option<usize>>,
    eq_scale: Vec<f64>,
    h: DVector<f64>,
    b: DVector<f64>,
    obj_scale: f64,
    /// Factor applied to the norm constraint.
    soc_scale: f64,
    cones: Cones,
}

enum Prep {
    Ready(Std),
    Infeasible,
}

fn standardize(prog: &ConvexProgram) -> Prep {
    let n = prog.num_vars();
    let obj_scale = 1.0 / prog.hessian.amax().max(prog.linear.amax()).max(1.0);
    let p = (&prog.hessian + prog.hessian.transpose()) * (0.5 * obj_scale);
    let q = &prog.linear * obj_scale;
    let mut orth = Vec::new();
    let mut origin = Vec::new();
    let mut orth_scale = Vec::new();
    let mut h = Vec::new();
    let mut push_row = |row: Row, rhs: f64, o: Origin| -> bool {
        let a = row.amax();
        if a == 0.0 {
            return rhs >= -1e-12;
        }
        let mut row = row;
        row.scale(1.0 / a);
        orth.push(row);
        origin.push(o);
        orth_scale.push(1.0 / a);
        h.push(rhs / a);
        true
    };
    for (i, r) in prog.inequalities.iter().enumerate() {
        if !push_row(Row::from_terms(&r.terms), r.rhs, Origin::Ineq(i)) {
            return Prep::Infeasible;
        }
    }
    for i in 0..n {
        if prog.lower[i].is_finite() {
            push_row(Row { idx: vec![i], val: vec![-1.0] }, -prog.lower[i], Origin::Lower(i));
        }
        if prog.upper[i].is_finite() {
            push_row(Row { idx: vec![i], val: vec![1.0] }, prog.upper[i], Origin::Upper(i));
        }
    }
    let mut eq = Vec::new();
    let mut eq_origin = Vec::new();
    let mut eq_scale = Vec::new();
    let mut b = Vec::new();
    let mut push_eq = |row: Row, rhs: f64, o: Option<usize>| -> bool {
        let a = row.amax();
        if a == 0.0 {
            return rhs.abs() <= 1e-12;
        }
        let mut row = row;
        row.scale(1.0 / a);
        eq.push(row);
        eq_origin.push(o);
        eq_scale.push(1.0 / a);
        b.push(rhs / a);
        true
    };
    for (j, r) in prog.equalities.iter().enumerate() {
        if !push_eq(Row::from_terms(&r.terms), r.rhs, Some(j)) {
            return Prep::Infeasible;
        }
    }
    let mut soc = None;
    let mut soc_dim = 0;
    let mut soc_scale = 1.0;
    if let Some(nc) = &prog.norm {
        if nc.radius == 0.0 {
            for k in 0..nc.matrix.nrows() {
                let terms: Vec<(usize, f64)> = (0..n).map(|j| (j, nc.matrix[(k, j)])).collect();
                if !push_eq(Row::from_terms(&terms), -nc.offset[k], None) {
                    return Prep::Infeasible;
                }
            }
        } else {
            let cols: Vec<usize> = (0..n).filter(|&j| nc.matrix.column(j).amax() > 0.0).collect();
            let k = nc.matrix.nrows();
            let a = nc.matrix.amax().max(1e-300);
            let sc = if nc.matrix.amax() > 0.0 { 1.0 / a } else { 1.0 / nc.radius };
            let mut g = DMatrix::zeros(k + 1, cols.len());
            for r in 0..k {
                for (c, &j) in cols.iter().enumerate() {
                    g[(r + 1, c)] = -nc.matrix[(r, j)] * sc;
                }
            }
            h.push(nc.radius * sc);
            for r in 0..k {
                h.push(nc.offset[r] * sc);
            }
            soc_dim = k + 1;
            soc_scale = sc;
            soc = Some(Soc { cols, g });
        }
    }
    let cones = Cones { orth: orth.len(), soc: soc_dim };
    Prep::Ready(Std {
        n,
        p,
        q,
        orth,
        origin,
        orth_scale,
        soc,
        eq,
        eq_origin,
        eq_scale,
        h: DVector::from_vec(h),
        b: DVector::from_vec(b),
        obj_scale,
        soc_scale,
        cones,
    })
}

impl Std {
    fn g_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.cones.dim());
        for (r, row) in self.orth.iter().enumerate() {
            out[r] = row.dot(x);
        }
        if let Some(soc) = &self.soc {
            let xc = DVector::from_iterator(soc.cols.len(), soc.cols.iter().map(|&j| x[j]));
            let v = &soc.g * xc;
            out.rows_mut(self.cones.orth, self.cones.soc).copy_from(&v);
        }
        out
    }

    fn gt_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (r, row) in self.orth.iter().enumerate() {
            let zr = z[r];
            if zr != 0.0 {
                for (&i, &v) in row.idx.iter().zip(&row.val) {
                    out[i] += v * zr;
                }
            }
        }
        if let Some(soc) = &self.soc {
            let v = soc.g.transpose() * z.rows(self.cones.orth, self.cones.soc);
            for (c, &j) in soc.cols.iter().enumerate() {
                out[j] += v[c];
            }
        }
        out
    }

    fn a_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.eq.len(), self.eq.iter().map(|r| r.dot(x)))
    }

    fn at_mul(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (r, row) in self.eq.iter().enumerate() {
            for (&i, &v) in row.idx.iter().zip(&row.val) {
                out[i] += v * y[r];
            }
        }
        out
    }
}

#[derive(Clone, Copy)]
enum Slot {
    E(usize),
    C(usize),
}

struct Partition {
    slot: Vec<Slot>,
    e_vars: Vec<usize>,
    c_vars: Vec<usize>,
}

/// Greedy independent set (lowest degree first) in the sparsity graph of
/// `P + G'G`; those variables get a diagonal block.
fn partition(std: &Std) -> Partition {
    let n = std.n;
    let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut mark = vec![usize::MAX; n];
    let add_clique = |vars: &[usize], nbrs: &mut Vec<Vec<usize>>| {
        for &a in vars {
            for &b in vars {
                if a != b {
                    nbrs[a].push(b);
                }
            }
        }
    };
    for row in &std.orth {
        add_clique(&row.idx, &mut nbrs);
    }
    if let Some(soc) = &std.soc {
        add_clique(&soc.cols, &mut nbrs);
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && std.p[(i, j)] != 0.0 {
                nbrs[i].push(j);
            }
        }
    }
    for (i, list) in nbrs.iter_mut().enumerate() {
        list.retain(|&j| {
            if mark[j] == i {
                false
            } else {
                mark[j] = i;
                true
            }
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (nbrs[i].len(), i));
    let mut blocked = vec![false; n];
    let mut chosen = vec![false; n];
    for &i in &order {
        if !blocked[i] {
            chosen[i] = true;
            blocked[i] = true;
            for &j in &nbrs[i] {
                blocked[j] = true;
            }
        }
    }
    let mut slot = Vec::with_capacity(n);
    let mut e_vars = Vec::new();
    let mut c_vars = Vec::new();
    for i in 0..n {
        if chosen[i] {
            slot.push(Slot::E(e_vars.len()));
            e_vars.push(i);
        } else {
            slot.push(Slot::C(c_vars.len()));
            c_vars.push(i);
        }
    }
    Partition { slot, e_vars, c_vars }
}

struct Factor<'a> {
    std: &'a Std,
    part: &'a Partition,
    m_ee: Vec<f64>,
    m_ec: DMatrix<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    eq: Option<(DMatrix<f64>, Cholesky<f64, Dyn>)>,
}

impl<'a> Factor<'a> {
    fn new(std: &'a Std, part: &'a Partition, w: &NtScaling, reg: f64) -> Option<Self> {
        let ne = part.e_vars.len();
        let nc = part.c_vars.len();
        let mut m_ee: Vec<f64> = part.e_vars.iter().map(|&i| std.p[(i, i)]).collect();
        let mut m_ec = DMatrix::zeros(ne, nc);
        let mut m_cc = DMatrix::zeros(nc, nc);
        for (ke, &i) in part.e_vars.iter().enumerate() {
            for (kc, &j) in part.c_vars.iter().enumerate() {
                m_ec[(ke, kc)] = std.p[(i, j)];
            }
        }
        for (a, &i) in part.c_vars.iter().enumerate() {
            for (b, &j) in part.c_vars.iter().enumerate() {
                m_cc[(a, b)] = std.p[(i, j)];
            }
        }
        let d_orth = w.orth_weights();
        let add = |i: usize, j: usize, v: f64, m_ee: &mut Vec<f64>, m_ec: &mut DMatrix<f64>, m_cc: &mut DMatrix<f64>| match (part.slot[i], part.slot[j]) {
            (Slot::E(a), Slot::E(_)) => m_ee[a] += v,
            (Slot::E(a), Slot::C(b)) => m_ec[(a, b)] += v,
            (Slot::C(a), Slot::C(b)) => m_cc[(a, b)] += v,
            (Slot::C(_), Slot::E(_)) => {}
        };
        for (r, row) in std.orth.iter().enumerate() {
            let d = d_orth[r];
            for (ka, &i) in row.idx.iter().enumerate() {
                let va = d * row.val[ka];
                for (kb, &j) in row.idx.iter().enumerate() {
                    add(i, j, va * row.val[kb], &mut m_ee, &mut m_ec, &mut m_cc);
                }
            }
        }
        let soc_w2 = w.soc_winv2();
        if let (Some(soc), Some(w2)) = (&std.soc, &soc_w2) {
            let hsoc = soc.g.transpose() * w2 * &soc.g;
            for (a, &i) in soc.cols.iter().enumerate() {
                for (b, &j) in soc.cols.iter().enumerate() {
                    add(i, j, hsoc[(a, b)], &mut m_ee, &mut m_ec, &mut m_cc);
                }
            }
        }
        for v in m_ee.iter_mut() {
            *v += reg;
            if !(*v > 0.0) {
                return None;
            }
        }
        for k in 0..nc {
            m_cc[(k, k)] += reg;
        }
        let chol = if nc > 0 {
            let mut t = m_ec.clone();
            for (ke, row_scale) in m_ee.iter().map(|v| 1.0 / v.sqrt()).enumerate() {
                t.row_mut(ke).scale_mut(row_scale);
            }
            m_cc.gemm_tr(-1.0, &t, &t, 1.0);
            Some(Cholesky::new(m_cc)?)
        } else {
            None
        };
        let mut f = Self { std, part, m_ee, m_ec, chol, eq: None };
        if !std.eq.is_empty() {
            let p = std.eq.len();
            let mut y = DMatrix::zeros(std.n, p);
            for (r, row) in std.eq.iter().enumerate() {
                let mut a = DVector::zeros(std.n);
                for (&i, &v) in row.idx.iter().zip(&row.val) {
                    a[i] = v;
                }
                y.set_column(r, &f.solve_m(&a));
            }
            let mut sa = DMatrix::zeros(p, p);
            for (r, row) in std.eq.iter().enumerate() {
                for c in 0..p {
                    sa[(r, c)] = row.idx.iter().zip(&row.val).map(|(&i, &v)| v * y[(i, c)]).sum();
                }
            }
            let sa = (&sa + sa.transpose()) * 0.5 + DMatrix::identity(p, p) * reg;
            f.eq = Some((y, Cholesky::new(sa)?));
        }
        Some(f)
    }

    fn solve_m(&self, r: &DVector<f64>) -> DVector<f64> {
        let part = self.part;
        let re = DVector::from_iterator(part.e_vars.len(), part.e_vars.iter().map(|&i| r[i]));
        let mut out = DVector::zeros(self.std.n);
        let xc = if let Some(ch) = &self.chol {
            let rc = DVector::from_iterator(part.c_vars.len(), part.c_vars.iter().map(|&i| r[i]));
            let tmp = DVector::from_iterator(re.len(), re.iter().zip(&self.m_ee).map(|(a, b)| a / b));
            let rhs = rc - self.m_ec.transpose() * tmp;
            ch.solve(&rhs)
        } else {
            DVector::zeros(0)
        };
        let ec = &self.m_ec * &xc;
        for (k, &i) in part.e_vars.iter().enumerate() {
            out[i] = (re[k] - ec[k]) / self.m_ee[k];
        }
        for (k, &i) in part.c_vars.iter().enumerate() {
            out[i] = xc[k];
        }
        out
    }

    fn raw_solve(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let t = self.solve_m(r1);
        match &self.eq {
            Some((y, sa)) => {
                let dy = sa.solve(&(self.std.a_mul(&t) - r2));
                let dx = t - y * &dy;
                (dx, dy)
            }
            None => (t, DVector::zeros(0)),
        }
    }

}

struct Dir {
    dx: DVector<f64>,
    dy: DVector<f64>,
    dz: DVector<f64>,
    ds: DVector<f64>,
}

/// Solves `[P A' G'; A 0 0; G 0 -W^2] (dx, dy, dz) = (r1, r2, t)` by
/// elimination of `dz`, refined against the unreduced system.
fn solve_augmented(f: &Factor, w: &NtScaling, r1: &DVector<f64>, r2: &DVector<f64>, t: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let std = f.std;
    let elim = |r1: &DVector<f64>, r2: &DVector<f64>, t: &DVector<f64>| {
        let rhs = r1 + std.gt_mul(&w.winv2(t));
        let (dx, dy) = f.raw_solve(&rhs, r2);
        let dz = w.winv2(&(std.g_mul(&dx) - t));
        (dx, dy, dz)
    };
    let (mut dx, mut dy, mut dz) = elim(r1, r2, t);
    let scale = 1.0 + r1.amax().max(r2.amax()).max(t.amax());
    let mut last = f64::INFINITY;
    for _ in 0..4 {
        let e1 = r1 - &std.p * &dx - std.at_mul(&dy) - std.gt_mul(&dz);
        let e2 = r2 - std.a_mul(&dx);
        let e3 = t - std.g_mul(&dx) + w.w(&w.w(&dz));
        let err = e1.amax().max(e2.amax()).max(e3.amax());
        if err <= 1e-14 * scale || err > 0.5 * last {
            break;
        }
        last = err;
        let (cx, cy, cz) = elim(&e1, &e2, &e3);
        dx += cx;
        dy += cy;
        dz += cz;
    }
    (dx, dy, dz)
}

#[allow(clippy::too_many_arguments)]
fn direction(f: &Factor, w: &NtScaling, lambda: &DVector<f64>, r1: &DVector<f64>, r2: &DVector<f64>, r3: &DVector<f64>, dsc: &DVector<f64>) -> Dir {
    let u = f.std.cones.div(lambda, dsc);
    let t = r3 - w.w(&u);
    let (dx, dy, dz) = solve_augmented(f, w, r1, r2, &t);
    let ds = w.w(&(&u - w.w(&dz)));
    Dir { dx, dy, dz, ds }
}

fn factor<'a>(std: &'a Std, part: &'a Partition, w: &NtScaling) -> Option<Factor<'a>> {
    let mut reg = 1e-11;
    for _ in 0..5 {
        if let Some(f) = Factor::new(std, part, w, reg) {
            return Some(f);
        }
        reg *= 100.0;
    }
    None
}

#[derive(Clone)]
struct Iterate {
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    s: DVector<f64>,
}

pub(super) fn solve(prog: &ConvexProgram, settings: &SolverSettings, warm: Option<&WarmStart>) -> Solution {
    let std = match standardize(prog) {
        Prep::Ready(s) => s,
        Prep::Infeasible => return finish_trivial(prog, SolveStatus::Infeasible),
    };
    let part = partition(&std);
    let cones = std.cones;
    let m = cones.dim();
    let e = cones.identity();

    let w0 = NtScaling::identity(&cones);
    let Some(f0) = factor(&std, &part, &w0) else {
        return finish_trivial(prog, SolveStatus::NumericalFailure);
    };
    let (x, y) = f0.raw_solve(&(std.gt_mul(&std.h) - &std.q), &std.b);
    if m == 0 {
        let it = Iterate { x, y, z: DVector::zeros(0), s: DVector::zeros(0) };
        return finish(prog, &std, it, SolveStatus::Optimal, 1);
    }
    let zh = std.g_mul(&x) - &std.h;
    let sh = -&zh;
    let shift = |v: DVector<f64>| {
        let a = cones.shift_needed(&v);
        if a < 0.0 {
            v
        } else {
            v + &e * (1.0 + a)
        }
    };
    let mut it = if let Some(ws) = warm {
        warm_iterate(&std, ws)
    } else {
        // Mehrotra's start: push both into the cone, then balance s'z.
        let push = |v: DVector<f64>| {
            let a = cones.shift_needed(&v);
            v + &e * (1.5 * a).max(0.0)
        };
        let (mut s, mut z) = (push(sh), push(zh));
        let sz = s.dot(&z);
        if sz <= 1e-12 * (1.0 + s.amax() * z.amax()) {
            s += &e;
            z += &e;
        }
        let sz = s.dot(&z);
        let (es, ez) = (e.dot(&s), e.dot(&z));
        let s = &s + &e * (0.5 * sz / ez);
        let z = &z + &e * (0.5 * sz / es);
        Iterate { x, y, z: shift(z), s: shift(s) }
    };

    let bh = std.b.amax().max(std.h.amax());
    let qn = std.q.amax();
    let mut status = SolveStatus::IterationLimit;
    let mut iterations = 0;
    // Rounding can wreck the iterates after the residuals bottom out; a stalled
    // solve is judged on the best iterate seen, not on the last one.
    let mut best: Option<(f64, Iterate)> = None;
    for k in 0..=settings.max_iterations {
        iterations = k;
        let rx = &std.p * &it.x + &std.q + std.at_mul(&it.y) + std.gt_mul(&it.z);
        let ry = std.a_mul(&it.x) - &std.b;
        let rz = std.g_mul(&it.x) + &it.s - &std.h;
        let gap = it.s.dot(&it.z);
        let mu = gap / cones.degree();
        let pobj = 0.5 * it.x.dot(&(&std.p * &it.x)) + std.q.dot(&it.x);
        let pres = ry.amax().max(rz.amax()) / (1.0 + bh);
        let dres = rx.amax() / (1.0 + qn);
        if !(pres.is_finite() && dres.is_finite() && gap.is_finite()) {
            status = SolveStatus::NumericalFailure;
            break;
        }
        if pres <= settings.feasibility_tol && dres <= settings.feasibility_tol && gap <= settings.gap_tol * pobj.abs().max(1.0) {
            status = SolveStatus::Optimal;
            break;
        }
        let score = pres.max(dres).max(gap / pobj.abs().max(1.0));
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, it.clone()));
        }
        if let Some(st) = certificate(&std, &it) {
            status = st;
            break;
        }
        if k == settings.max_iterations {
            break;
        }
        let w = NtScaling::new(&cones, &it.s, &it.z);
        let lambda = w.w(&it.z);
        let Some(f) = factor(&std, &part, &w) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let (r1, r2, r3) = (-rx, -ry, -rz);
        let ll = cones.prod(&lambda, &lambda);
        let aff = direction(&f, &w, &lambda, &r1, &r2, &r3, &(-&ll));
        let a_aff = cones.max_step(&it.s, &aff.ds, 1.0).min(cones.max_step(&it.z, &aff.dz, 1.0));
        let s_a = &it.s + &aff.ds * a_aff;
        let z_a = &it.z + &aff.dz * a_aff;
        let sigma = (s_a.dot(&z_a) / gap).clamp(0.0, 1.0).powi(3);
        let corr = cones.prod(&w.winv(&aff.ds), &w.w(&aff.dz));
        let dsc = -ll - corr + &e * (sigma * mu);
        let dir = direction(&f, &w, &lambda, &r1, &r2, &r3, &dsc);
        let a_max = cones.max_step(&it.s, &dir.ds, 1e3).min(cones.max_step(&it.z, &dir.dz, 1e3));
        let alpha = (0.99 * a_max).min(1.0);
        if alpha < 1e-13 {
            status = SolveStatus::NumericalFailure;
            break;
        }
        it.x += &dir.dx * alpha;
        it.y += &dir.dy * alpha;
        it.z += &dir.dz * alpha;
        it.s += &dir.ds * alpha;
    }
    if matches!(status, SolveStatus::IterationLimit | SolveStatus::NumericalFailure) {
        if let Some((_, b)) = best {
            it = b;
        }
    }
    finish(prog, &std, it, status, iterations)
}

/// Previous primal and dual values, moved a fixed distance into the cone
/// component by component so that rows that changed little keep their values.
fn warm_iterate(std: &Std, ws: &WarmStart) -> Iterate {
    let tau = 0.1;
    let get = |v: &DVector<f64>, i: usize| v.get(i).copied().unwrap_or(0.0);
    let x = DVector::from_fn(std.n, |i, _| get(&ws.x, i));
    let cones = std.cones;
    let mut s = &std.h - std.g_mul(&x);
    let mut z = DVector::zeros(cones.dim());
    for (r, o) in std.origin.iter().enumerate() {
        let d = match o {
            Origin::Ineq(i) => get(&ws.inequality_duals, *i),
            Origin::Lower(i) => get(&ws.lower_duals, *i),
            Origin::Upper(i) => get(&ws.upper_duals, *i),
        };
        z[r] = (d * std.obj_scale / std.orth_scale[r]).max(tau);
        s[r] = s[r].max(tau);
    }
    if cones.soc > 0 {
        let o = cones.orth;
        for r in 0..cones.soc {
            z[o + r] = get(&ws.norm_dual, r) * std.obj_scale / std.soc_scale;
        }
        for v in [&mut s, &mut z] {
            let gap = v[o] - v.rows(o + 1, cones.soc - 1).norm();
            if gap < tau {
                v[o] += tau - gap;
            }
        }
    }
    Iterate { x, y: DVector::zeros(std.eq.len()), z, s }
}

/// Farkas-type certificates on diverging iterates.
fn certificate(std: &Std, it: &Iterate) -> Option<SolveStatus> {
    const RATIO: f64 = 1e-9;
    const BIG: f64 = 1e7;
    let zn = it.z.amax().max(it.y.amax());
    if zn > BIG {
        let t = -(std.h.dot(&it.z) + std.b.dot(&it.y));
        let r = (std.gt_mul(&it.z) + std.at_mul(&it.y)).amax();
        if t > 1e-6 * zn && r <= RATIO * t {
            return Some(SolveStatus::Infeasible);
        }
    }
    let xn = it.x.amax();
    if xn > BIG {
        let t = -std.q.dot(&it.x);
        if t > 1e-6 * xn {
            let px = (&std.p * &it.x).amax();
            let ax = std.a_mul(&it.x).amax();
            let gx = std.g_mul(&it.x);
            let mut cone_viol: f64 = 0.0;
            for i in 0..std.cones.orth {
                cone_viol = cone_viol.max(gx[i]);
            }
            if std.cones.soc > 0 {
                let o = std.cones.orth;
                let k = std.cones.soc;
                cone_viol = cone_viol.max(gx.rows(o + 1, k - 1).norm() + gx[o]);
            }
            if px.max(ax).max(cone_viol) <= RATIO * t {
                return Some(SolveStatus::Unbounded);
            }
        }
    }
    None
}

fn finish_trivial(prog: &ConvexProgram, status: SolveStatus) -> Solution {
    let n = prog.num_vars();
    Solution {
        status,
        x: DVector::from_element(n, f64::NAN),
        objective: f64::NAN,
        residuals: KktResiduals { primal: f64::NAN, dual: f64::NAN, gap: f64::NAN },
        iterations: 0,
        inequality_duals: DVector::from_element(prog.inequalities.len(), f64::NAN),
        equality_duals: DVector::from_element(prog.equalities.len(), f64::NAN),
        lower_duals: DVector::from_element(n, f64::NAN),
        upper_duals: DVector::from_element(n, f64::NAN),
        norm_dual: DVector::zeros(0),
    }
}

fn finish(prog: &ConvexProgram, std: &Std, it: Iterate, mut status: SolveStatus, iterations: usize) -> Solution {
    let x = it.x.clone();
    let objective = prog.objective(&x);
    let mut ineq = DVector::zeros(prog.inequalities.len());
    for (r, o) in std.origin.iter().enumerate() {
        if let Origin::Ineq(i) = o {
            ineq[*i] = it.z[r] * std.orth_scale[r] / std.obj_scale;
        }
    }
    let n = prog.num_vars();
    let (mut lower, mut upper) = (DVector::zeros(n), DVector::zeros(n));
    for (r, o) in std.origin.iter().enumerate() {
        let d = it.z[r] * std.orth_scale[r] / std.obj_scale;
        match o {
            Origin::Lower(i) => lower[*i] = d,
            Origin::Upper(i) => upper[*i] = d,
            Origin::Ineq(_) => {}
        }
    }
    let norm_dual = it.z.rows(std.cones.orth, std.cones.soc) * (std.soc_scale / std.obj_scale);
    let mut eqd = DVector::zeros(prog.equalities.len());
    for (r, o) in std.eq_origin.iter().enumerate() {
        if let Some(j) = o {
            eqd[*j] = it.y[r] * std.eq_scale[r] / std.obj_scale;
        }
    }
    let rx = &std.p * &it.x + &std.q + std.at_mul(&it.y) + std.gt_mul(&it.z);
    let residuals = KktResiduals {
        primal: prog.scaled_violation(&x),
        dual: rx.amax() / std.obj_scale / (1.0 + prog.linear.amax()),
        gap: it.s.dot(&it.z).abs() / std.obj_scale / (1.0 + objective.abs()),
    };
    if matches!(status, SolveStatus::IterationLimit | SolveStatus::NumericalFailure)
        && residuals.primal <= 1e-7
        && residuals.dual <= 1e-6
        && residuals.gap <= 1e-6
    {
        status = SolveStatus::Optimal;
    }
    if status == SolveStatus::Optimal && !(residuals.primal <= 1e-7 && residuals.dual <= 1e-6) {
        status = SolveStatus::NumericalFailure;
    }
    Solution { status, x, objective, residuals, iterations, inequality_duals: ineq, equality_duals: eqd, lower_duals: lower, upper_duals: upper, norm_dual }
}
