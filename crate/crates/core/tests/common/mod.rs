#![allow(dead_code)]

use tsdr_mpc::config::RunConfig;

pub const CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/paper_sv.toml");

pub fn paper() -> RunConfig {
    RunConfig::load(CONFIG.as_ref()).unwrap()
}

/// Scalar plant `x+ = a x + b u + d w`, one constraint `f x + g <= 0`, horizon one.
#[derive(Debug, Clone, Copy)]
pub struct Toy {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub f: f64,
    pub g: f64,
    pub q: f64,
    pub r: f64,
    pub h: f64,
    pub radius: f64,
    pub u_max: f64,
}

impl Toy {
    pub fn standard() -> Self {
        Self { a: 0.9, b: 1.0, d: 1.0, f: 1.0, g: -1.0, q: 1.0, r: 0.1, h: 10.0, radius: 0.05, u_max: 1.0 }
    }

    pub fn config(&self, x0: f64) -> RunConfig {
        let t = format!(
            "[plant]\na = [[{}]]\nb = [[{}]]\nd = [[{}]]\nf0 = [[{}]]\ng0 = [{}]\nu_min = [{}]\nu_max = [{}]\nx0 = [{x0}]\n\
             [weights]\nq = [[{}]]\nr = [[{}]]\n\
             [controller]\nhorizon = 1\nl_c = 100.0\npenalty = {}\nprestabilize = false\n\
             [ambiguity]\nradius = {}\nsamples = 2\n",
            self.a, self.b, self.d, self.f, self.g, -self.u_max, self.u_max, self.q, self.r, self.h, self.radius
        );
        RunConfig::from_toml(&t).unwrap()
    }

    /// Terminal weight from the scalar Riccati equation.
    pub fn p(&self) -> f64 {
        let (a, b, q, r) = (self.a, self.b, self.q, self.r);
        let lin = r * (1.0 - a * a) - q * b * b;
        (-lin + (lin * lin + 4.0 * b * b * q * r).sqrt()) / (2.0 * b * b)
    }

    fn inner(&self, x: f64, u: f64, gamma: f64, ws: f64, w: f64, pi: f64) -> f64 {
        let z = self.a * x + self.b * u + self.d * w;
        let cs = (self.f * self.d).powi(2);
        self.q * x * x + self.p() * z * z + self.r * u * u + pi * (self.f * z + self.g) - gamma * 0.5 * cs * (w - ws).powi(2)
    }

    /// `max_w` over a grid around the sample, refined around the best point.
    fn inner_max(&self, x: f64, u: f64, gamma: f64, ws: f64) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for pi in [0.0, self.h] {
            let (mut lo, mut step, mut count) = (ws - 50.0, 0.05, 2001);
            let mut arg = ws;
            for _ in 0..8 {
                let mut b = f64::NEG_INFINITY;
                for i in 0..count {
                    let w = lo + step * i as f64;
                    let v = self.inner(x, u, gamma, ws, w, pi);
                    if v > b {
                        b = v;
                        arg = w;
                    }
                }
                best = best.max(b);
                lo = arg - step;
                step /= 10.0;
                count = 21;
            }
        }
        best
    }

    /// `eps gamma + mean_s max_w [...]`.
    pub fn objective(&self, x: f64, u: f64, gamma: f64, samples: &[f64]) -> f64 {
        self.radius * gamma + samples.iter().map(|ws| self.inner_max(x, u, gamma, *ws)).sum::<f64>() / samples.len() as f64
    }

    /// Coarse grid for a bracket, then golden section. The objective is
    /// jointly convex, so the partial minimum over `gamma` is convex in `u`.
    pub fn brute_force(&self, x: f64, samples: &[f64]) -> (f64, f64, f64) {
        let floor = 2.0 * self.p() * self.d * self.d / (self.f * self.d).powi(2) * (1.0 + 1e-6);
        let best_gamma = |u: f64| {
            let g = minimize(|g| self.objective(x, u, g, samples), floor, floor + 200.0, 200);
            (self.objective(x, u, g, samples), g)
        };
        let u = minimize(|u| best_gamma(u).0, -self.u_max, self.u_max, 40);
        let (j, g) = best_gamma(u);
        (j, u, g)
    }
}

/// Grid of `n` cells over `[lo, hi]`, then golden section on the bracketing cells.
pub fn minimize(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let step = (hi - lo) / n as f64;
    let best = (0..=n).map(|i| lo + step * i as f64).map(|t| (f(t), t)).min_by(|a, b| a.0.total_cmp(&b.0)).unwrap().1;
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - r * (b - a), a + r * (b - a));
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-10 * (1.0 + a.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    [(f(lo), lo), (f(hi), hi), (f(t), t)].into_iter().min_by(|p, q| p.0.total_cmp(&q.0)).unwrap().1

}
