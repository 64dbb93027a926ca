//! Closed-loop Monte-Carlo runs: moment and disturbance sampling, the
//! receding-horizon loop, CSV logs and summary statistics.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::ambiguity::DisturbanceWindow;
use crate::config::{MomentCadence, RunConfig, ScenarioConfig, Setup};
use crate::cutting_plane::Controller;
use crate::error::{Error, Result};
use crate::linalg::psd_sqrt;

/// A state counts as violating when some row of `F0 x + G0` exceeds this.
pub const VIOLATION_TOL: f64 = 1e-9;

/// Uniformly distributed rotation (Haar measure on SO(n)).
pub fn random_rotation<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if n > 0 && q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

/// True moments: mean uniform in `[-mu0, mu0]^n`, covariance `R' diag(l) R`
/// with eigenvalues uniform in `[0, sigma0^2]`.
pub fn sample_true_moments<R: Rng>(mu0: f64, sigma0: f64, nw: usize, rng: &mut R) -> (DVector<f64>, DMatrix<f64>) {
    let mu = DVector::from_fn(nw, |_, _| if mu0 > 0.0 { rng.random_range(-mu0..=mu0) } else { 0.0 });
    if sigma0 == 0.0 {
        return (mu, DMatrix::zeros(nw, nw));
    }
    let top = sigma0 * sigma0;
    let lam = DVector::from_fn(nw, |_, _| rng.random_range(0.0..=top));
    let rot = random_rotation(nw, rng);
    let sigma = rot.transpose() * DMatrix::from_diagonal(&lam) * &rot;
    (mu, crate::linalg::symmetrize(&sigma))
}

/// Gaussian draw `mu + S z` with `S` the PSD square root of `sigma`.
pub fn sample_disturbance<R: Rng>(mu: &DVector<f64>, sigma: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    if sigma.iter().all(|v| *v == 0.0) {
        return mu.clone();
    }
    let z = DVector::from_fn(mu.len(), |_, _| StandardNormal.sample(rng));
    mu + psd_sqrt(sigma) * z
}

/// One closed-loop step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub x: DVector<f64>,
    /// Applied physical input `K x + v`.
    pub u: DVector<f64>,
    /// First planned move.
    pub v: DVector<f64>,
    pub w: DVector<f64>,
    /// Optimal value including the state-only constant.
    pub cost: f64,
    pub gamma: f64,
    pub iterations: usize,
    pub cuts: usize,
    /// `F0 x + G0`; positive entries are violations.
    pub margins: DVector<f64>,
    /// Whole planned sequence.
    pub plan: DVector<f64>,
    pub upper_bound: f64,
    pub master_solves: usize,
    pub supports: usize,
    pub terminal_relaxation: f64,
    /// Whether the master objective sequence was nondecreasing (relative 1e-8).
    pub monotone: bool,
    /// Transport distance from the zero distribution to the empirical one.
    pub zero_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub run: usize,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    /// State after the last step.
    pub final_state: DVector<f64>,
    pub final_margins: DVector<f64>,
    pub failure: Option<String>,
}

impl Trajectory {
    /// All visited states, including the final one.
    pub fn states(&self) -> Vec<&DVector<f64>> {
        self.steps.iter().map(|s| &s.x).chain(std::iter::once(&self.final_state)).collect()
    }

    fn margins(&self) -> Vec<&DVector<f64>> {
        self.steps.iter().map(|s| &s.margins).chain(std::iter::once(&self.final_margins)).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunStats {
    pub run: usize,
    pub steps: usize,
    pub failed: bool,
    /// Fraction of visited states violating each row.
    pub row_violation_rate: Vec<f64>,
    /// Fraction of visited states violating any row.
    pub violation_rate: f64,
    pub max_violation: f64,
    pub max_state_norm: f64,
    pub final_state_norm: f64,
    pub max_abs_input: f64,
    /// `(1/N_k) sum ||x||_Q^2 + ||v||_R^2` after the burn-in.
    pub average_cost: f64,
    /// Same with the physical input.
    pub average_cost_physical: f64,
}

pub fn run_stats(traj: &Trajectory, setup: &Setup, burn_in: usize) -> RunStats {
    let margins = traj.margins();
    let nc = setup.constraints.nc();
    let count = margins.len().max(1) as f64;
    let row_violation_rate = (0..nc).map(|i| margins.iter().filter(|m| m[i] > VIOLATION_TOL).count() as f64 / count).collect();
    let violation_rate = margins.iter().filter(|m| m.iter().any(|v| *v > VIOLATION_TOL)).count() as f64 / count;
    let max_violation = margins.iter().flat_map(|m| m.iter().copied()).fold(0.0, f64::max);
    let max_state_norm = traj.states().iter().map(|x| x.norm()).fold(0.0, f64::max);
    let max_abs_input = traj.steps.iter().flat_map(|s| s.u.iter().map(|v| v.abs())).fold(0.0, f64::max);
    let tail: Vec<&StepRecord> = traj.steps.iter().skip(burn_in).collect();
    let avg = |f: &dyn Fn(&StepRecord) -> f64| if tail.is_empty() { 0.0 } else { tail.iter().map(|s| f(s)).sum::<f64>() / tail.len() as f64 };
    let w = &setup.weights;
    RunStats {
        run: traj.run,
        steps: traj.steps.len(),
        failed: traj.failure.is_some(),
        row_violation_rate,
        violation_rate,
        max_violation,
        max_state_norm,
        final_state_norm: traj.final_state.norm(),
        max_abs_input,
        average_cost: avg(&|s| w.stage_cost(&s.x, &s.v)),
        average_cost_physical: avg(&|s| w.stage_cost(&s.x, &s.u)),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioStats {
    pub runs: usize,
    pub failed_runs: usize,
    pub violation_rate: f64,
    pub max_run_violation_rate: f64,
    pub max_violation: f64,
    pub max_state_norm: f64,
    pub max_abs_input: f64,
    pub average_cost: f64,
    pub average_cost_physical: f64,
}

pub fn aggregate(stats: &[RunStats]) -> ScenarioStats {
    let n = stats.len().max(1) as f64;
    let steps: usize = stats.iter().map(|s| s.steps + 1).sum();
    let weighted = stats.iter().map(|s| s.violation_rate * (s.steps + 1) as f64).sum::<f64>();
    ScenarioStats {
        runs: stats.len(),
        failed_runs: stats.iter().filter(|s| s.failed).count(),
        violation_rate: if steps == 0 { 0.0 } else { weighted / steps as f64 },
        max_run_violation_rate: stats.iter().map(|s| s.violation_rate).fold(0.0, f64::max),
        max_violation: stats.iter().map(|s| s.max_violation).fold(0.0, f64::max),
        max_state_norm: stats.iter().map(|s| s.max_state_norm).fold(0.0, f64::max),
        max_abs_input: stats.iter().map(|s| s.max_abs_input).fold(0.0, f64::max),
        average_cost: stats.iter().map(|s| s.average_cost).sum::<f64>() / n,
        average_cost_physical: stats.iter().map(|s| s.average_cost_physical).sum::<f64>() / n,
    }
}

/// Closed-loop simulator bound to one setup and controller.
pub struct Simulator<'a> {
    pub setup: &'a Setup,
    pub controller: &'a Controller,
    pub samples: usize,
    pub window: usize,
}

impl<'a> Simulator<'a> {
    pub fn new(setup: &'a Setup, controller: &'a Controller, cfg: &RunConfig) -> Self {
        Self { setup, controller, samples: cfg.ambiguity.samples, window: cfg.ambiguity.window }
    }

    /// One run with its own stream seeded by `seed + run`.
    pub fn run(&self, scenario: &ScenarioConfig, run: usize) -> Trajectory {
        let seed = scenario.seed.wrapping_add(run as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = self.setup;
        let (nu, nw, horizon) = (s.plant.nu(), s.plant.nw(), self.controller.horizon());
        let mut window = DisturbanceWindow::new(&s.plant.d, self.window);
        let mut x = s.x0.clone();
        let mut moments = sample_true_moments(scenario.mu0, scenario.sigma0, nw, &mut rng);
        let mut steps = Vec::with_capacity(scenario.steps);
        let mut failure = None;
        for k in 0..scenario.steps {
            let samples = window.bootstrap(self.samples, horizon, nw, &mut rng);
            let zero_distance = samples.distance_from_zero(&self.controller.reform.ambiguity);
            let sol = match self.controller.solve_step(&x, &samples) {
                Ok(sol) => sol,
                Err(e) => {
                    failure = Some(format!("step {k}: {e}"));
                    break;
                }
            };
            let v = sol.u_bar.rows(0, nu).into_owned();
            let u = &s.gain * &x + &v;
            if k > 0 && scenario.moments == MomentCadence::PerStep {
                moments = sample_true_moments(scenario.mu0, scenario.sigma0, nw, &mut rng);
            }
            let w = sample_disturbance(&moments.0, &moments.1, &mut rng);
            let nominal = s.plant.nominal(&x, &u);
            let x_next = &nominal + &s.plant.d * &w;
            window.record(&x_next, &nominal);
            let d = &sol.diagnostics;
            let monotone = d.master_objectives.windows(2).all(|p| p[1] >= p[0] - 1e-8 * (1.0 + p[0].abs()));
            steps.push(StepRecord {
                k,
                margins: s.constraints.margins(&x),
                x,
                u,
                v,
                w,
                cost: sol.objective,
                gamma: sol.gamma,
                iterations: d.outer_iterations,
                cuts: d.cuts,
                plan: sol.u_bar.clone(),
                upper_bound: sol.upper_bound,
                master_solves: d.master_solves,
                supports: d.supports,
                terminal_relaxation: d.terminal_relaxation,
                monotone,
                zero_distance,
            });
            x = x_next;
        }
        Trajectory { run, seed, steps, final_margins: s.constraints.margins(&x), final_state: x, failure }
    }

    /// All runs of a scenario, spread over the available cores. Each run owns
    /// its random stream, so the result does not depend on the thread count.
    pub fn run_scenario(&self, scenario: &ScenarioConfig) -> Vec<Trajectory> {
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(scenario.runs.max(1));
        if threads <= 1 {
            return (0..scenario.runs).map(|r| self.run(scenario, r)).collect();
        }
        let next = std::sync::atomic::AtomicUsize::new(0);
        let mut out: Vec<Trajectory> = std::thread::scope(|sc| {
            let handles: Vec<_> = (0..threads)
                .map(|_| {
                    sc.spawn(|| {
                        let mut mine = Vec::new();
                        loop {
                            let r = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                            if r >= scenario.runs {
                                break mine;
                            }
                            mine.push(self.run(scenario, r));
                        }
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("simulation thread panicked")).collect()
        });
        out.sort_by_key(|t| t.run);
        out
    }
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    if n == 1 && (prefix == "u" || prefix == "v") {
        vec![prefix.to_string()]
    } else {
        (1..=n).map(|i| format!("{prefix}{i}")).collect()
    }
}

/// Header of the per-run log.
pub fn log_header(nx: usize, nu: usize, nw: usize, nc: usize) -> Vec<String> {
    let mut h = vec!["k".to_string()];
    h.extend(names("x", nx));
    h.extend(names("u", nu));
    h.extend(names("v", nu));
    h.extend(names("w", nw));
    h.extend(["J", "gamma", "iters", "cuts"].map(String::from));
    h.extend(names("viol_margin_", nc));
    h
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn run_file(dir: &Path, run: usize) -> PathBuf {
    dir.join(format!("run_{run:03}.csv"))
}

pub fn plan_file(dir: &Path, run: usize) -> PathBuf {
    dir.join(format!("run_{run:03}_plan.csv"))
}

/// Writes `run_XXX.csv` and the `run_XXX_plan.csv` sidecar.
pub fn write_trajectory(dir: &Path, traj: &Trajectory, setup: &Setup) -> Result<()> {
    let (nx, nu, nw, nc) = (setup.plant.nx(), setup.plant.nu(), setup.plant.nw(), setup.constraints.nc());
    let header = log_header(nx, nu, nw, nc);
    let mut wtr = csv::Writer::from_path(run_file(dir, traj.run))?;
    wtr.write_record(&header)?;
    for s in &traj.steps {
        let mut row = vec![s.k.to_string()];
        row.extend(s.x.iter().map(|v| num(*v)));
        row.extend(s.u.iter().map(|v| num(*v)));
        row.extend(s.v.iter().map(|v| num(*v)));
        row.extend(s.w.iter().map(|v| num(*v)));
        row.extend([num(s.cost), num(s.gamma), s.iterations.to_string(), s.cuts.to_string()]);
        row.extend(s.margins.iter().map(|v| num(*v)));
        wtr.write_record(&row)?;
    }
    let mut last = vec![traj.steps.len().to_string()];
    last.extend(traj.final_state.iter().map(|v| num(*v)));
    last.resize(header.len() - nc, String::new());
    last.extend(traj.final_margins.iter().map(|v| num(*v)));
    wtr.write_record(&last)?;
    wtr.flush()?;

    let m = traj.steps.first().map_or(0, |s| s.plan.len());
    let mut wtr = csv::Writer::from_path(plan_file(dir, traj.run))?;
    let mut h = vec!["k".to_string()];
    h.extend((0..m).map(|i| format!("plan_{i}")));
    h.extend(["upper_bound", "master_solves", "supports", "terminal_relaxation", "monotone", "zero_distance"].map(String::from));
    wtr.write_record(&h)?;
    for s in &traj.steps {
        let mut row = vec![s.k.to_string()];
        row.extend(s.plan.iter().map(|v| num(*v)));
        row.extend([num(s.upper_bound), s.master_solves.to_string(), s.supports.to_string(), num(s.terminal_relaxation), s.monotone.to_string(), num(s.zero_distance)]);
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

fn parse_f(s: &str, what: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Log(format!("{what}, row {line}: `{s}` is not a number")))
}

fn parse_u(s: &str, what: &str, line: usize) -> Result<usize> {
    s.trim().parse::<usize>().map_err(|_| Error::Log(format!("{what}, row {line}: `{s}` is not an integer")))
}

/// Reads a run written by [`write_trajectory`].
pub fn read_trajectory(dir: &Path, run: usize, setup: &Setup) -> Result<Trajectory> {
    let (nx, nu, nw, nc) = (setup.plant.nx(), setup.plant.nu(), setup.plant.nw(), setup.constraints.nc());
    let path = run_file(dir, run);
    let what = path.display().to_string();
    let mut rdr = csv::Reader::from_path(&path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header != log_header(nx, nu, nw, nc) {
        return Err(Error::Log(format!("{what}: unexpected header")));
    }
    let rows: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    let Some((last, body)) = rows.split_last() else {
        return Err(Error::Log(format!("{what}: no rows")));
    };
    let plan_path = plan_file(dir, run);
    let mut prdr = csv::Reader::from_path(&plan_path)?;
    let plans: Vec<csv::StringRecord> = prdr.records().collect::<std::result::Result<_, _>>()?;
    if plans.len() != body.len() {
        return Err(Error::Log(format!("{}: {} rows, expected {}", plan_path.display(), plans.len(), body.len())));
    }
    let vec_at = |r: &csv::StringRecord, start: usize, n: usize, line: usize| -> Result<DVector<f64>> {
        let v: Result<Vec<f64>> = (start..start + n).map(|i| parse_f(r.get(i).unwrap_or(""), &what, line)).collect();
        Ok(DVector::from_vec(v?))
    };
    let mut steps = Vec::with_capacity(body.len());
    for (i, (r, p)) in body.iter().zip(&plans).enumerate() {
        let line = i + 2;
        let k = parse_u(&r[0], &what, line)?;
        let mut c = 1;
        let x = vec_at(r, c, nx, line)?;
        c += nx;
        let u = vec_at(r, c, nu, line)?;
        c += nu;
        let v = vec_at(r, c, nu, line)?;
        c += nu;
        let w = vec_at(r, c, nw, line)?;
        c += nw;
        let cost = parse_f(&r[c], &what, line)?;
        let gamma = parse_f(&r[c + 1], &what, line)?;
        let iterations = parse_u(&r[c + 2], &what, line)?;
        let cuts = parse_u(&r[c + 3], &what, line)?;
        let margins = vec_at(r, c + 4, nc, line)?;
        let m = p.len() - 7;
        let plan = vec_at(p, 1, m, line)?;
        steps.push(StepRecord {
            k,
            x,
            u,
            v,
            w,
            cost,
            gamma,
            iterations,
            cuts,
            margins,
            plan,
            upper_bound: parse_f(&p[m + 1], &what, line)?,
            master_solves: parse_u(&p[m + 2], &what, line)?,
            supports: parse_u(&p[m + 3], &what, line)?,
            terminal_relaxation: parse_f(&p[m + 4], &what, line)?,
            monotone: p[m + 5].trim() == "true",
            zero_distance: parse_f(&p[m + 6], &what, line)?,
        });
    }
    let line = rows.len() + 1;
    let final_state = vec_at(last, 1, nx, line)?;
    let final_margins = vec_at(last, header.len() - nc, nc, line)?;
    Ok(Trajectory { run, seed: 0, steps, final_state, final_margins, failure: None })
}

/// Run indices present in a log directory.
pub fn list_runs(dir: &Path) -> Result<Vec<usize>> {
    let mut runs = Vec::new();
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(idx) = name.strip_prefix("run_").and_then(|s| s.strip_suffix(".csv")) {
            if let Ok(r) = idx.parse::<usize>() {
                runs.push(r);
            }
        }
    }
    runs.sort_unstable();
    Ok(runs)
}

/// Writes the aggregate CSV: one row per run plus an `all` row.
pub fn write_aggregate(path: &Path, scenario: &str, stats: &[RunStats], total: &ScenarioStats) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["scenario", "run", "steps", "failed", "violation_rate", "max_violation", "max_state_norm", "final_state_norm", "max_abs_input", "average_cost", "average_cost_physical"])?;
    for s in stats {
        wtr.write_record([
            scenario.to_string(),
            s.run.to_string(),
            s.steps.to_string(),
            s.failed.to_string(),
            num(s.violation_rate),
            num(s.max_violation),
            num(s.max_state_norm),
            num(s.final_state_norm),
            num(s.max_abs_input),
            num(s.average_cost),
            num(s.average_cost_physical),
        ])?;
    }
    wtr.write_record([
        scenario.to_string(),
        "all".into(),
        stats.iter().map(|s| s.steps).sum::<usize>().to_string(),
        total.failed_runs.to_string(),
        num(total.violation_rate),
        num(total.max_violation),
        num(total.max_state_norm),
        String::new(),
        num(total.max_abs_input),
        num(total.average_cost),
        num(total.average_cost_physical),
    ])?;
    wtr.flush()?;
    Ok(())
}
