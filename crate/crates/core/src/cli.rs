//! Command implementations behind the `tsdr` binary.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 structural
//! failure (plant checks, flagged audits), 4 solver failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;

use crate::ambiguity::EmpiricalSamples;
use crate::analysis::{average_cost_vs_bound, gelbrich_report, summarize, theorem3_bound, write_audit, Auditor, ConstantInputs};
use crate::config::{RunConfig, Setup};
use crate::simulator::{aggregate, list_runs, read_trajectory, run_stats, write_aggregate, write_trajectory, Simulator};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STRUCTURAL: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

/// Name of the configuration echo written next to every set of logs.
pub const CONFIG_ECHO: &str = "config_echo.toml";

#[derive(Debug, Parser)]
#[command(name = "tsdr", version, about = "Two-stage distributionally robust MPC: simulate, solve, bound and audit")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Default)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Scenario preset: nominal, a, b, c, d or custom.
    #[arg(long, global = true)]
    pub scenario: Option<String>,
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Closed-loop Monte-Carlo runs; writes per-run and aggregate CSVs.
    Simulate,
    /// One controller step from a given state with zero samples.
    Solve {
        /// Comma-separated state, defaults to the configured initial state.
        #[arg(long)]
        state: Option<String>,
    },
    /// Stability constants, the average-cost bound and worst-case moment bounds.
    Bounds,
    /// Audits logs written by `simulate`.
    Audit {
        /// Log directory, defaults to `<out>/<scenario>`.
        dir: Option<PathBuf>,
    },
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Log(_) | Error::Io(_) | Error::Csv(_) | Error::InvalidParameter(_) | Error::Dimension(_) | Error::NonFinite(_) => EXIT_CONFIG,
        Error::Structural(_) | Error::NotContractive { .. } | Error::NotPositiveDefinite(_) => EXIT_STRUCTURAL,
        Error::Solver { .. } | Error::IterationCap(_) | Error::AscentCap(_) | Error::EmptyInputSet { .. } | Error::RiccatiDiverged { .. } | Error::GammaDomain { .. } => EXIT_SOLVER,
    }
}

/// Loads the configuration and applies the command-line overrides.
pub fn resolve_config(common: &Common) -> Result<(RunConfig, String)> {
    let path = common.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    apply_overrides(&mut cfg, common)?;
    let id = common.scenario.clone().unwrap_or_else(|| "custom".into());
    Ok((cfg, id))
}

pub fn apply_overrides(cfg: &mut RunConfig, common: &Common) -> Result<()> {
    if let Some(id) = &common.scenario {
        cfg.scenario = cfg.scenario.preset(id)?;
    }
    if let Some(r) = common.runs {
        cfg.scenario.runs = r;
    }
    if let Some(s) = common.steps {
        cfg.scenario.steps = s;
    }
    if let Some(s) = common.seed {
        cfg.scenario.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output.dir = o.display().to_string();
    }
    cfg.validate()
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    writeln!(out, "{text}")?;
    Ok(())
}

fn warn(setup: &Setup) {
    for w in &setup.warnings {
        eprintln!("warning: {w}");
    }
}

/// Parses the program arguments and runs the command; returns the exit code.
pub fn main_with(args: impl IntoIterator<Item = String>, out: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Simulate => cmd_simulate(&cli.common, out),
        Command::Solve { state } => cmd_solve(&cli.common, state.as_deref(), out),
        Command::Bounds => cmd_bounds(&cli.common, out),
        Command::Audit { dir } => cmd_audit(&cli.common, dir.as_deref(), out),
    }
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    scenario: &'a str,
    dir: String,
    stats: crate::simulator::ScenarioStats,
    failures: Vec<String>,
}

pub fn cmd_simulate(common: &Common, out: &mut dyn Write) -> Result<i32> {
    let (cfg, id) = resolve_config(common)?;
    let (setup, ctrl) = cfg.build_controller()?;
    warn(&setup);
    let dir = Path::new(&cfg.output.dir).join(&id);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(CONFIG_ECHO), cfg.to_toml())?;

    let trajs = Simulator::new(&setup, &ctrl, &cfg).run_scenario(&cfg.scenario);
    let mut stats = Vec::with_capacity(trajs.len());
    let mut failures = Vec::new();
    for tr in &trajs {
        write_trajectory(&dir, tr, &setup)?;
        stats.push(run_stats(tr, &setup, cfg.analysis.burn_in));
        if let Some(f) = &tr.failure {
            failures.push(format!("run {}: {f}", tr.run));
        }
    }
    let total = aggregate(&stats);
    write_aggregate(&dir.join("aggregate.csv"), &id, &stats, &total)?;
    if common.json {
        emit(out, &SimulateReport { scenario: &id, dir: dir.display().to_string(), stats: total, failures: failures.clone() })?;
    } else {
        writeln!(out, "scenario {id}: {} runs x {} steps -> {}", total.runs, cfg.scenario.steps, dir.display())?;
        writeln!(out, "  violation rate {:.4} (worst run {:.4}), max violation {:.4}", total.violation_rate, total.max_run_violation_rate, total.max_violation)?;
        writeln!(out, "  max |x| {:.4}, max |u| {:.4}, average stage cost {:.6}", total.max_state_norm, total.max_abs_input, total.average_cost)?;
        for f in &failures {
            writeln!(out, "  FAILED {f}")?;
        }
    }
    Ok(if failures.is_empty() { EXIT_OK } else { EXIT_SOLVER })
}

fn parse_state(text: &str, nx: usize) -> Result<DVector<f64>> {
    let v: std::result::Result<Vec<f64>, _> = text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match v {
        Ok(v) if v.len() == nx && v.iter().all(|x| x.is_finite()) => Ok(DVector::from_vec(v)),
        _ => Err(Error::Config(format!("--state must be {nx} comma-separated numbers, got `{text}`"))),
    }
}

#[derive(Serialize)]
struct SolveReport {
    state: Vec<f64>,
    plan: Vec<f64>,
    inputs: Vec<f64>,
    gamma: f64,
    objective: f64,
    upper_bound: f64,
    terminal_norm: f64,
    terminal_radius: f64,
    terminal_active: bool,
    diagnostics: crate::cutting_plane::SolveDiagnostics,
}

pub fn cmd_solve(common: &Common, state: Option<&str>, out: &mut dyn Write) -> Result<i32> {
    let (cfg, _) = resolve_config(common)?;
    let (setup, ctrl) = cfg.build_controller()?;
    warn(&setup);
    let x = match state {
        Some(s) => parse_state(s, setup.plant.nx())?,
        None => setup.x0.clone(),
    };
    let samples = EmpiricalSamples::zeros(cfg.ambiguity.samples, setup.lifted.horizon * setup.lifted.nw);
    let sol = ctrl.solve_step(&x, &samples)?;
    let zn = setup.lifted.terminal(&x, &sol.u_bar).norm();
    let radius = setup.l_c.sqrt() * x.norm() + sol.diagnostics.terminal_relaxation;
    let report = SolveReport {
        state: x.iter().copied().collect(),
        plan: sol.u_bar.iter().copied().collect(),
        inputs: ctrl.physical_inputs(&x, &sol.u_bar).iter().copied().collect(),
        gamma: sol.gamma,
        objective: sol.objective,
        upper_bound: sol.upper_bound,
        terminal_norm: zn,
        terminal_radius: radius,
        terminal_active: radius - zn <= 1e-6 * (1.0 + radius),
        diagnostics: sol.diagnostics,
    };
    if common.json {
        emit(out, &report)?;
    } else {
        writeln!(out, "state     {:?}", report.state)?;
        writeln!(out, "plan v    {:?}", report.plan)?;
        writeln!(out, "inputs u  {:?}", report.inputs)?;
        writeln!(out, "gamma     {:.6}", report.gamma)?;
        writeln!(out, "J(k)      {:.8} (upper bound {:.8})", report.objective, report.upper_bound)?;
        writeln!(out, "terminal  |z_N| = {:.6} vs radius {:.6} ({})", zn, radius, if report.terminal_active { "active" } else { "inactive" })?;
        let d = &report.diagnostics;
        writeln!(out, "cuts      {} supports, {} vertex cuts, {} outer / {} master iterations", d.supports, d.vertex_cuts, d.outer_iterations, d.master_solves)?;
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct BoundsReport {
    inputs: ConstantInputs,
    bound: crate::analysis::PerformanceBound,
    moments: crate::analysis::WorstCaseMomentBounds,
    lc_threshold: f64,
    observability_rank: usize,
    config: RunConfig,
}

pub fn cmd_bounds(common: &Common, out: &mut dyn Write) -> Result<i32> {
    let (cfg, _) = resolve_config(common)?;
    let setup = cfg.build()?;
    warn(&setup);
    let inp = ConstantInputs::from_setup(&setup)?;
    let sigma = cfg.scenario.covariance_bound(setup.plant.nw());
    let mu = cfg.scenario.mean_bound();
    let radius = cfg.ambiguity.radius;
    let bound = theorem3_bound(&inp, radius, mu, sigma.trace())?;
    let moments = gelbrich_report(radius, &setup.transport_weight()?, setup.lifted.horizon, mu, &sigma);
    if common.json {
        emit(out, &BoundsReport { inputs: inp, bound, moments, lc_threshold: setup.lc_threshold, observability_rank: setup.observability_rank, config: cfg })?;
        return Ok(EXIT_OK);
    }
    let k = &bound.constants;
    writeln!(out, "plant: L_A {:.6}, L_B {:.6}, L_D {:.6}, u_u {:.6}, L_B1 {:.6}", inp.l_a, inp.l_b, inp.l_d, inp.u_u, inp.l_b1)?;
    writeln!(out, "structure: observability rank {}, l_c threshold {:.6e} (l_c = {})", setup.observability_rank, setup.lc_threshold, setup.l_c)?;
    writeln!(out, "c1 {:.6e}  c2 {:.6e}  c_l {:.6}  c_sN {:.6}", k.c1, k.c2, k.c_l, k.c_sn)?;
    writeln!(out, "C_A1..5 {:.6?}  C_w1 {:.6e}  C_w2 {:.6e}", k.c_a, k.c_w1, k.c_w2)?;
    writeln!(out, "k0 {:.6}  k1 {:.6e}  k2 {:.6e}  k31 {:.6e}  k32 {:.6e}  k4 {:.6e}  k5 {:.6e}", k.k0, k.k1, k.k2, k.k31, k.k32, k.k4, k.k5)?;
    writeln!(out, "bound at eps {radius}, mu {mu:.6}, tr Sigma {:.6}: Young eps {:.6}", sigma.trace(), bound.young_eps)?;
    writeln!(out, "  sigma_bar = {:.6e} + {:.6e} + {:.6e} = {:.6e}", bound.sigma_bar[0], bound.sigma_bar[1], bound.sigma_bar[2], bound.total)?;
    writeln!(out, "worst-case moments: |mean| <= {:.6}, tr(cov) <= {:.6}", moments.mean, moments.trace)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct AuditReport {
    dir: String,
    runs: usize,
    summary: crate::analysis::AuditSummary,
    average_cost: crate::analysis::CostBoundReport,
}

pub fn cmd_audit(common: &Common, dir: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    let dir: PathBuf = match dir {
        Some(d) => d.to_path_buf(),
        None => {
            let base = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            base.join(common.scenario.as_deref().unwrap_or("custom"))
        }
    };
    if !dir.is_dir() {
        return Err(Error::Log(format!("{} is not a directory", dir.display())));
    }
    // the echo written by `simulate` describes the logs unless a config is given
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => {
            let echo = dir.join(CONFIG_ECHO);
            if !echo.exists() {
                return Err(Error::Config(format!("no --config and no {CONFIG_ECHO} in {}", dir.display())));
            }
            RunConfig::load(&echo)?
        }
    };
    let setup = cfg.build()?;
    let runs = list_runs(&dir)?;
    if runs.is_empty() {
        return Err(Error::Log(format!("no run logs in {}", dir.display())));
    }
    let auditor = Auditor::new(&setup, cfg.ambiguity.radius)?;
    let a = &cfg.analysis;
    let mut rows = Vec::new();
    let mut stats = Vec::new();
    for r in &runs {
        let tr = read_trajectory(&dir, *r, &setup)?;
        rows.extend(auditor.audit(&tr, a.young_eps, a.penalty_eps, a.tolerance));
        stats.push(run_stats(&tr, &setup, a.burn_in));
    }
    let summary = summarize(&rows, a.tolerance);
    write_audit(&dir.join("audit.csv"), &rows, &summary)?;
    let inp = ConstantInputs::from_setup(&setup)?;
    let bound = theorem3_bound(&inp, cfg.ambiguity.radius, cfg.scenario.mean_bound(), cfg.scenario.covariance_bound(setup.plant.nw()).trace())?;
    let cost = average_cost_vs_bound(&aggregate(&stats), &bound);
    let passed = summary.passed() && !cost.exceeded;
    if common.json {
        emit(out, &AuditReport { dir: dir.display().to_string(), runs: runs.len(), summary, average_cost: cost })?;
    } else {
        let f = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3e}"));
        writeln!(out, "audited {} runs, {} steps in {}", runs.len(), summary.rows, dir.display())?;
        writeln!(out, "  min margins: quadratic bound {}, recursion {}, penalty bound {}", f(summary.min_prop1), f(summary.min_prop2), f(summary.min_prop3))?;
        writeln!(out, "  zero-distribution margin min {} ({} steps outside its premise, {} negative there)", f(summary.min_lemma4), summary.outside_premise, summary.lemma4_outside_premise)?;
        writeln!(out, "  terminal margin min {}, max dynamics residual {}", f(summary.min_terminal), f(summary.max_dynamics))?;
        writeln!(out, "  average stage cost {:.6e} vs bound {:.6e}", cost.empirical, cost.bound)?;
        writeln!(out, "  {} flagged steps -> {}", summary.flagged, if passed { "passed" } else { "FAILED" })?;
    }
    Ok(if passed { EXIT_OK } else { EXIT_STRUCTURAL })
}
