//! Offline audit of closed-loop logs: per-step cost inequalities, the
//! terminal constraint and the saddle-point check, for a few runs of one scenario.
//!
//! `cargo run --release --example audit -- c 2`

use tsdr_mpc::analysis::{summarize, Auditor};
use tsdr_mpc::config::RunConfig;
use tsdr_mpc::simulator::Simulator;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let id = args.next().unwrap_or_else(|| "a".into());
    let runs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2);

    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/paper_sv.toml");
    let cfg = RunConfig::load(path.as_ref())?;
    let (setup, ctrl) = cfg.build_controller()?;
    let mut scenario = cfg.scenario.preset(&id)?;
    scenario.runs = runs;
    let trajs = Simulator::new(&setup, &ctrl, &cfg).run_scenario(&scenario);

    let auditor = Auditor::new(&setup, cfg.ambiguity.radius)?;
    let a = &cfg.analysis;
    let mut rows = Vec::new();
    for tr in &trajs {
        rows.extend(auditor.audit(tr, a.young_eps, a.penalty_eps, a.tolerance));
    }
    for r in rows.iter().filter(|r| r.flagged).take(10) {
        println!("flagged: {r:?}");
    }
    let s = summarize(&rows, a.tolerance);
    println!("{s:#?}");
    println!("audit {}", if s.passed() { "passed" } else { "FAILED" });
    Ok(())
}
