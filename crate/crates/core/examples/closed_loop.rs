//! Closed-loop runs of the benchmark under one disturbance scenario.
//!
//! `cargo run --release --example closed_loop -- b 5` runs scenario `b` five times.

use std::time::Instant;

use tsdr_mpc::config::RunConfig;
use tsdr_mpc::simulator::{aggregate, run_stats, Simulator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let id = args.next().unwrap_or_else(|| "a".into());
    let runs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3);

    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/paper_sv.toml");
    let cfg = RunConfig::load(path.as_ref())?;
    let (setup, ctrl) = cfg.build_controller()?;
    let mut scenario = cfg.scenario.preset(&id)?;
    scenario.runs = runs;

    let sim = Simulator::new(&setup, &ctrl, &cfg);
    let t = Instant::now();
    let trajs = sim.run_scenario(&scenario);
    let elapsed = t.elapsed();

    let stats: Vec<_> = trajs.iter().map(|tr| run_stats(tr, &setup, cfg.analysis.burn_in)).collect();
    for (tr, s) in trajs.iter().zip(&stats) {
        let worst = tr.steps.iter().map(|s| s.iterations).max().unwrap_or(0);
        println!(
            "run {:2}: violation rate {:.3}, max violation {:.3}, max |x| {:.3}, final |x| {:.2e}, max outer iterations {worst}{}",
            s.run,
            s.violation_rate,
            s.max_violation,
            s.max_state_norm,
            s.final_state_norm,
            tr.failure.as_deref().map(|f| format!(", FAILED {f}")).unwrap_or_default()
        );
    }
    let total = aggregate(&stats);
    println!("scenario {id}: {total:?}");
    let steps: usize = trajs.iter().map(|t| t.steps.len()).sum();
    println!("{steps} steps in {elapsed:?} ({:?} per step)", elapsed / steps.max(1) as u32);
    Ok(())
}
