//! One controller solve from the benchmark initial state with random samples.

use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tsdr_mpc::ambiguity::EmpiricalSamples;
use tsdr_mpc::config::RunConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/paper_sv.toml");
    let cfg = RunConfig::load(path.as_ref())?;
    let (setup, ctrl) = cfg.build_controller()?;
    let dim = ctrl.horizon() * setup.model.nw();

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let normal = Normal::new(0.0, 0.1)?;
    let samples: Vec<DVector<f64>> = (0..cfg.ambiguity.samples).map(|_| DVector::from_fn(dim, |_, _| normal.sample(&mut rng))).collect();
    let samples = EmpiricalSamples::new(samples)?;

    let t = Instant::now();
    let sol = ctrl.solve_step(&setup.x0, &samples)?;
    let elapsed = t.elapsed();

    println!("v        = {:?}", sol.u_bar.as_slice());
    println!("u        = {:?}", ctrl.physical_inputs(&setup.x0, &sol.u_bar).as_slice());
    println!("gamma    = {:.6}", sol.gamma);
    println!("J lower  = {:.6}", sol.objective);
    println!("J upper  = {:.6}", sol.upper_bound);
    let d = &sol.diagnostics;
    println!("outer {} / master {} / supports {} / cuts {} / ipm iters {}", d.outer_iterations, d.master_solves, d.supports, d.cuts, d.ipm_iterations);
    println!("master objectives {:?}", d.master_objectives);
    println!("solve time {:?}", elapsed);
    Ok(())
}
