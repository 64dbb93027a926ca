//! Transport costs, the empirical distance to the zero distribution and the
//! worst-case moment bounds of the ambiguity ball for the benchmark.

use nalgebra::{DMatrix, DVector};
use tsdr_mpc::ambiguity::{discrete_wasserstein, gelbrich_mean_bound, gelbrich_trace_bound, transport_cost, DiscreteDistribution, EmpiricalSamples};
use tsdr_mpc::config::RunConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/paper_sv.toml");
    let cfg = RunConfig::load(path.as_ref())?;
    let setup = cfg.build()?;
    let c_s = setup.transport_weight()?;
    println!("C_s eigenvalues: {:?}", tsdr_mpc::linalg::sym_eigenvalues(&c_s));

    // two-point distributions on the real line, squared-distance cost
    let p = DiscreteDistribution::uniform(vec![DVector::from_element(1, 0.0), DVector::from_element(1, 1.0)])?;
    let q = DiscreteDistribution::new(vec![DVector::from_element(1, 0.5)], vec![1.0])?;
    let w = DMatrix::from_element(1, 1, 2.0);
    println!("W(p, q) = {:.6}", discrete_wasserstein(&p, &q, |a, b| transport_cost(&w, a, b))?);

    let dim = c_s.nrows();
    let samples = EmpiricalSamples::new((0..10).map(|i| DVector::from_element(dim, 0.01 * i as f64)).collect())?;
    let amb = setup.controller(cfg.ambiguity.radius, setup.l_c, cfg.solver)?.reform.ambiguity;
    let dz = samples.distance_from_zero(&amb);
    println!("distance from the zero distribution {dz:.6} (radius {}, contains zero: {})", amb.radius, dz <= amb.radius);

    for (mu0, s0) in [(0.0, 0.0), (0.0, 0.1), (0.5, 0.1), (0.5, 0.5)] {
        let sc = cfg.scenario.preset("custom").map(|mut s| {
            s.mu0 = mu0;
            s.sigma0 = s0;
            s
        })?;
        let sigma = sc.covariance_bound(setup.plant.nw());
        println!(
            "mu0 {mu0}, sigma0 {s0}: worst-case |mean| <= {:.4}, tr(cov) <= {:.4}",
            gelbrich_mean_bound(amb.radius, &c_s, 3, sc.mean_bound()),
            gelbrich_trace_bound(amb.radius, &c_s, 3, &sigma)
        );
    }
    Ok(())
}
