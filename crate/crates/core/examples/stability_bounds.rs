//! Stability constants and the asymptotic average-cost bound across the four
//! disturbance scenarios, plus the worst-case moment bounds.

use tsdr_mpc::analysis::{compute_constants, gelbrich_report, theorem3_bound, ConstantInputs};
use tsdr_mpc::config::RunConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/paper_sv.toml");
    let cfg = RunConfig::load(path.as_ref())?;
    let setup = cfg.build()?;
    let inp = ConstantInputs::from_setup(&setup)?;
    let k = compute_constants(&inp, 1.0, 1.0 / (4.0 * inp.c_l()));
    println!("{k:#?}");

    let c_s = setup.transport_weight()?;
    for id in ["nominal", "a", "b", "c", "d"] {
        let sc = cfg.scenario.preset(id)?;
        let sigma = sc.covariance_bound(setup.plant.nw());
        for radius in [0.0, cfg.ambiguity.radius] {
            let b = theorem3_bound(&inp, radius, sc.mean_bound(), sigma.trace())?;
            println!("scenario {id:7} eps {radius:<5}: bound {:.4e} (sigma_bar {:.3e} {:.3e} {:.3e})", b.total, b.sigma_bar[0], b.sigma_bar[1], b.sigma_bar[2]);
        }
        let g = gelbrich_report(cfg.ambiguity.radius, &c_s, setup.lifted.horizon, sc.mean_bound(), &sigma);
        println!("                worst-case |mean| <= {:.4}, tr(cov) <= {:.4}", g.mean, g.trace);
    }
    Ok(())
}
