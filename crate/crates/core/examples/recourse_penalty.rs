//! The second-stage penalty: LP value, closed form and dual vertex on a few
//! constraint slacks.

use nalgebra::DVector;
use tsdr_mpc::penalty::{dual_vertex, penalty_value, second_stage_lp, PenaltyWeights};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = PenaltyWeights::new(DVector::from_vec(vec![1000.0, 1000.0, 10.0, 1.0]))?;
    for s in [vec![-1.0, -2.0, -0.5, -3.0], vec![0.2, -1.0, 0.5, 4.0], vec![0.0, 0.0, 1e-3, -1e-3]] {
        let s = DVector::from_vec(s);
        let lp = second_stage_lp(&h, &s)?;
        let pi = dual_vertex(&h, &s);
        println!(
            "slack {:?}: LP {:.6}, closed form {:.6}, dual vertex {:?} -> {:.6}",
            s.as_slice(),
            lp.value,
            penalty_value(&h, &s),
            pi.as_slice(),
            pi.dot(&s)
        );
    }
    Ok(())
}
