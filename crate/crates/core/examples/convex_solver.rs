//! The interior-point solver on a small QP with a norm constraint.

use nalgebra::{dmatrix, dvector};
use tsdr_mpc::convex::{ConvexProgram, NormConstraint};

fn main() {
    // minimize (z0 - 2)^2 + (z1 - 1)^2 subject to z0 + z1 <= 2, ||z|| <= 1.2, z1 >= 0
    let mut prog = ConvexProgram::new(2);
    prog.hessian = dmatrix![2.0, 0.0; 0.0, 2.0];
    prog.linear = dvector![-4.0, -2.0];
    prog.constant = 5.0;
    prog.add_le(vec![(0, 1.0), (1, 1.0)], 2.0);
    prog.set_bounds(1, 0.0, f64::INFINITY);
    prog.norm = Some(NormConstraint { matrix: dmatrix![1.0, 0.0; 0.0, 1.0], offset: dvector![0.0, 0.0], radius: 1.2 });

    let sol = prog.solve();
    println!("status {:?} after {} iterations", sol.status, sol.iterations);
    println!("z = {:?}, objective {:.8}", sol.x.as_slice(), sol.objective);
    println!("|z| = {:.8}, residuals {:?}", sol.x.norm(), sol.residuals);
    println!("{}", prog.to_standard_form_text());
}
