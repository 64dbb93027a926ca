//! Riccati solution, pre-stabilization, lifted prediction matrices and the
//! structural checks for the double-integrator benchmark.

use nalgebra::{dmatrix, DVector};
use tsdr_mpc::system::{build_lifted, disturbance_observability, lc_threshold, norm_bounds, prestabilize, solve_riccati, InputBox, LtiSystem, StateConstraints};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = dmatrix![1.0, 1.0; 0.0, 1.0];
    let b = dmatrix![0.5; 1.0];
    let d = dmatrix![1.0, 0.0; 0.0, 1.0];
    let plant = LtiSystem::new(a, b, d)?;

    let ric = solve_riccati(&plant.a, &plant.b, &dmatrix![1.0, 0.0; 0.0, 1.0], &dmatrix![0.1])?;
    println!("P = {:.4}", ric.p);
    println!("K = {:.4}", ric.k);
    println!("DARE residual {:.2e} after {} iterations", ric.residual, ric.iterations);

    let model = prestabilize(&plant, &ric.k)?;
    let input = InputBox::new(DVector::from_element(1, -1.0), DVector::from_element(1, 1.0))?;
    let nb = norm_bounds(&model, &input, 3);
    println!("||A+BK|| = {:.4} (contractive: {}), ||B|| = {:.4}, u_u = {:.4}", nb.l_a, nb.contractive, nb.l_b, nb.u_u);

    let f0 = dmatrix![1.0, 0.0; -1.0, 0.0; 0.0, 1.0; 0.0, -1.0];
    let cons = StateConstraints::new(f0.clone(), DVector::from_vec(vec![-2.0, -10.0, -2.0, -2.0]))?;
    let (_, rank) = disturbance_observability(&f0, &model.a, &model.d, 3);
    println!("disturbance observability rank {rank} (need {})", model.nw());
    let zero = nalgebra::DMatrix::zeros(1, 2);
    println!("smallest admissible l_c on the pre-stabilized model: {:.6}", lc_threshold(&model.a, &model.b, &zero, 3));

    let lifted = build_lifted(&model, &cons, 3)?;
    println!("Abar = {:.4}", lifted.a_bar);
    println!("Bbar = {:.4}", lifted.b_bar);
    println!("C_AB = {:.4}", lifted.c_ab);
    let x0 = DVector::from_vec(vec![-5.0, -2.0]);
    let z = lifted.predict(&x0, &DVector::zeros(3), &DVector::zeros(6));
    println!("free prediction from x0: {:?}", z.as_slice());
    Ok(())
}
