//! A user-defined FBSDE plugged into the solver through `Coefficients`.
//!
//! `dX = −Y dt + dW`, `Y_T = X_T`, no driver. The field is linear,
//! `u(t, x) = a(t) x` with `a' = a²`, so `a(t) = 1 / (1 + T − t)`.

use std::sync::Arc;

use decoupling::field_solver::{solve, GridSpec, SolverConfig};
use decoupling::jet::Jet;
use decoupling::model::{Coefficients, Dims, FbsdeProblem};

#[derive(Debug)]
struct MeanReverting;

impl Coefficients for MeanReverting {
    fn drift(&self, _t: f64, _x: &[Jet], y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
        vec![-y[0]]
    }

    fn diffusion(&self, _t: f64, _x: &[Jet], _y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
        vec![Jet::constant(1.0)]
    }

    fn driver(&self, _t: f64, _x: &[Jet], _y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
        vec![Jet::constant(0.0)]
    }

    fn terminal(&self, x: &[Jet]) -> Vec<Jet> {
        vec![x[0]]
    }
}

fn main() -> decoupling::Result<()> {
    let horizon = 1.0;
    let problem = FbsdeProblem::new("mean_reverting", Dims::new(1, 1, 1), horizon, 3, 0.0, Arc::new(MeanReverting))?;
    let grid = GridSpec::new(vec![-3.0], vec![3.0], vec![61])?;
    let config = SolverConfig { dt: 1e-3, save_every: 250, ..Default::default() };
    let traj = solve(&problem, 2, &grid, &config)?;

    let centre = grid.node_count() / 2;
    for stack in &traj.snapshots {
        let exact = 1.0 / (1.0 + horizon - stack.t);
        println!(
            "t = {:.2}: u1 at 0 = {:.6} (exact {exact:.6}), u2 at 0 = {:+.1e}",
            stack.t, stack.fields[1][centre], stack.fields[2][centre]
        );
    }
    Ok(())
}
