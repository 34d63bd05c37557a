//! Backward sweep for the heat problem `u_t + ½u_xx = 0`, `u(T) = sin x`,
//! compared with `u⁽ⁱ⁾(t, x) = e^{-(T-t)/2} ∂ⁱ sin x`.
//!
//! `cargo run --release --example heat_feynman_kac [-- --compare]`; with
//! `--compare` the other boundary policies are run too.

use std::f64::consts::PI;

use decoupling::field_solver::{solve, BoundaryPolicy, GridSpec, SolverConfig};
use decoupling::model::registry_get;

fn main() -> decoupling::Result<()> {
    let problem = registry_get("heat")?;
    let compare = std::env::args().any(|a| a == "--compare");
    let policies: &[BoundaryPolicy] = if compare {
        &[BoundaryPolicy::Taylor, BoundaryPolicy::LinearExtrapolate, BoundaryPolicy::ClampGradient]
    } else {
        &[BoundaryPolicy::Taylor]
    };
    let config = SolverConfig { dt: 1e-3, save_every: 250, ..Default::default() };
    for &boundary in policies {
        let grid = GridSpec::with_spacing(vec![-PI], vec![PI], 0.01)?.with_boundary(boundary);
        let traj = solve(&problem, 2, &grid, &config)?;
        println!("{boundary:?}: {} nodes, {} snapshots", grid.node_count(), traj.snapshots.len());
        for stack in &traj.snapshots {
            let mut err = [0.0f64; 3];
            for node in 0..grid.node_count() {
                let x = grid.node_coords(node)[0];
                for (i, e) in err.iter_mut().enumerate() {
                    let exact = problem.exact(i, stack.t, &[x]).expect("closed form")[0];
                    *e = e.max((stack.fields[i][node] - exact).abs());
                }
            }
            println!("  t = {:.3}: max error u0 {:.2e}  u1 {:.2e}  u2 {:.2e}", stack.t, err[0], err[1], err[2]);
        }
    }
    Ok(())
}
