//! Inviscid Burgers-type problem whose decoupling field steepens into a
//! shock: `u(T, x) = x` gives `u(t, x) = x / (1 − (T − t))`, singular at
//! `t = T − 1`. The monitor stops the sweep just before.

use decoupling::field_solver::{solve, GridSpec, SolverConfig};
use decoupling::model::registry_get;

fn main() -> decoupling::Result<()> {
    let problem = registry_get("burgers_blowup")?;
    let grid = GridSpec::new(vec![-1.0], vec![1.0], vec![41])?;
    let config = SolverConfig { dt: 1e-3, save_every: 100, ..Default::default() };
    let traj = solve(&problem, 2, &grid, &config)?;

    println!("{:>8} {:>12} {:>12} {:>12}", "t", "lip u0", "exact", "lip u1");
    for diag in traj.diagnostics.iter().step_by(50) {
        let exact = problem.exact(1, diag.t, &[0.0]).map_or(f64::NAN, |g| g[0]);
        println!(
            "{:>8.3} {:>12.4e} {:>12.4e} {:>12.4e}",
            diag.t, diag.lip_estimates[0], exact, diag.lip_estimates[1]
        );
    }
    let singular_at = problem.horizon() - 1.0;
    match (traj.triggered, traj.s_min_estimate) {
        (Some(condition), Some(s)) => {
            println!("stopped by {condition:?} at s_min ≈ {s:.4} (characteristics cross at {singular_at})")
        }
        _ => println!("sweep completed without a singularity"),
    }
    Ok(())
}
