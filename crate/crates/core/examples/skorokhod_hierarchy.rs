//! Field hierarchy `u⁽⁰⁾, u⁽¹⁾, u⁽²⁾` of the two-dimensional Skorokhod-type
//! problem: `|u⁽¹⁾|` stays bounded by its terminal value and the Lipschitz
//! constants of the higher levels stay finite over the whole horizon.

use decoupling::field_solver::{solve, GridSpec, SolverConfig};
use decoupling::model::registry_get;
use decoupling::simulate::derivative_consistency;

fn sci(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.2e}")).collect();
    parts.join(", ")
}

fn main() -> decoupling::Result<()> {
    let problem = registry_get("skorokhod")?;
    let grid = GridSpec::with_spacing(vec![-4.0, -2.0], vec![4.0, 2.0], 0.1)?;
    let config = SolverConfig { dt: 2e-2, save_every: 5, ..Default::default() };
    let traj = solve(&problem, 2, &grid, &config)?;

    println!("{} nodes, dims {:?}", grid.node_count(), problem.dims());
    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "t", "sup|u1|", "lip u0", "lip u1", "lip u2");
    for diag in traj.diagnostics.iter().step_by(5) {
        let l = &diag.lip_estimates;
        println!("{:>6.2} {:>10.5} {:>10.4} {:>10.4} {:>10.4}", diag.t, diag.sup_norms[1], l[0], l[1], l[2]);
    }
    println!("completed: {}", traj.completed());

    let consistency = derivative_consistency(&traj)?;
    println!("max |Du⁽ⁱ⁾ − u⁽ⁱ⁺¹⁾| on interior nodes: {}", sci(&consistency));
    Ok(())
}
