use std::f64::consts::PI;

use decoupling::field_solver::{solve, GridSpec, SolverConfig, Thresholds};
use decoupling::model::{registry_get, registry_get_with, ProblemParams};
use decoupling::simulate::{simulate_forward, SimulationConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// While no condition has fired, `L̂(u⁽⁰⁾)·L_{σ,z} < 1`.
    #[test]
    fn weak_regularity_is_preserved(slope in 0.2f64..1.9, offset in -0.5f64..0.5) {
        let params = ProblemParams { slope: Some(slope), offset: Some(offset), ..Default::default() };
        let p = registry_get_with("z_coupled", &params).unwrap();
        let grid = GridSpec::new(vec![-3.0], vec![3.0], vec![41]).unwrap();
        let traj = solve(&p, 1, &grid, &SolverConfig { dt: 1e-2, save_every: 10, ..Default::default() }).unwrap();
        for d in traj.diagnostics.iter().filter(|d| d.triggered.is_none()) {
            prop_assert!(d.lip_estimates[0] * p.lip_sigma_z() < 1.0, "t = {}: {:?}", d.t, d.lip_estimates);
        }
    }

    /// A higher blow-up threshold can only move the trigger closer to the
    /// singularity.
    #[test]
    fn singularity_estimate_is_monotone_in_threshold(slope in 0.8f64..2.0) {
        let params = ProblemParams { slope: Some(slope), ..Default::default() };
        let p = registry_get_with("burgers_blowup", &params).unwrap();
        let grid = GridSpec::new(vec![-1.0], vec![1.0], vec![21]).unwrap();
        let mut previous = f64::INFINITY;
        for lip_blowup in [10.0, 100.0, 1000.0] {
            let config = SolverConfig {
                dt: 2e-3,
                save_every: 100,
                thresholds: Thresholds { lip_blowup, ..Default::default() },
                ..Default::default()
            };
            let traj = solve(&p, 1, &grid, &config).unwrap();
            let s = traj.s_min_estimate.expect("Burgers blows up inside the horizon");
            prop_assert!(s <= previous, "lip_blowup {lip_blowup}: {s} after {previous}");
            previous = s;
        }
        prop_assert!((previous - (p.horizon() - 1.0 / slope)).abs() <= 5e-2, "s = {previous} at lip_blowup 1e3");
    }
}

/// Running mean and second moment of a sample.
#[derive(Default)]
struct Moments {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn t_stat(&self) -> f64 {
        let mean = self.sum / self.n;
        let var = (self.sum_sq / self.n - mean * mean) * self.n / (self.n - 1.0);
        mean / (var / self.n).sqrt()
    }
}

/// Heat: `e_j = ΔY⁽¹⁾ − Z⁽¹⁾ΔW` along each path (the driver of level 1
/// vanishes and `ΔW = ΔX`). Successive increments, and an increment and the
/// noise before it, are uncorrelated.
#[test]
fn level_one_residual_increments_are_uncorrelated() {
    let p = registry_get("heat").unwrap();
    let grid = GridSpec::with_spacing(vec![-PI], vec![PI], 0.05).unwrap();
    let traj = solve(&p, 2, &grid, &SolverConfig { dt: 2e-2, save_every: 1, ..Default::default() }).unwrap();
    let mut lag = Moments::default();
    let mut projected = Moments::default();
    for batch in 0..5 {
        let config = SimulationConfig {
            record_every: 1,
            ..SimulationConfig::new(vec![0.3], 20_000, 100 + batch)
        };
        let b = simulate_forward(&p, &traj, &config).unwrap();
        for path in 0..b.paths {
            let (x, y, z) = (&b.x[path], &b.y[path], &b.z[path]);
            let increments: Vec<(f64, f64)> = (0..b.times.len() - 1)
                .map(|j| {
                    let dw = x[j + 1][0] - x[j][0];
                    (y[j + 1][1][0] - y[j][1][0] - z[j][1][0] * dw, dw)
                })
                .collect();
            for pair in increments.windows(2) {
                lag.push(pair[0].0 * pair[1].0);
                projected.push(pair[1].0 * pair[0].1);
            }
        }
    }
    assert!(lag.n >= 1e5 * 40.0);
    assert!(lag.t_stat().abs() < 4.0, "lag-1 autocorrelation t = {}", lag.t_stat());
    assert!(projected.t_stat().abs() < 4.0, "noise projection t = {}", projected.t_stat());
}
