//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion prints its own PASS/FAIL line; exits non-zero if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use decoupling::cli;
use decoupling::field_solver::{scaling_transform, solve, FieldTrajectory, GridSpec, SolverConfig};
use decoupling::generators::{check_structural_dependence, eval_phi1, eval_phik, ThetaPoint};
use decoupling::model::registry_get;
use decoupling::simulate::{decoupling_residual, derivative_consistency, simulate_forward, SimulationConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// `φ⁽¹⁾` and `φ⁽²⁾·v` of the worked example, written out by hand:
/// `φ⁽¹⁾ = −2 y⁽¹⁾(0, z⁽⁰⁾)ᵀ z⁽¹⁾` and the four-term expression for `φ⁽²⁾v`.
fn generator_closed_forms() -> Outcome {
    let p = registry_get("skorokhod").map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = [0.0f64; 2];
    for _ in 0..1000 {
        let th = ThetaPoint::sample(&p, 2, 2.0, &mut rng);
        let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let y1 = th.y(1).values();
        let y2 = th.y(2).values();
        let z0 = th.z(0).values()[0];
        let z1 = th.z(1).values();
        let z2 = th.z(2).values();
        let dot = |a: &[f64]| a[0] * v[0] + a[1] * v[1];

        let phi1 = eval_phi1(&p, &th).map_err(|e| e.to_string())?;
        for a in 0..2 {
            worst[0] = worst[0].max((phi1.values()[a] - (-2.0 * y1[1] * z0 * z1[a])).abs());
        }

        let phi2 = eval_phik(&p, &th, 2).map_err(|e| e.to_string())?;
        let z1v = dot(z1);
        let y2v = [dot(&y2[0..2]), dot(&y2[2..4])];
        for a in 0..2 {
            let z2v = dot(&z2[2 * a..2 * a + 2]);
            let expect = -2.0 * y1[1] * z1v * z1[a]
                - 2.0 * y2v[1] * z0 * z1[a]
                - 2.0 * y1[1] * z0 * z2v
                - 2.0 * y2[2 * a + 1] * z0 * z1v;
            let got = dot(&phi2.values()[2 * a..2 * a + 2]);
            worst[1] = worst[1].max((got - expect).abs());
        }
    }
    ensure(
        worst.iter().all(|&w| w <= 1e-12),
        format!("max |φ⁽¹⁾ − closed form|, |φ⁽²⁾v − closed form| = {} over 1000 points (≤ 1e-12)", fmt(&worst)),
    )
}

fn structural_dependence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, k) in [("skorokhod", 2), ("skorokhod", 3), ("z_coupled", 3)] {
        let p = registry_get(name).map_err(|e| e.to_string())?;
        let r = check_structural_dependence(&p, k, 100, &mut rng).map_err(|e| e.to_string())?;
        ok &= r.max_deviation() <= 1e-10 && r.failed_trials < r.trials;
        lines.push(format!("{name} k={k}: {:.1e}", r.max_deviation()));
    }
    ensure(ok, format!("{} (≤ 1e-10)", lines.join(", ")))
}

fn heat_grid(h: f64) -> GridSpec {
    GridSpec::with_spacing(vec![-PI], vec![PI], h).expect("valid grid")
}

fn heat_solve(h: f64, dt: f64) -> Result<FieldTrajectory, String> {
    let p = registry_get("heat").map_err(|e| e.to_string())?;
    let config = SolverConfig {
        dt,
        save_every: (0.1 / dt).round() as usize,
        ..SolverConfig::default()
    };
    solve(&p, 2, &heat_grid(h), &config).map_err(|e| e.to_string())
}

/// Largest node errors at `t = 0` against `e^{−1/2} sin`, `e^{−1/2} cos` and
/// `u⁽²⁾ + u⁽⁰⁾ = 0`.
fn heat_errors(traj: &FieldTrajectory) -> [f64; 3] {
    let s = traj.last();
    let decay = (-0.5f64).exp();
    let mut e = [0.0f64; 3];
    for node in 0..traj.grid.node_count() {
        let x = traj.grid.node_coords(node)[0];
        e[0] = e[0].max((s.fields[0][node] - decay * x.sin()).abs());
        e[1] = e[1].max((s.fields[1][node] - decay * x.cos()).abs());
        e[2] = e[2].max((s.fields[2][node] + s.fields[0][node]).abs());
    }
    e
}

const HEAT_BOUNDS: [f64; 3] = [5e-3, 1e-2, 2e-2];

struct Heat {
    base: FieldTrajectory,
    fine: FieldTrajectory,
    base_errors: [f64; 3],
}

fn feynman_kac(heat: &Heat) -> Outcome {
    if heat.base.last().t != 0.0 || heat.fine.last().t != 0.0 {
        return Err("heat sweep did not reach t = 0".into());
    }
    let base = heat.base_errors;
    let fine = heat_errors(&heat.fine);
    let ratio: Vec<f64> = fine.iter().zip(&base).map(|(f, b)| f / b).collect();
    let base_ok = base.iter().zip(&HEAT_BOUNDS).all(|(e, b)| e <= b);
    let fine_ok = fine.iter().zip(&HEAT_BOUNDS).all(|(e, b)| *e <= 0.6 * b);
    ensure(
        base_ok && fine_ok,
        format!(
            "errors {} (bounds {}); refined {} (bounds ×0.6), refined/baseline {}",
            fmt(&base),
            fmt(&HEAT_BOUNDS),
            fmt(&fine),
            fmt(&ratio)
        ),
    )
}

fn run_cli(args: &[&str]) -> i32 {
    cli::run(std::iter::once("decouple").chain(args.iter().copied()))
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn blow_up(root: &Path) -> Outcome {
    let out = root.join("burgers");
    let out_str = out.to_str().unwrap();
    let code = run_cli(&[
        "solve",
        "--problem",
        "burgers_blowup",
        "--param",
        "horizon=1.5",
        "--lip-blowup",
        "1e3",
        "--out",
        out_str,
    ]);
    let diag = read_json(&out.join("diagnostics.json"))?;
    let s_min = diag["sMinEstimate"].as_f64().unwrap_or(f64::NAN);
    ensure(
        code == 2 && (0.45..=0.55).contains(&s_min),
        format!("exit {code}, sMinEstimate = {s_min:.4} (analytic blow-up at 0.5), fired {}", diag["triggered"]),
    )
}

fn skorokhod_solve(h: f64, dt: f64) -> Result<FieldTrajectory, String> {
    let p = registry_get("skorokhod").map_err(|e| e.to_string())?;
    let grid = GridSpec::with_spacing(vec![-4.0, -2.0], vec![4.0, 2.0], h).map_err(|e| e.to_string())?;
    let config = SolverConfig {
        dt,
        save_every: 5,
        ..SolverConfig::default()
    };
    solve(&p, 2, &grid, &config).map_err(|e| e.to_string())
}

fn consistency(heat: &Heat) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let sk_base = skorokhod_solve(0.1, 2e-2)?;
    let sk_fine = skorokhod_solve(0.05, 1e-2)?;
    for (name, base, fine) in [("heat", &heat.base, &heat.fine), ("skorokhod", &sk_base, &sk_fine)] {
        let b = derivative_consistency(base).map_err(|e| e.to_string())?;
        let f = derivative_consistency(fine).map_err(|e| e.to_string())?;
        let ratio: Vec<f64> = f.iter().zip(&b).map(|(f, b)| f / b).collect();
        ok &= base.completed() && fine.completed();
        ok &= b.iter().all(|&v| v <= 1e-2) && ratio.iter().all(|&r| r <= 0.6);
        lines.push(format!("{name} {} → {} (ratio {})", fmt(&b), fmt(&f), fmt(&ratio)));
    }
    ensure(ok, format!("max |Du⁽ⁱ⁾ − u⁽ⁱ⁺¹⁾|, i = 0, 1: {}", lines.join("; ")))
}

fn boundedness(root: &Path) -> Outcome {
    let out = root.join("skorokhod");
    let code = run_cli(&["solve", "--problem", "skorokhod", "--k", "2", "--out", out.to_str().unwrap()]);
    let diag = read_json(&out.join("diagnostics.json"))?;
    let history = diag["history"].as_array().ok_or("no history")?;
    let column = |key: &str, level: usize| -> Vec<f64> {
        history.iter().map(|h| h[key][level].as_f64().unwrap_or(f64::NAN)).collect()
    };
    let sup1 = column("supNorms", 1);
    let sup1_max = sup1.iter().fold(0.0f64, |a, &b| if b.is_nan() { f64::NAN } else { a.max(b) });
    let mut ok = code == 0 && sup1_max <= 1.0 + 5e-2;
    let mut lips = Vec::new();
    for level in [1, 2] {
        let lip = column("lipEstimates", level);
        let terminal = lip[0];
        let max = lip.iter().fold(0.0f64, |a, &b| if b.is_nan() { f64::NAN } else { a.max(b) });
        // bounded: finite and never above twice its terminal value
        ok &= max.is_finite() && max <= 2.0 * terminal;
        lips.push(format!("lip[{level}] {terminal:.3} → max {max:.3}"));
    }
    ensure(
        ok,
        format!("exit {code}, sup|u⁽¹⁾| ≤ {sup1_max:.5} (≤ 1.05) over {} levels, {}", history.len(), lips.join(", ")),
    )
}

fn scaling(heat: &Heat) -> Outcome {
    let lambda = 2.0;
    let p = registry_get("heat").map_err(|e| e.to_string())?;
    let dims = p.dims();
    let (transformed, grid) =
        scaling_transform(heat.base.last(), &heat.base.grid, dims, lambda).map_err(|e| e.to_string())?;
    let scaled = p.scaled(lambda).map_err(|e| e.to_string())?;
    let config = SolverConfig {
        dt: 1e-3,
        save_every: 1000,
        ..SolverConfig::default()
    };
    let direct = solve(&scaled, 2, &grid, &config).map_err(|e| e.to_string())?;
    let s = direct.last();
    let diff: Vec<f64> = (0..=2)
        .map(|i| {
            s.fields[i]
                .iter()
                .zip(&transformed.fields[i])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let limit: Vec<f64> = heat.base_errors.iter().map(|e| 2.0 * e).collect();
    ensure(
        s.t == 0.0 && diff.iter().zip(&limit).all(|(d, l)| d <= l),
        format!("λ = 2: max |solve∘transform − transform∘solve| = {} (≤ {})", fmt(&diff), fmt(&limit)),
    )
}

fn monte_carlo(heat: &Heat) -> Outcome {
    let p = registry_get("heat").map_err(|e| e.to_string())?;
    let traj = &heat.base;
    let config = SimulationConfig::new(vec![0.3], 10_000, 2024);
    let first = simulate_forward(&p, traj, &config).map_err(|e| e.to_string())?;
    let second = simulate_forward(&p, traj, &config).map_err(|e| e.to_string())?;
    let report = decoupling_residual(&p, &first).map_err(|e| e.to_string())?;
    let mut ok = first == second;
    let mut lines = Vec::new();
    for r in &report.residuals {
        ok &= r.within(3.0) && r.mean.abs() <= 5e-2;
        lines.push(format!(
            "level {}: mean {:+.2e} ± {:.1e} ({:.2} SE)",
            r.level,
            r.mean,
            r.std_error,
            r.mean.abs() / r.std_error
        ));
    }
    ensure(
        ok,
        format!("{}; reruns bit-identical: {}", lines.join(", "), first == second),
    )
}

fn main() {
    let root = tempfile::tempdir().expect("temporary directory");
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut record = |id: usize, name: &'static str, run: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let (mark, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("[{mark}] {id}. {name} ({secs:.1} s): {detail}");
        results.push((id, name, outcome, secs));
    };

    record(1, "closed-form generators", &mut generator_closed_forms);
    record(2, "structural dependence", &mut structural_dependence);

    let start = Instant::now();
    let heat = heat_solve(0.01, 1e-3).and_then(|base| {
        let fine = heat_solve(0.005, 5e-4)?;
        let base_errors = heat_errors(&base);
        Ok(Heat { base, fine, base_errors })
    });
    let heat_secs = start.elapsed().as_secs_f64();
    println!("       heat sweeps at (h, Δt) and (h/2, Δt/2) shared by 3, 5, 7, 8: {heat_secs:.1} s");

    match &heat {
        Ok(heat) => record(3, "Feynman–Kac oracle", &mut || feynman_kac(heat)),
        Err(e) => record(3, "Feynman–Kac oracle", &mut || Err(e.clone())),
    }
    record(4, "blow-up detection", &mut || blow_up(root.path()));
    match &heat {
        Ok(heat) => record(5, "derivative consistency", &mut || consistency(heat)),
        Err(e) => record(5, "derivative consistency", &mut || Err(e.clone())),
    }
    record(6, "boundedness", &mut || boundedness(root.path()));
    match &heat {
        Ok(heat) => {
            record(7, "scaling commutation", &mut || scaling(heat));
            record(8, "Monte-Carlo residuals", &mut || monte_carlo(heat));
        }
        Err(e) => {
            record(7, "scaling commutation", &mut || Err(e.clone()));
            record(8, "Monte-Carlo residuals", &mut || Err(e.clone()));
        }
    }

    let failed: Vec<usize> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    let total: f64 = results.iter().map(|r| r.3).sum::<f64>() + heat_secs;
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed in {total:.0} s", results.len());
    } else {
        println!("acceptance: criteria {failed:?} failed ({total:.0} s)");
        std::process::exit(1);
    }
}
