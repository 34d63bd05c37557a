//! The three subcommands as library functions.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::artifacts::{load_run, write_json, write_run, LoadedRun, Manifest, VERIFY};
use super::config::{ResolvedRun, VerifySection};
use crate::error::{Error, Result};
use crate::field_solver::{solve, FieldTrajectory};
use crate::generators::{check_structural_dependence, StructuralReport};
use crate::simulate::{
    decoupling_residual, derivative_consistency, simulate_forward, z_bound_check, ResidualReport, SimulationConfig,
    ZBoundReport,
};

/// Outcome of [`cmd_solve`].
pub struct SolveOutcome {
    pub trajectory: FieldTrajectory,
    pub manifest: Manifest,
}

impl SolveOutcome {
    /// 0 for a full sweep, 2 for a blow-up stop.
    pub fn exit_code(&self) -> i32 {
        if self.trajectory.completed() {
            0
        } else {
            2
        }
    }
}

pub fn cmd_solve(run: &ResolvedRun) -> Result<SolveOutcome> {
    let trajectory = solve(&run.problem, run.k, &run.grid, &run.solver)?;
    let manifest = write_run(run, &trajectory)?;
    Ok(SolveOutcome { trajectory, manifest })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    fn at_most(name: String, value: f64, tolerance: f64) -> Self {
        Self {
            name,
            value,
            tolerance,
            passed: value <= tolerance,
            note: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StartReport {
    pub x0: Vec<f64>,
    pub residual: ResidualReport,
    pub z_bound: ZBoundReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerifyReport {
    pub problem: String,
    pub k: usize,
    pub passed: bool,
    pub checks: Vec<Check>,
    /// `max |Du⁽ⁱ⁾ − u⁽ⁱ⁺¹⁾|` per level `i < k`.
    pub consistency: Vec<f64>,
    pub simulations: Vec<StartReport>,
    pub structural: Option<StructuralReport>,
    /// Checks that could not run, with the reason.
    pub skipped: Vec<String>,
}

impl VerifyReport {
    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Re-checks a solve run: derivative consistency of the stored fields, BSDE
/// residuals and the `Z` bound along simulated paths, and the structural
/// dependence of the generators. Writes `verify.json` into the run directory.
pub fn cmd_verify(dir: &Path, overrides: &VerifySection) -> Result<VerifyReport> {
    let loaded = load_run(dir, true)?;
    let report = verify_loaded(&loaded, overrides)?;
    write_json(&dir.join(VERIFY), &report)?;
    Ok(report)
}

fn verify_loaded(loaded: &LoadedRun, overrides: &VerifySection) -> Result<VerifyReport> {
    let config = loaded.manifest.config.overlay(&super::config::RunConfig {
        verify: overrides.clone(),
        ..Default::default()
    })?;
    let settings = config.resolve()?.verify;
    let run = &loaded.run;
    let trajectory = &loaded.trajectory;
    let mut checks = Vec::new();
    let mut skipped = Vec::new();

    let consistency = if run.k >= 1 {
        derivative_consistency(trajectory)?
    } else {
        skipped.push("derivative consistency: k = 0".into());
        Vec::new()
    };
    for (i, &value) in consistency.iter().enumerate() {
        checks.push(Check::at_most(format!("derivative_consistency[{i}]"), value, settings.consistency_tol));
    }

    let mut simulations = Vec::new();
    if !trajectory.completed() {
        skipped.push(format!(
            "path simulation: the sweep stopped at t = {}",
            trajectory.s_min_estimate.unwrap_or(f64::NAN)
        ));
    } else if settings.paths == 0 {
        skipped.push("path simulation: zero paths requested".into());
    } else {
        for x0 in &settings.x0 {
            let sim = SimulationConfig {
                levels: settings.levels,
                ..SimulationConfig::new(x0.clone(), settings.paths, settings.seed)
            };
            let bundle = simulate_forward(&run.problem, trajectory, &sim)?;
            let residual = decoupling_residual(&run.problem, &bundle)?;
            let z_bound = z_bound_check(&run.problem, trajectory, &bundle)?;
            for r in &residual.residuals {
                let mut check = Check::at_most(
                    format!("residual{x0:?}[level {}][{}]", r.level, r.component),
                    r.mean.abs(),
                    settings.residual_tol,
                );
                check.note = Some(format!("{:.2} standard errors", r.mean.abs() / r.std_error.max(f64::MIN_POSITIVE)));
                checks.push(check);
            }
            checks.push(Check {
                name: format!("z_bound{x0:?}"),
                value: z_bound.violations as f64,
                tolerance: 0.0,
                passed: z_bound.passes(),
                note: Some(format!(
                    "{} points checked, {} outside the box skipped, worst margin {:.3e}",
                    z_bound.checked, z_bound.skipped_outside, z_bound.worst_margin
                )),
            });
            simulations.push(StartReport {
                x0: x0.clone(),
                residual,
                z_bound,
            });
        }
    }

    let structural = if run.k >= 1 && settings.structural_trials > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        let report = check_structural_dependence(&run.problem, run.k, settings.structural_trials, &mut rng)?;
        checks.push(Check::at_most(
            "structural_dependence".into(),
            report.max_deviation(),
            settings.structural_tol,
        ));
        Some(report)
    } else {
        skipped.push("structural dependence: needs k ≥ 1 and at least one trial".into());
        None
    };

    Ok(VerifyReport {
        problem: run.name.clone(),
        k: run.k,
        passed: checks.iter().all(|c| c.passed),
        checks,
        consistency,
        simulations,
        structural,
        skipped,
    })
}

/// One row of a refinement table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TableRow {
    pub dir: PathBuf,
    pub problem: String,
    pub k: usize,
    /// Largest grid spacing.
    pub h: f64,
    pub dt: f64,
    pub nodes: usize,
    /// Time of the compared snapshot (the last one of the run).
    pub t: f64,
    /// `exact`, `finest` (the finest run of the group) or `none`.
    pub reference: String,
    /// Per level, the largest absolute error over nodes and components.
    pub errors: Vec<Option<f64>>,
    /// Per level, the observed order against the previous row.
    pub orders: Vec<Option<f64>>,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, |m, d| if d.is_nan() { f64::NAN } else { m.max(d) })
}

fn exact_errors(run: &LoadedRun) -> Option<Vec<Option<f64>>> {
    let traj = &run.trajectory;
    let stack = traj.last();
    let grid = &traj.grid;
    let mut errors = Vec::with_capacity(traj.k + 1);
    for level in 0..=traj.k {
        let comp = traj.dims.y_len(level);
        let mut worst = 0.0f64;
        for node in 0..grid.node_count() {
            let exact = run.run.problem.exact(level, stack.t, &grid.node_coords(node))?;
            worst = worst.max(max_abs_diff(&stack.fields[level][node * comp..(node + 1) * comp], &exact));
        }
        errors.push(Some(worst));
    }
    Some(errors)
}

fn reference_errors(run: &LoadedRun, finest: &LoadedRun) -> Vec<Option<f64>> {
    let (traj, fine) = (&run.trajectory, &finest.trajectory);
    let (stack, fine_stack) = (traj.last(), fine.last());
    let same_time = (stack.t - fine_stack.t).abs() <= 1e-9 * traj.dt.max(1.0);
    (0..=traj.k)
        .map(|level| {
            if !same_time || level > fine.k {
                return None;
            }
            let comp = traj.dims.y_len(level);
            let worst = (0..traj.grid.node_count())
                .map(|node| {
                    let reference = fine.grid.interpolate(&fine_stack.fields[level], comp, &traj.grid.node_coords(node));
                    max_abs_diff(&stack.fields[level][node * comp..(node + 1) * comp], &reference)
                })
                .fold(0.0f64, f64::max);
            Some(worst)
        })
        .collect()
}

/// Refinement table over run directories. Runs are grouped by problem and
/// parameters and ordered from coarse to fine; errors are measured against
/// the closed form when the problem has one, else against the finest run.
pub fn cmd_table(dirs: &[PathBuf]) -> Result<Vec<TableRow>> {
    if dirs.is_empty() {
        return Err(Error::MissingArtifact("no run directories given".into()));
    }
    let mut groups: BTreeMap<String, Vec<LoadedRun>> = BTreeMap::new();
    for dir in dirs {
        let run = load_run(dir, false)?;
        let key = format!("{} {}", run.run.name, serde_json::to_string(&run.run.params)?);
        groups.entry(key).or_default().push(run);
    }
    let mut rows = Vec::new();
    for (_, mut runs) in groups {
        let spacing = |r: &LoadedRun| {
            let g = &r.trajectory.grid;
            (0..g.dim()).map(|a| g.spacing(a)).fold(0.0, f64::max)
        };
        runs.sort_by(|a, b| {
            b.trajectory
                .dt
                .total_cmp(&a.trajectory.dt)
                .then(spacing(b).total_cmp(&spacing(a)))
        });
        let finest = runs.len() - 1;
        let mut group_rows: Vec<TableRow> = Vec::with_capacity(runs.len());
        for (i, run) in runs.iter().enumerate() {
            let (reference, errors) = match exact_errors(run) {
                Some(errors) => ("exact", errors),
                None if i < finest => ("finest", reference_errors(run, &runs[finest])),
                None => ("none", vec![None; run.trajectory.k + 1]),
            };
            let orders = match group_rows.last() {
                Some(prev) => {
                    let ratio = if (prev.dt / run.trajectory.dt - 1.0).abs() > 1e-12 {
                        prev.dt / run.trajectory.dt
                    } else {
                        prev.h / spacing(run)
                    };
                    errors
                        .iter()
                        .enumerate()
                        .map(|(level, e)| match (prev.errors.get(level).copied().flatten(), e) {
                            (Some(p), Some(e)) if p > 0.0 && *e > 0.0 && ratio > 1.0 => Some((p / e).ln() / ratio.ln()),
                            _ => None,
                        })
                        .collect()
                }
                None => vec![None; errors.len()],
            };
            group_rows.push(TableRow {
                dir: run.dir.clone(),
                problem: run.run.name.clone(),
                k: run.trajectory.k,
                h: spacing(run),
                dt: run.trajectory.dt,
                nodes: run.trajectory.grid.node_count(),
                t: run.trajectory.last().t,
                reference: reference.into(),
                errors,
                orders,
            });
        }
        rows.extend(group_rows);
    }
    Ok(rows)
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn table_header(levels: usize) -> Vec<String> {
    let mut header: Vec<String> = ["dir", "problem", "k", "h", "dt", "nodes", "t", "reference"]
        .into_iter()
        .map(String::from)
        .collect();
    header.extend((0..levels).map(|i| format!("err_u{i}")));
    header.extend((0..levels).map(|i| format!("order_u{i}")));
    header
}

fn table_cells(row: &TableRow, levels: usize, number: impl Fn(f64) -> String) -> Vec<String> {
    let mut cells = vec![
        row.dir.display().to_string(),
        row.problem.clone(),
        row.k.to_string(),
        number(row.h),
        number(row.dt),
        row.nodes.to_string(),
        number(row.t),
        row.reference.clone(),
    ];
    let get = |v: &[Option<f64>], i: usize| v.get(i).copied().flatten();
    cells.extend((0..levels).map(|i| get(&row.errors, i).map(&number).unwrap_or_default()));
    cells.extend((0..levels).map(|i| get(&row.orders, i).map(&number).unwrap_or_default()));
    cells
}

fn table_levels(rows: &[TableRow]) -> usize {
    rows.iter().map(|r| r.k + 1).max().unwrap_or(0)
}

pub fn write_table_csv(path: &Path, rows: &[TableRow]) -> Result<()> {
    let levels = table_levels(rows);
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(table_header(levels))?;
    for row in rows {
        writer.write_record(table_cells(row, levels, |v| cell(Some(v))))?;
    }
    writer.flush()?;
    Ok(())
}

/// Column-aligned rendering of the table.
pub fn render_table(rows: &[TableRow]) -> String {
    let levels = table_levels(rows);
    let mut lines = vec![table_header(levels)];
    lines.extend(rows.iter().map(|r| table_cells(r, levels, |v| format!("{v:.3e}"))));
    let widths: Vec<usize> = (0..lines[0].len())
        .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for line in &lines {
        let padded: Vec<String> = line.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    }
    out
}
