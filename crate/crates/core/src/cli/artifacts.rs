//! On-disk layout of a solve run.
//!
//! ```text
//! <out>/manifest.json      config echo, version, snapshot list
//! <out>/diagnostics.json   blow-up monitor history and outcome
//! <out>/fields-<t>.csv     one per saved snapshot
//! <out>/error.json         only when the run failed
//! ```
//!
//! Field CSVs hold the node coordinates `x1..xn`, then every level flattened
//! with 1-based multi-indices: `u0[1]`, `u1[1][1]`, `u2[1][2][1]`, …
//! Values are printed in shortest round-trip form.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ResolvedRun, RunConfig};
use crate::error::{Error, Result};
use crate::field_solver::{tabulate_generators, Condition, FieldStack, FieldTrajectory, GridSpec, SingularityDiagnostics};
use crate::model::Dims;

pub const MANIFEST: &str = "manifest.json";
pub const DIAGNOSTICS: &str = "diagnostics.json";
pub const ERROR: &str = "error.json";
pub const VERIFY: &str = "verify.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SnapshotEntry {
    pub t: f64,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub dims: Dims,
    /// Step actually used (the horizon over the number of steps).
    pub dt_effective: f64,
    pub completed: bool,
    pub snapshots: Vec<SnapshotEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DiagnosticsFile {
    pub problem: String,
    pub k: usize,
    pub completed: bool,
    pub triggered: Option<Condition>,
    pub s_min_estimate: Option<f64>,
    pub lip_sigma_z: f64,
    pub history: Vec<SingularityDiagnostics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorFile {
    pub kind: String,
    pub message: String,
}

impl ErrorFile {
    pub fn new(err: &Error) -> Self {
        Self {
            kind: err.kind().to_string(),
            message: err.to_string(),
        }
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|_| Error::MissingArtifact(path.display().to_string()))?;
    Ok(serde_json::from_str(&text)?)
}

/// `u2[1][2][1]`-style names of every component of one level.
fn level_headers(dims: Dims, level: usize) -> Vec<String> {
    let shape = dims.y_shape(level);
    (0..dims.y_len(level))
        .map(|flat| {
            let index = shape.unravel(flat);
            let suffix: String = index.iter().map(|i| format!("[{}]", i + 1)).collect();
            format!("u{level}{suffix}")
        })
        .collect()
}

pub fn csv_headers(dims: Dims, k: usize) -> Vec<String> {
    let mut headers: Vec<String> = (1..=dims.n).map(|a| format!("x{a}")).collect();
    for level in 0..=k {
        headers.extend(level_headers(dims, level));
    }
    headers
}

pub fn write_snapshot(path: &Path, grid: &GridSpec, dims: Dims, stack: &FieldStack) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(csv_headers(dims, stack.k()))?;
    let mut row = Vec::new();
    for node in 0..grid.node_count() {
        row.clear();
        row.extend(grid.node_coords(node).iter().map(|v| format!("{v:?}")));
        for (level, field) in stack.fields.iter().enumerate() {
            let comp = dims.y_len(level);
            row.extend(field[node * comp..(node + 1) * comp].iter().map(|v| format!("{v:?}")));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path, grid: &GridSpec, dims: Dims, k: usize, t: f64) -> Result<FieldStack> {
    let mut reader = csv::Reader::from_path(path).map_err(|_| Error::MissingArtifact(path.display().to_string()))?;
    let expected = csv_headers(dims, k);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers != expected {
        return Err(Error::InvalidArgument(format!("{}: unexpected CSV header", path.display())));
    }
    let mut fields: Vec<Vec<f64>> = (0..=k).map(|i| Vec::with_capacity(grid.node_count() * dims.y_len(i))).collect();
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        let mut values = record.iter().skip(dims.n).map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("{}: `{s}` is not a number", path.display())))
        });
        for (level, field) in fields.iter_mut().enumerate() {
            for _ in 0..dims.y_len(level) {
                field.push(values.next().expect("header checked")?);
            }
        }
        rows += 1;
    }
    if rows != grid.node_count() {
        return Err(Error::InvalidArgument(format!(
            "{}: {rows} rows for {} grid nodes",
            path.display(),
            grid.node_count()
        )));
    }
    Ok(FieldStack::from_fields(grid, dims, t, fields))
}

/// Snapshot file names, unique even when two times print alike.
fn snapshot_names(times: impl Iterator<Item = f64>) -> Vec<String> {
    let mut seen = HashSet::new();
    times
        .enumerate()
        .map(|(i, t)| {
            let name = format!("fields-{t:.6}.csv");
            if seen.insert(name.clone()) {
                name
            } else {
                format!("fields-{t:.6}-{i}.csv")
            }
        })
        .collect()
}

/// Removes field CSVs of an earlier run in the same directory.
fn clear_old_snapshots(dir: &Path) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with("fields-") && name.ends_with(".csv") {
            std::fs::remove_file(&path)?;
        }
    }
    for stale in [ERROR, VERIFY] {
        let path = dir.join(stale);
        if path.exists() {
            std::fs::remove_file(path)?;
        }
    }
    Ok(())
}

pub fn write_run(run: &ResolvedRun, trajectory: &FieldTrajectory) -> Result<Manifest> {
    std::fs::create_dir_all(&run.out)?;
    clear_old_snapshots(&run.out)?;
    let names = snapshot_names(trajectory.snapshots.iter().map(|s| s.t));
    let mut snapshots = Vec::with_capacity(names.len());
    for (stack, file) in trajectory.snapshots.iter().zip(names) {
        write_snapshot(&run.out.join(&file), &trajectory.grid, trajectory.dims, stack)?;
        snapshots.push(SnapshotEntry { t: stack.t, file });
    }
    let diagnostics = DiagnosticsFile {
        problem: run.name.clone(),
        k: run.k,
        completed: trajectory.completed(),
        triggered: trajectory.triggered,
        s_min_estimate: trajectory.s_min_estimate,
        lip_sigma_z: run.problem.lip_sigma_z(),
        history: trajectory.diagnostics.clone(),
    };
    write_json(&run.out.join(DIAGNOSTICS), &diagnostics)?;
    let manifest = Manifest {
        tool: "decouple".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: run.to_config(),
        dims: trajectory.dims,
        dt_effective: trajectory.dt,
        completed: trajectory.completed(),
        snapshots,
    };
    write_json(&run.out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// A run read back from disk.
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub run: ResolvedRun,
    pub trajectory: FieldTrajectory,
}

/// Reads a run directory. With `generators`, `φ⁽ⁱ⁾` is recomputed at the
/// nodes of every snapshot, as path simulation needs it.
pub fn load_run(dir: &Path, generators: bool) -> Result<LoadedRun> {
    if !dir.is_dir() {
        return Err(Error::MissingArtifact(dir.display().to_string()));
    }
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    let diagnostics: DiagnosticsFile = read_json(&dir.join(DIAGNOSTICS))?;
    let mut run = manifest.config.resolve()?;
    run.out = dir.to_path_buf();
    let dims = run.problem.dims();
    if dims != manifest.dims {
        return Err(Error::InvalidArgument(format!("{}: dimensions disagree with the problem", dir.display())));
    }
    let mut snapshots = Vec::with_capacity(manifest.snapshots.len());
    for entry in &manifest.snapshots {
        let mut stack = read_snapshot(&dir.join(&entry.file), &run.grid, dims, run.k, entry.t)?;
        if generators {
            stack.generators = tabulate_generators(&run.problem, &run.grid, &stack, &run.solver)?;
        }
        snapshots.push(stack);
    }
    if snapshots.is_empty() {
        return Err(Error::MissingArtifact(format!("{}: no field snapshots", dir.display())));
    }
    let trajectory = FieldTrajectory {
        problem: run.name.clone(),
        dims,
        k: run.k,
        grid: run.grid.clone(),
        dt: manifest.dt_effective,
        snapshots,
        diagnostics: diagnostics.history,
        triggered: diagnostics.triggered,
        s_min_estimate: diagnostics.s_min_estimate,
    };
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        manifest,
        run,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headers_name_levels_and_indices() {
        let dims = Dims::new(2, 1, 1);
        let h = csv_headers(dims, 2);
        assert_eq!(&h[..3], ["x1", "x2", "u0[1]"]);
        assert_eq!(&h[3..5], ["u1[1][1]", "u1[1][2]"]);
        assert_eq!(h[5..].len(), 4);
        assert_eq!(h[6], "u2[1][1][2]");
    }

    #[test]
    fn duplicate_times_get_distinct_names() {
        let names = snapshot_names([1.0, 1.0 - 1e-9, 0.0].into_iter());
        assert_eq!(names[0], "fields-1.000000.csv");
        assert_ne!(names[0], names[1]);
        assert_eq!(names[2], "fields-0.000000.csv");
    }
}
