//! Run configuration: a TOML file layered under command-line flags.
//!
//! Precedence, lowest first: built-in per-problem defaults, the config file
//! (or the `config` object of a `manifest.json`), flags. Every field is
//! optional; [`RunConfig::resolve`] fills the gaps.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::field_solver::{BoundaryPolicy, GridSpec, Interpolation, SolverConfig, Thresholds};
use crate::model::{registry_get_with, FbsdeProblem, ProblemParams};

pub const DEFAULT_PROBLEM: &str = "heat";
pub const DEFAULT_K: usize = 2;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub params: ProblemParams,
    pub solver: SolverSection,
    pub grid: GridSection,
    pub verify: VerifySection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quad_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub save_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lip_blowup: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e0_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub picard_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub picard_max_iter: Option<usize>,
}

/// Box and resolution. `nodes` wins over `spacing` when both are set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundaryPolicy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interpolation: Option<Interpolation>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Starting points of the simulated paths; the box centre when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<Vec<f64>>>,
    /// Levels integrated along the paths (capped by `k`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consistency_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structural_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structural_trials: Option<usize>,
}

/// Fully determined verification settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifySettings {
    pub paths: usize,
    pub seed: u64,
    pub x0: Vec<Vec<f64>>,
    pub levels: usize,
    pub consistency_tol: f64,
    pub residual_tol: f64,
    pub structural_tol: f64,
    pub structural_trials: usize,
}

/// A configuration with every default applied.
#[derive(Clone, Debug)]
pub struct ResolvedRun {
    pub name: String,
    pub params: ProblemParams,
    pub problem: FbsdeProblem,
    pub k: usize,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub verify: VerifySettings,
    pub out: PathBuf,
}

struct ProblemDefaults {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Resolution,
    dt: f64,
    save_every: usize,
}

enum Resolution {
    Nodes(Vec<usize>),
    Spacing(f64),
}

fn problem_defaults(name: &str) -> ProblemDefaults {
    use std::f64::consts::PI;
    match name {
        "skorokhod" => ProblemDefaults {
            lower: vec![-4.0, -2.0],
            upper: vec![4.0, 2.0],
            resolution: Resolution::Spacing(0.1),
            dt: 2e-2,
            save_every: 5,
        },
        "burgers_blowup" => ProblemDefaults {
            lower: vec![-1.0],
            upper: vec![1.0],
            resolution: Resolution::Nodes(vec![41]),
            dt: 1e-3,
            save_every: 100,
        },
        "heat" | "heat_quadratic" => ProblemDefaults {
            lower: vec![-PI],
            upper: vec![PI],
            resolution: Resolution::Spacing(0.01),
            dt: 1e-3,
            save_every: 100,
        },
        _ => ProblemDefaults {
            lower: vec![-3.0],
            upper: vec![3.0],
            resolution: Resolution::Nodes(vec![61]),
            dt: 1e-3,
            save_every: 100,
        },
    }
}

/// Recursive merge of JSON objects; `top` wins on leaves.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (key, value) in t {
                match b.get_mut(&key) {
                    Some(slot) => merge(slot, value),
                    None => {
                        b.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

impl RunConfig {
    /// Reads a TOML config, or the `config` object of a `manifest.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let mut value: Value = serde_json::from_str(&text)?;
            if let Some(inner) = value.get_mut("config") {
                value = inner.take();
            }
            serde_json::from_value(value).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
    }

    /// `self` with every field set in `top` replaced. A grid resolution given
    /// in `top` discards the other resolution of `self`.
    pub fn overlay(&self, top: &RunConfig) -> Result<Self> {
        let mut base = serde_json::to_value(self)?;
        merge(&mut base, serde_json::to_value(top)?);
        let mut merged: RunConfig =
            serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))?;
        if top.grid.nodes.is_some() && top.grid.spacing.is_none() {
            merged.grid.spacing = None;
        } else if top.grid.spacing.is_some() && top.grid.nodes.is_none() {
            merged.grid.nodes = None;
        }
        Ok(merged)
    }

    /// Sets a `params` entry from `key=value`.
    pub fn set_param(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{assignment}`")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("parameter `{key}` needs a number, got `{value}`")))?;
        let mut params = serde_json::to_value(&self.params)?;
        params[key.trim()] = Value::from(value);
        self.params = serde_json::from_value(params).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn resolve(&self) -> Result<ResolvedRun> {
        let name = self.problem.clone().unwrap_or_else(|| DEFAULT_PROBLEM.to_string());
        let problem = registry_get_with(&name, &self.params)?;
        let k = self.k.unwrap_or(DEFAULT_K);
        if k + 1 > problem.k_max() {
            return Err(Error::OrderExceeded {
                requested: k,
                supported: problem.k_max().saturating_sub(1),
            });
        }
        let defaults = problem_defaults(&name);

        let g = &self.grid;
        let lower = g.lower.clone().unwrap_or(defaults.lower);
        let upper = g.upper.clone().unwrap_or(defaults.upper);
        let resolution = match (&g.nodes, g.spacing) {
            (Some(nodes), _) => Resolution::Nodes(nodes.clone()),
            (None, Some(h)) => Resolution::Spacing(h),
            (None, None) => defaults.resolution,
        };
        let grid = match resolution {
            Resolution::Nodes(nodes) => {
                let nodes = if nodes.len() == 1 && lower.len() > 1 { vec![nodes[0]; lower.len()] } else { nodes };
                GridSpec::new(lower, upper, nodes)?
            }
            Resolution::Spacing(h) => GridSpec::with_spacing(lower, upper, h)?,
        }
        .with_boundary(g.boundary.unwrap_or_default())
        .with_interpolation(g.interpolation.unwrap_or_default());
        if grid.dim() != problem.dims().n {
            return Err(Error::Config(format!(
                "`{name}` has state dimension {}, the grid has {}",
                problem.dims().n,
                grid.dim()
            )));
        }

        let s = &self.solver;
        let base = SolverConfig::default();
        let solver = SolverConfig {
            dt: s.dt.unwrap_or(defaults.dt),
            quad_points: s.quad_points.unwrap_or(base.quad_points),
            save_every: s.save_every.unwrap_or(defaults.save_every),
            thresholds: Thresholds {
                lip_blowup: s.lip_blowup.unwrap_or(base.thresholds.lip_blowup),
                e0_margin: s.e0_margin.or(base.thresholds.e0_margin),
            },
            picard_tol: s.picard_tol.unwrap_or(base.picard_tol),
            picard_max_iter: s.picard_max_iter.unwrap_or(base.picard_max_iter),
        };

        let v = &self.verify;
        let centre: Vec<f64> = grid.lower.iter().zip(&grid.upper).map(|(a, b)| 0.5 * (a + b)).collect();
        let verify = VerifySettings {
            paths: v.paths.unwrap_or(10_000),
            seed: v.seed.unwrap_or(0),
            x0: v.x0.clone().unwrap_or_else(|| vec![centre]),
            levels: v.levels.unwrap_or(1).min(k),
            consistency_tol: v.consistency_tol.unwrap_or(1e-2),
            residual_tol: v.residual_tol.unwrap_or(5e-2),
            structural_tol: v.structural_tol.unwrap_or(1e-10),
            structural_trials: v.structural_trials.unwrap_or(20),
        };
        if let Some(bad) = verify.x0.iter().find(|p| p.len() != grid.dim()) {
            return Err(Error::Config(format!("starting point {bad:?} does not have {} coordinates", grid.dim())));
        }

        let out = match &self.out {
            Some(out) => out.clone(),
            None => {
                let root = std::env::var_os("DECOUPLE_OUT").map_or_else(|| PathBuf::from("decouple-runs"), PathBuf::from);
                root.join(format!("{name}-k{k}"))
            }
        };

        Ok(ResolvedRun {
            name,
            params: self.params.clone(),
            problem,
            k,
            grid,
            solver,
            verify,
            out,
        })
    }
}

impl ResolvedRun {
    /// The fully populated config, as echoed in the manifest.
    pub fn to_config(&self) -> RunConfig {
        RunConfig {
            problem: Some(self.name.clone()),
            k: Some(self.k),
            out: Some(self.out.clone()),
            params: self.params.clone(),
            solver: SolverSection {
                dt: Some(self.solver.dt),
                quad_points: Some(self.solver.quad_points),
                save_every: Some(self.solver.save_every),
                lip_blowup: Some(self.solver.thresholds.lip_blowup),
                e0_margin: self.solver.thresholds.e0_margin,
                picard_tol: Some(self.solver.picard_tol),
                picard_max_iter: Some(self.solver.picard_max_iter),
            },
            grid: GridSection {
                lower: Some(self.grid.lower.clone()),
                upper: Some(self.grid.upper.clone()),
                nodes: Some(self.grid.nodes.clone()),
                spacing: None,
                boundary: Some(self.grid.boundary),
                interpolation: Some(self.grid.interpolation),
            },
            verify: VerifySection {
                paths: Some(self.verify.paths),
                seed: Some(self.verify.seed),
                x0: Some(self.verify.x0.clone()),
                levels: Some(self.verify.levels),
                consistency_tol: Some(self.verify.consistency_tol),
                residual_tol: Some(self.verify.residual_tol),
                structural_tol: Some(self.verify.structural_tol),
                structural_trials: Some(self.verify.structural_trials),
            },
        }
    }
}

/// Parses a comma-separated list of numbers; `pi` and `-pi` are accepted.
pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|token| {
            let token = token.trim();
            match token {
                "pi" | "+pi" => Ok(std::f64::consts::PI),
                "-pi" => Ok(-std::f64::consts::PI),
                _ => token.parse().map_err(|_| Error::Config(format!("`{token}` is not a number"))),
            }
        })
        .collect()
}

/// `lo1,hi1[,lo2,hi2…]` into lower and upper corners.
pub fn parse_box(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let values = parse_list(text)?;
    if values.is_empty() || values.len() % 2 != 0 {
        return Err(Error::Config(format!("--box needs lo,hi pairs, got `{text}`")));
    }
    Ok(values.chunks(2).map(|c| (c[0], c[1])).unzip())
}
