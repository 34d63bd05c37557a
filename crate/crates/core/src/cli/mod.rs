//! `decouple` command line: `solve`, `verify` and `table`.
//!
//! Exit codes: 0 success, 1 configuration, runtime or verification failure
//! (an error JSON goes to stderr and, when the run directory is known, to
//! `error.json`), 2 a solve stopped early by the blow-up monitor.

pub mod artifacts;
pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use crate::error::{Error, Result};
use artifacts::{write_json, ErrorFile, ERROR};
use commands::{cmd_solve, cmd_table, cmd_verify, render_table, write_table_csv};
use config::{parse_box, parse_list, GridSection, RunConfig, SolverSection, VerifySection};

#[derive(Debug, Parser)]
#[command(name = "decouple", version, about = "Decoupling fields of coupled FBSDEs and their derivative hierarchies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep the field hierarchy backward and write snapshots and diagnostics.
    Solve(Box<SolveArgs>),
    /// Re-check a solve run directory and write verify.json.
    Verify(VerifyArgs),
    /// Refinement table over several run directories.
    Table(TableArgs),
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// TOML config, or a manifest.json of an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    /// Highest derivative level.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    /// Nodes per axis, one value or one per axis.
    #[arg(long, value_name = "N[,N...]")]
    grid_nodes: Option<String>,
    /// Grid spacing, used when no node count is given.
    #[arg(long)]
    spacing: Option<f64>,
    /// Box corners as lo,hi pairs per axis; `pi` is accepted.
    #[arg(long = "box", value_name = "LO,HI[,LO,HI...]", allow_hyphen_values = true)]
    bounds: Option<String>,
    /// clamp_gradient, linear_extrapolate or taylor.
    #[arg(long)]
    boundary: Option<String>,
    /// multilinear or cubic.
    #[arg(long)]
    interpolation: Option<String>,
    #[arg(long)]
    quad_points: Option<usize>,
    #[arg(long)]
    save_every: Option<usize>,
    #[arg(long)]
    lip_blowup: Option<f64>,
    #[arg(long)]
    e0_margin: Option<f64>,
    /// Problem parameter, e.g. `horizon=0.5`; repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    verify: VerifyFlags,
}

#[derive(Debug, Args)]
struct VerifyFlags {
    /// Simulated paths per starting point.
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Starting point, comma-separated; repeatable.
    #[arg(long, value_name = "X[,X...]", allow_hyphen_values = true)]
    x0: Vec<String>,
    /// Levels integrated along the paths.
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    consistency_tol: Option<f64>,
    #[arg(long)]
    residual_tol: Option<f64>,
    #[arg(long)]
    structural_tol: Option<f64>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Directory written by `solve`.
    dir: PathBuf,
    /// TOML config whose [verify] table overrides the manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: VerifyFlags,
}

#[derive(Debug, Args)]
struct TableArgs {
    /// Run directories written by `solve`.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// CSV destination.
    #[arg(long, default_value = "table.csv")]
    out: PathBuf,
}

/// Parses a snake_case enum value through its serde representation.
fn parse_name<T: DeserializeOwned>(flag: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| Error::Config(format!("--{flag}: unknown value `{value}`")))
}

impl VerifyFlags {
    fn section(&self) -> Result<VerifySection> {
        let x0 = if self.x0.is_empty() {
            None
        } else {
            Some(self.x0.iter().map(|p| parse_list(p)).collect::<Result<_>>()?)
        };
        Ok(VerifySection {
            paths: self.paths,
            seed: self.seed,
            x0,
            levels: self.levels,
            consistency_tol: self.consistency_tol,
            residual_tol: self.residual_tol,
            structural_tol: self.structural_tol,
            structural_trials: None,
        })
    }
}

impl SolveArgs {
    fn flag_config(&self) -> Result<RunConfig> {
        let (lower, upper) = match &self.bounds {
            Some(text) => {
                let (lo, hi) = parse_box(text)?;
                (Some(lo), Some(hi))
            }
            None => (None, None),
        };
        let nodes = self
            .grid_nodes
            .as_deref()
            .map(|text| {
                text.split(',')
                    .map(|t| t.trim().parse::<usize>().map_err(|_| Error::Config(format!("--grid-nodes: `{t}`"))))
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        let mut config = RunConfig {
            problem: self.problem.clone(),
            k: self.k,
            out: self.out.clone(),
            params: Default::default(),
            solver: SolverSection {
                dt: self.dt,
                quad_points: self.quad_points,
                save_every: self.save_every,
                lip_blowup: self.lip_blowup,
                e0_margin: self.e0_margin,
                picard_tol: None,
                picard_max_iter: None,
            },
            grid: GridSection {
                lower,
                upper,
                nodes,
                spacing: self.spacing,
                boundary: self.boundary.as_deref().map(|v| parse_name("boundary", v)).transpose()?,
                interpolation: self.interpolation.as_deref().map(|v| parse_name("interpolation", v)).transpose()?,
            },
            verify: self.verify.section()?,
        };
        for assignment in &self.params {
            config.set_param(assignment)?;
        }
        Ok(config)
    }
}

/// Reports an error as JSON on stderr and, if given, in `dir/error.json`.
fn fail(err: &Error, dir: Option<&Path>) -> i32 {
    let report = ErrorFile::new(err);
    if let Some(dir) = dir {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = write_json(&dir.join(ERROR), &report);
        }
    }
    let json = serde_json::json!({ "error": report });
    eprintln!("{json}");
    1
}

fn run_solve(args: &SolveArgs) -> i32 {
    let resolved = (|| {
        let file = match &args.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        file.overlay(&args.flag_config()?)?.resolve()
    })();
    let run = match resolved {
        Ok(run) => run,
        Err(err) => return fail(&err, args.out.as_deref()),
    };
    match cmd_solve(&run) {
        Ok(outcome) => {
            let traj = &outcome.trajectory;
            let status = match (traj.triggered, traj.s_min_estimate) {
                (Some(condition), Some(s)) => format!("stopped by {condition:?} at t = {s}"),
                _ => "completed".to_string(),
            };
            println!(
                "{} k={}: {} nodes, dt={}, {}; {} snapshots in {}",
                run.name,
                run.k,
                run.grid.node_count(),
                traj.dt,
                status,
                traj.snapshots.len(),
                run.out.display()
            );
            outcome.exit_code()
        }
        Err(err) => fail(&err, Some(&run.out)),
    }
}

fn run_verify(args: &VerifyArgs) -> i32 {
    let overrides = (|| {
        let file = match &args.config {
            Some(path) => RunConfig::load(path)?.verify,
            None => VerifySection::default(),
        };
        let flags = args.flags.section()?;
        let merged = RunConfig {
            verify: file,
            ..Default::default()
        }
        .overlay(&RunConfig {
            verify: flags,
            ..Default::default()
        })?;
        Ok::<_, Error>(merged.verify)
    })();
    let report = match overrides.and_then(|o| cmd_verify(&args.dir, &o)) {
        Ok(report) => report,
        Err(err) => {
            let dir = args.dir.is_dir().then_some(args.dir.as_path());
            return fail(&err, dir);
        }
    };
    for check in &report.checks {
        let mark = if check.passed { "PASS" } else { "FAIL" };
        let note = check.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default();
        println!("{mark} {}: {:.3e} (tolerance {:.1e}){note}", check.name, check.value, check.tolerance);
    }
    for reason in &report.skipped {
        println!("SKIP {reason}");
    }
    if report.passed {
        println!("verify: all {} checks passed", report.checks.len());
        0
    } else {
        println!("verify: {} of {} checks failed", report.failed().count(), report.checks.len());
        1
    }
}

fn run_table(args: &TableArgs) -> i32 {
    let result = cmd_table(&args.dirs).and_then(|rows| {
        write_table_csv(&args.out, &rows)?;
        Ok(rows)
    });
    match result {
        Ok(rows) => {
            print!("{}", render_table(&rows));
            0
        }
        Err(err) => fail(&err, None),
    }
}

/// Runs the command line on `args` (program name first) and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) if !err.use_stderr() => {
            let _ = err.print();
            return 0;
        }
        Err(err) => {
            let json = serde_json::json!({ "error": { "kind": "usage", "message": err.render().to_string() } });
            eprintln!("{json}");
            return 1;
        }
    };
    match &cli.command {
        Command::Solve(args) => run_solve(args),
        Command::Verify(args) => run_verify(args),
        Command::Table(args) => run_table(args),
    }
}
