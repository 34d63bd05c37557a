//! Backward grid scheme for the stack `(u⁽⁰⁾, …, u⁽ᵏ⁾)`.
//!
//! One step from `t + Δt` to `t` at node `x`:
//!
//! 1. `y⁽ⁱ⁾ = u⁽ⁱ⁾(t+Δt, x)`; `z⁽⁰⁾` is the fixed point of `z ↦ u⁽¹⁾σ(t+Δt, x, y⁽⁰⁾, z)`;
//!    `z⁽ⁱ⁾ = u⁽ⁱ⁺¹⁾·σ`, with a finite-difference gradient of `u⁽ᵏ⁾` closing the top level;
//! 2. `u⁽ⁱ⁾(t, x) = E[u⁽ⁱ⁾(t+Δt, x + μΔt + σ√Δt W)] − φ⁽ⁱ⁾(θ_i)Δt`, the
//!    expectation by tensor Gauss–Hermite quadrature and grid interpolation.
//!
//! After every step the Lipschitz estimates are checked against the blow-up
//! conditions; the sweep stops at the first trigger.

mod grid;
mod monitor;
mod quadrature;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{eval_phi_levels, ThetaPoint};
use crate::model::{Dims, FbsdeProblem};
use crate::tensor::GeneralizedMatrix;

pub use grid::{BoundaryPolicy, GridSpec, Interpolation};
pub use monitor::{monitor_singularity, Condition, SingularityDiagnostics, Thresholds};
pub use quadrature::GaussHermite;

/// Fields `u⁽⁰⁾, …, u⁽ᵏ⁾` at the grid nodes at one time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldStack {
    pub t: f64,
    /// `fields[i]` holds `u⁽ⁱ⁾ ∈ ℝ^{m ×ᵢ n}` node-major.
    pub fields: Vec<Vec<f64>>,
    /// Per level, the largest Frobenius norm over nodes.
    pub sup_norms: Vec<f64>,
    /// Per level, the largest forward-difference gradient norm over cells.
    pub lip_estimates: Vec<f64>,
    /// `φ⁽ⁱ⁾` at the nodes, laid out like `fields`; empty when not tabulated.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub generators: Vec<Vec<f64>>,
}

impl FieldStack {
    pub fn from_fields(grid: &GridSpec, dims: Dims, t: f64, fields: Vec<Vec<f64>>) -> Self {
        let mut sup_norms = Vec::with_capacity(fields.len());
        let mut lip_estimates = Vec::with_capacity(fields.len());
        for (i, f) in fields.iter().enumerate() {
            let comp = dims.y_len(i);
            let sup = f
                .chunks(comp)
                .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
                .fold(0.0f64, |a, b| if b.is_nan() { f64::NAN } else { a.max(b) });
            sup_norms.push(sup);
            lip_estimates.push(grid.lipschitz_estimate(f, comp));
        }
        Self {
            t,
            fields,
            sup_norms,
            lip_estimates,
            generators: Vec::new(),
        }
    }

    /// Highest level `k`.
    pub fn k(&self) -> usize {
        self.fields.len() - 1
    }

    /// `u⁽ⁱ⁾` at one node.
    pub fn at_node(&self, dims: Dims, level: usize, node: usize) -> GeneralizedMatrix {
        let comp = dims.y_len(level);
        GeneralizedMatrix::from_vec(dims.y_shape(level), self.fields[level][node * comp..(node + 1) * comp].to_vec())
            .expect("finite field values")
    }
}

/// Spatial derivative fields of every level, as used for extrapolation and
/// for the top-level `z` closure. Level `i` is expanded with
/// `u⁽ⁱ⁺¹⁾, …, u⁽ᵏ⁾` and the difference quotient of `u⁽ᵏ⁾`.
pub(crate) struct Extension<'a> {
    fields: &'a [Vec<f64>],
    top_gradient: Vec<f64>,
}

impl<'a> Extension<'a> {
    pub(crate) fn new(grid: &GridSpec, dims: Dims, stack: &'a FieldStack) -> Self {
        let k = stack.k();
        let top_gradient = grid.gradient(&stack.fields[k], dims.y_len(k));
        Self {
            fields: &stack.fields,
            top_gradient,
        }
    }

    fn k(&self) -> usize {
        self.fields.len() - 1
    }

    pub(crate) fn gradient(&self, level: usize) -> &[f64] {
        if level < self.k() {
            &self.fields[level + 1]
        } else {
            &self.top_gradient
        }
    }

    /// `Du⁽ˡᵉᵛᵉˡ⁾(x)`, scaled and accumulated: the next field for lower
    /// levels, the interpolated difference quotient (held constant outside
    /// the box) for the top one.
    pub(crate) fn evaluate_gradient(&self, grid: &GridSpec, dims: Dims, level: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        if level < self.k() {
            self.evaluate(grid, dims, level + 1, x, scale, out);
        } else {
            grid.interpolate_into(&self.top_gradient, dims.y_len(level) * dims.n, &grid.clamp(x), scale, out);
        }
    }

    /// `u⁽ˡᵉᵛᵉˡ⁾(x)` with out-of-box handling, scaled and accumulated.
    pub(crate) fn evaluate(&self, grid: &GridSpec, dims: Dims, level: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let mut derivatives: Vec<&[f64]> = self.fields[level + 1..].iter().map(Vec::as_slice).collect();
        derivatives.push(&self.top_gradient);
        grid.evaluate_taylor(&self.fields[level], &derivatives, dims.y_len(level), x, scale, out);
    }
}

/// Stack at `t = T`: `u⁽ⁱ⁾ = ξ⁽ⁱ⁾` at every node.
pub fn init_terminal(problem: &FbsdeProblem, grid: &GridSpec, k: usize) -> Result<FieldStack> {
    grid.validate()?;
    let dims = problem.dims();
    if grid.dim() != dims.n {
        return Err(Error::InvalidGrid(format!("{}-dimensional grid for n = {}", grid.dim(), dims.n)));
    }
    if k + 1 > problem.k_max() {
        return Err(Error::OrderExceeded {
            requested: k,
            supported: problem.k_max().saturating_sub(1),
        });
    }
    let mut fields: Vec<Vec<f64>> = (0..=k).map(|i| Vec::with_capacity(grid.node_count() * dims.y_len(i))).collect();
    for node in 0..grid.node_count() {
        let x = grid.node_coords(node);
        for (i, f) in fields.iter_mut().enumerate() {
            f.extend_from_slice(problem.terminal_derivative(&x, i)?.values());
        }
    }
    Ok(FieldStack::from_fields(grid, dims, problem.horizon(), fields))
}

/// Fixed point of `z ↦ Du⁽⁰⁾·σ(t, x, y, z)` by Picard iteration from `z = 0`.
/// `grad_u0` is `Du⁽⁰⁾ ∈ ℝ^{m×n}`; the result is `ℝ^{m×d}` row-major. A
/// single evaluation suffices when `L_{σ,z} = 0`.
pub fn solve_z0(
    problem: &FbsdeProblem,
    grad_u0: &[f64],
    t: f64,
    x: &[f64],
    y: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let Dims { n, m, d } = problem.dims();
    if grad_u0.len() != m * n {
        return Err(Error::ShapeMismatch(format!("Du^(0) of length {} for m×n = {}", grad_u0.len(), m * n)));
    }
    let apply = |z: &[f64]| -> Vec<f64> {
        let s = problem.diffusion(t, x, y, z);
        let mut out = vec![0.0; m * d];
        for a in 0..m {
            for j in 0..d {
                out[a * d + j] = (0..n).map(|c| grad_u0[a * n + c] * s[c * d + j]).sum();
            }
        }
        out
    };
    if problem.lip_sigma_z() == 0.0 {
        return Ok(apply(&vec![0.0; m * d]));
    }
    let mut z = vec![0.0; m * d];
    let mut last_step = f64::INFINITY;
    for _ in 0..max_iter {
        let next = apply(&z);
        last_step = next.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        z = next;
        if last_step <= tol {
            return Ok(z);
        }
        if !last_step.is_finite() {
            break;
        }
    }
    Err(Error::MaxIterations {
        iterations: max_iter,
        last_step,
    })
}

/// Numerical parameters of [`solve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub dt: f64,
    /// Gauss–Hermite points per Brownian axis.
    pub quad_points: usize,
    /// Keep every `save_every`-th time level (the terminal and the last one
    /// are always kept).
    pub save_every: usize,
    pub thresholds: Thresholds,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            quad_points: 5,
            save_every: 100,
            thresholds: Thresholds::default(),
            picard_tol: 1e-12,
            picard_max_iter: 200,
        }
    }
}

/// `θ` at one node of `stack`, with the `σ` and `μ` it determines.
struct NodePoint {
    x: Vec<f64>,
    theta: ThetaPoint,
    sigma: Vec<f64>,
    mu: Vec<f64>,
}

fn node_point(
    problem: &FbsdeProblem,
    ext: &Extension<'_>,
    grid: &GridSpec,
    stack: &FieldStack,
    node: usize,
    config: &SolverConfig,
) -> Result<NodePoint> {
    let dims = problem.dims();
    let Dims { n, m, d } = dims;
    let k = stack.k();
    let t = stack.t;
    let x = grid.node_coords(node);
    let ys: Vec<GeneralizedMatrix> = (0..=k).map(|i| stack.at_node(dims, i, node)).collect();
    let g0 = &ext.gradient(0)[node * m * n..(node + 1) * m * n];
    let z0 = solve_z0(problem, g0, t, &x, ys[0].values(), config.picard_tol, config.picard_max_iter)?;
    let sigma = problem.diffusion(t, &x, ys[0].values(), &z0);
    let mu = problem.drift(t, &x, ys[0].values(), &z0);

    let mut zs = vec![GeneralizedMatrix::from_vec(dims.z_shape(0), z0)?];
    for i in 1..=k {
        let inner = n.pow(i as u32);
        let comp = m * inner * n;
        let g = &ext.gradient(i)[node * comp..(node + 1) * comp];
        let mut z = vec![0.0; m * d * inner];
        for a in 0..m {
            for j in 0..d {
                for r in 0..inner {
                    z[(a * d + j) * inner + r] = (0..n).map(|c| g[(a * inner + r) * n + c] * sigma[c * d + j]).sum();
                }
            }
        }
        zs.push(GeneralizedMatrix::from_vec(dims.z_shape(i), z)?);
    }
    let theta = ThetaPoint::new(problem, t, x.clone(), ys, zs)?;
    Ok(NodePoint { x, theta, sigma, mu })
}

/// Concatenates per-node level values into node-major fields.
fn gather(dims: Dims, k: usize, per_node: Vec<Vec<Vec<f64>>>) -> Vec<Vec<f64>> {
    let nodes = per_node.len();
    let mut fields: Vec<Vec<f64>> = (0..=k).map(|i| Vec::with_capacity(nodes * dims.y_len(i))).collect();
    for node_values in per_node {
        for (f, v) in fields.iter_mut().zip(node_values) {
            f.extend(v);
        }
    }
    fields
}

/// `φ⁽ⁱ⁾(θ_i(t, x))` at every node of `stack`, laid out like the fields.
pub fn tabulate_generators(
    problem: &FbsdeProblem,
    grid: &GridSpec,
    stack: &FieldStack,
    config: &SolverConfig,
) -> Result<Vec<Vec<f64>>> {
    let dims = problem.dims();
    let ext = Extension::new(grid, dims, stack);
    let per_node = (0..grid.node_count())
        .into_par_iter()
        .map(|node| {
            let point = node_point(problem, &ext, grid, stack, node, config)?;
            Ok(eval_phi_levels(problem, &point.theta)?.into_iter().map(GeneralizedMatrix::into_values).collect())
        })
        .collect::<Result<_>>()?;
    Ok(gather(dims, stack.k(), per_node))
}

/// The stack at `stack.t − dt`, and the generators at `stack.t` it used.
fn advance(
    problem: &FbsdeProblem,
    grid: &GridSpec,
    stack: &FieldStack,
    dt: f64,
    config: &SolverConfig,
) -> Result<(FieldStack, Vec<Vec<f64>>)> {
    let dims = problem.dims();
    let Dims { n, d, .. } = dims;
    let k = stack.k();
    let ext = Extension::new(grid, dims, stack);
    let rule = GaussHermite::new(config.quad_points)?.tensor(d);
    let sqrt_dt = dt.sqrt();

    let update = |node: usize| -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let NodePoint { x, theta, sigma, mu } = node_point(problem, &ext, grid, stack, node, config)?;
        let phi: Vec<Vec<f64>> = eval_phi_levels(problem, &theta)?
            .into_iter()
            .map(GeneralizedMatrix::into_values)
            .collect();

        let mut acc: Vec<Vec<f64>> = (0..=k).map(|i| vec![0.0; dims.y_len(i)]).collect();
        let drifted: Vec<f64> = (0..n).map(|c| x[c] + mu[c] * dt).collect();
        if sigma.iter().all(|&s| s == 0.0) {
            for (i, a) in acc.iter_mut().enumerate() {
                ext.evaluate(grid, dims, i, &drifted, 1.0, a);
            }
        } else {
            let mut point = drifted.clone();
            for (w, weight) in &rule {
                for c in 0..n {
                    point[c] = drifted[c] + sqrt_dt * (0..d).map(|j| sigma[c * d + j] * w[j]).sum::<f64>();
                }
                for (i, a) in acc.iter_mut().enumerate() {
                    ext.evaluate(grid, dims, i, &point, *weight, a);
                }
            }
        }
        for (a, p) in acc.iter_mut().zip(&phi) {
            for (v, q) in a.iter_mut().zip(p) {
                *v -= q * dt;
            }
        }
        Ok((acc, phi))
    };

    let (values, generators): (Vec<_>, Vec<_>) = (0..grid.node_count())
        .into_par_iter()
        .map(update)
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let next = FieldStack::from_fields(grid, dims, stack.t - dt, gather(dims, k, values));
    Ok((next, gather(dims, k, generators)))
}

/// One backward step from `stack` (at `stack.t`) to `stack.t − dt`.
pub fn backward_step(
    problem: &FbsdeProblem,
    grid: &GridSpec,
    stack: &FieldStack,
    dt: f64,
    config: &SolverConfig,
) -> Result<FieldStack> {
    advance(problem, grid, stack, dt, config).map(|(next, _)| next)
}

/// Saved snapshots of a backward sweep plus its singularity diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldTrajectory {
    pub problem: String,
    pub dims: Dims,
    pub k: usize,
    pub grid: GridSpec,
    /// Effective step (the horizon divided by the number of steps).
    pub dt: f64,
    /// Snapshots, times strictly decreasing from `T`.
    pub snapshots: Vec<FieldStack>,
    /// One entry per time level, starting at `T`.
    pub diagnostics: Vec<SingularityDiagnostics>,
    pub triggered: Option<Condition>,
    /// Time of the first trigger: the sweep covers `(s_min, T]`.
    pub s_min_estimate: Option<f64>,
}

impl FieldTrajectory {
    pub fn completed(&self) -> bool {
        self.triggered.is_none()
    }

    pub fn last(&self) -> &FieldStack {
        self.snapshots.last().expect("trajectory holds the terminal stack")
    }

    /// Snapshot whose time is closest to `t`.
    pub fn nearest(&self, t: f64) -> &FieldStack {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("non-empty")
    }
}

/// Sweeps backward from `T` to 0 or to the first blow-up trigger.
pub fn solve(problem: &FbsdeProblem, k: usize, grid: &GridSpec, config: &SolverConfig) -> Result<FieldTrajectory> {
    if !(config.dt > 0.0 && config.dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step {}", config.dt)));
    }
    if config.save_every == 0 {
        return Err(Error::InvalidArgument("save_every must be positive".into()));
    }
    let horizon = problem.horizon();
    let ratio = horizon / config.dt;
    let steps = if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) {
        ratio.round() as usize
    } else {
        ratio.ceil() as usize
    }
    .max(1);
    let dt = horizon / steps as f64;

    let mut stack = init_terminal(problem, grid, k)?;
    let lip = problem.lip_sigma_z();
    let mut diagnostics = vec![monitor_singularity(&stack, lip, &config.thresholds)];
    let mut snapshots = Vec::new();
    let mut triggered = diagnostics[0].triggered;
    let mut s_min_estimate = triggered.map(|_| horizon);
    // whether the current stack is to be saved; the terminal one always is
    let mut keep = true;

    if triggered.is_none() {
        for step in 1..=steps {
            let t = horizon * (1.0 - step as f64 / steps as f64);
            match advance(problem, grid, &stack, stack.t - t, config) {
                Ok((mut next, generators)) => {
                    next.t = t;
                    let diag = monitor_singularity(&next, lip, &config.thresholds);
                    let fired = diag.triggered;
                    diagnostics.push(diag);
                    let mut previous = std::mem::replace(&mut stack, next);
                    if keep {
                        previous.generators = generators;
                        snapshots.push(previous);
                    }
                    keep = fired.is_some() || step % config.save_every == 0 || step == steps;
                    if fired.is_some() {
                        triggered = fired;
                        s_min_estimate = Some(t);
                        break;
                    }
                }
                Err(err @ (Error::Singular { .. } | Error::MaxIterations { .. } | Error::NonConvergence { .. } | Error::NonFinite(_))) => {
                    // the Z fixed point or (Id − y⁽¹⁾σ_z) lost its contraction margin
                    diagnostics.push(SingularityDiagnostics {
                        t,
                        e0_margin: None,
                        lip_estimates: stack.lip_estimates.clone(),
                        sup_norms: stack.sup_norms.clone(),
                        triggered: Some(Condition::E0),
                        e2_crossed: false,
                        e2_essential: lip > 0.0,
                        note: Some(err.to_string()),
                    });
                    keep = true;
                    triggered = Some(Condition::E0);
                    s_min_estimate = Some(t);
                    break;
                }
                Err(other) => return Err(other),
            }
        }
    }
    if keep {
        // unavailable past a blow-up; the fields are kept regardless
        if let Ok(generators) = tabulate_generators(problem, grid, &stack, config) {
            stack.generators = generators;
        }
        snapshots.push(stack);
    }
    Ok(FieldTrajectory {
        problem: problem.name().to_string(),
        dims: problem.dims(),
        k,
        grid: grid.clone(),
        dt,
        snapshots,
        diagnostics,
        triggered,
        s_min_estimate,
    })
}

/// `ū⁽ⁱ⁾(t, x) = λ^{-i} u⁽ⁱ⁾(t, x/λ)` tabulated on the `λ`-scaled grid: the
/// stack of the problem returned by [`FbsdeProblem::scaled`].
pub fn scaling_transform(stack: &FieldStack, grid: &GridSpec, dims: Dims, lambda: f64) -> Result<(FieldStack, GridSpec)> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("scaling factor {lambda}")));
    }
    let scaled_grid = grid.scaled(lambda);
    let fields = stack
        .fields
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let s = lambda.powi(-(i as i32));
            f.iter().map(|v| v * s).collect()
        })
        .collect();
    Ok((FieldStack::from_fields(&scaled_grid, dims, stack.t, fields), scaled_grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{registry_get, registry_get_with, ProblemParams};

    fn line(lo: f64, hi: f64, nodes: usize) -> GridSpec {
        GridSpec::new(vec![lo], vec![hi], vec![nodes]).unwrap()
    }

    #[test]
    fn terminal_stack_matches_xi() {
        let p = registry_get_with("linear", &ProblemParams { slope: Some(2.5), ..Default::default() }).unwrap();
        let g = line(-1.0, 1.0, 11);
        let s = init_terminal(&p, &g, 2).unwrap();
        for node in 0..11 {
            let x = g.node_coords(node)[0];
            assert_eq!(s.fields[0][node], 2.5 * x);
            assert_eq!(s.fields[1][node], 2.5);
            assert_eq!(s.fields[2][node], 0.0);
        }
        assert!(init_terminal(&p, &g, p.k_max()).is_err());
    }

    #[test]
    fn picard_fixed_points() {
        let p = registry_get_with("z_coupled", &ProblemParams { offset: Some(1.0), ..Default::default() }).unwrap();
        let z = solve_z0(&p, &[0.5], 0.0, &[0.0], &[0.0], 1e-14, 100).unwrap();
        assert!((z[0] - 2.0 / 3.0).abs() < 1e-13);
        let z = solve_z0(&p, &[0.0], 0.0, &[0.0], &[0.0], 1e-14, 100).unwrap();
        assert_eq!(z, vec![0.0]);
        let heat = registry_get("heat").unwrap();
        assert_eq!(solve_z0(&heat, &[0.7], 0.0, &[0.0], &[0.0], 0.0, 0).unwrap(), vec![0.7]);
        // contraction factor 1: no convergence
        let err = solve_z0(&p, &[2.0], 0.0, &[0.0], &[0.0], 1e-12, 50).unwrap_err();
        assert!(matches!(err, Error::MaxIterations { .. }));
    }

    #[test]
    fn linear_problem_is_reproduced_exactly() {
        let p = registry_get_with("linear", &ProblemParams { slope: Some(1.5), drift: Some(0.2), volatility: Some(0.8), ..Default::default() }).unwrap();
        let g = line(-2.0, 2.0, 21);
        let traj = solve(&p, 1, &g, &SolverConfig { dt: 0.05, ..Default::default() }).unwrap();
        assert!(traj.completed());
        let last = traj.last();
        assert_eq!(last.t, 0.0);
        for node in 0..21 {
            let x = g.node_coords(node)[0];
            assert!((last.fields[0][node] - 1.5 * (x + 0.2)).abs() < 1e-12, "{}", last.fields[0][node]);
            assert!((last.fields[1][node] - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn burgers_tracks_characteristics_then_blows_up() {
        let p = registry_get("burgers_blowup").unwrap();
        let g = line(-1.0, 1.0, 41);
        let config = SolverConfig { dt: 1e-3, save_every: 10, ..Default::default() };
        let traj = solve(&p, 1, &g, &config).unwrap();
        assert_eq!(traj.triggered, Some(Condition::E0));
        let s_min = traj.s_min_estimate.unwrap();
        assert!((0.45..=0.55).contains(&s_min), "{s_min}");
        for snap in &traj.snapshots {
            let denom = 1.0 - (1.5 - snap.t);
            if denom >= 0.2 {
                for node in 0..41 {
                    let x = g.node_coords(node)[0];
                    let exact = x / denom;
                    assert!((snap.fields[0][node] - exact).abs() <= 1e-2 * exact.abs() + 1e-12);
                }
            }
        }
        // a higher threshold fires no earlier
        let late = solve(&p, 1, &g, &SolverConfig { thresholds: Thresholds { lip_blowup: 1e4, e0_margin: None }, ..config }).unwrap();
        assert!(late.s_min_estimate.unwrap() <= s_min);
    }

    #[test]
    fn scaling_identity_and_linear() {
        let p = registry_get("linear").unwrap();
        let g = line(-1.0, 1.0, 5);
        let s = init_terminal(&p, &g, 1).unwrap();
        let (same, g1) = scaling_transform(&s, &g, p.dims(), 1.0).unwrap();
        assert_eq!(same, s);
        assert_eq!(g1, g);
        let (half, g2) = scaling_transform(&s, &g, p.dims(), 2.0).unwrap();
        for node in 0..5 {
            let x = g2.node_coords(node)[0];
            assert!((half.fields[0][node] - x / 2.0).abs() < 1e-15);
            assert_eq!(half.fields[1][node], 0.5);
        }
    }
}
