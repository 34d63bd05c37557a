//! Tensor grids, interpolation and finite differences of node-tabulated fields.
//!
//! A field with `comp` components is stored node-major: entry `c` at node `p`
//! lives at `values[p * comp + c]`. Nodes are ordered row-major over the axes.
//! Gradients append the derivative axis last: component `c`, axis `a` maps to
//! `c * n + a`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Treatment of points outside the box.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Zero outward gradient: the value at the nearest box point.
    ClampGradient,
    /// First-order Taylor expansion from the nearest box point.
    LinearExtrapolate,
    /// Taylor expansion from the nearest box point with every derivative
    /// field supplied. The solver expands `u⁽ⁱ⁾` to order `k + 1 − i` with
    /// `u⁽ⁱ⁺¹⁾, …, u⁽ᵏ⁾` and the difference quotient of `u⁽ᵏ⁾`.
    #[default]
    Taylor,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Multilinear,
    /// Four-point Lagrange per axis.
    #[default]
    Cubic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub nodes: Vec<usize>,
    #[serde(default)]
    pub boundary: BoundaryPolicy,
    #[serde(default)]
    pub interpolation: Interpolation,
}

pub(crate) const MIN_NODES: usize = 4;

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, nodes: Vec<usize>) -> Result<Self> {
        let g = Self {
            lower,
            upper,
            nodes,
            boundary: BoundaryPolicy::default(),
            interpolation: Interpolation::default(),
        };
        g.validate()?;
        Ok(g)
    }

    /// Uniform grid on `[lower, upper]` with spacing at most `h` on every axis.
    pub fn with_spacing(lower: Vec<f64>, upper: Vec<f64>, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing {h}")));
        }
        let nodes = lower
            .iter()
            .zip(&upper)
            .map(|(lo, hi)| ((hi - lo) / h - 1e-9).ceil().max(1.0) as usize + 1)
            .collect();
        Self::new(lower, upper, nodes)
    }

    pub fn with_boundary(mut self, boundary: BoundaryPolicy) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.lower.len();
        if n == 0 || self.upper.len() != n || self.nodes.len() != n {
            return Err(Error::InvalidGrid(format!(
                "box with {} lower, {} upper bounds and {} node counts",
                n,
                self.upper.len(),
                self.nodes.len()
            )));
        }
        for a in 0..n {
            let (lo, hi) = (self.lower[a], self.upper[a]);
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidGrid(format!("axis {a}: degenerate box [{lo}, {hi}]")));
            }
            if self.nodes[a] < MIN_NODES {
                return Err(Error::InvalidGrid(format!(
                    "axis {a}: {} nodes, at least {MIN_NODES} required",
                    self.nodes[a]
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / (self.nodes[axis] - 1) as f64
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn node_index(&self, node: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        let mut rest = node;
        for a in (0..self.dim()).rev() {
            idx[a] = rest % self.nodes[a];
            rest /= self.nodes[a];
        }
        idx
    }

    pub fn node_coords(&self, node: usize) -> Vec<f64> {
        self.node_index(node)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.coordinate(a, i))
            .collect()
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.nodes[axis] {
            self.upper[axis]
        } else {
            self.lower[axis] + self.spacing(axis) * i as f64
        }
    }

    fn stride(&self, axis: usize) -> usize {
        self.nodes[axis + 1..].iter().product()
    }

    /// The grid with every coordinate multiplied by `lambda > 0`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            lower: self.lower.iter().map(|v| v * lambda).collect(),
            upper: self.upper.iter().map(|v| v * lambda).collect(),
            ..self.clone()
        }
    }

    /// Nearest point of the box.
    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(a, &v)| v.clamp(self.lower[a], self.upper[a]))
            .collect()
    }

    /// Per-axis (first node, weights) of the interpolation stencil at `x`
    /// (inside the box).
    fn stencil(&self, axis: usize, x: f64) -> (usize, [f64; 4], usize) {
        let count = self.nodes[axis];
        let s = ((x - self.lower[axis]) / self.spacing(axis)).clamp(0.0, (count - 1) as f64);
        match self.interpolation {
            Interpolation::Multilinear => {
                let j = (s.floor() as usize).min(count - 2);
                let f = s - j as f64;
                (j, [1.0 - f, f, 0.0, 0.0], 2)
            }
            Interpolation::Cubic => {
                let j = (s.floor() as usize).min(count - 2);
                let base = j.saturating_sub(1).min(count - 4);
                let t = s - base as f64;
                let w = [
                    -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0,
                    t * (t - 2.0) * (t - 3.0) / 2.0,
                    -t * (t - 1.0) * (t - 3.0) / 2.0,
                    t * (t - 1.0) * (t - 2.0) / 6.0,
                ];
                (base, w, 4)
            }
        }
    }

    /// Interpolates all `comp` components of `values` at `x` inside the box,
    /// accumulating `scale ×` the result into `out`.
    pub fn interpolate_into(&self, values: &[f64], comp: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let n = self.dim();
        let stencils: Vec<_> = (0..n).map(|a| self.stencil(a, x[a])).collect();
        let width = stencils[0].2;
        let combos = width.pow(n as u32);
        for combo in 0..combos {
            let mut rest = combo;
            let mut weight = scale;
            let mut node = 0;
            for a in (0..n).rev() {
                let o = rest % width;
                rest /= width;
                let (base, w, _) = &stencils[a];
                weight *= w[o];
                node += (base + o) * self.stride(a);
            }
            if weight == 0.0 {
                continue;
            }
            let src = &values[node * comp..(node + 1) * comp];
            for (acc, v) in out.iter_mut().zip(src) {
                *acc += weight * v;
            }
        }
    }

    pub fn interpolate(&self, values: &[f64], comp: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; comp];
        self.interpolate_into(values, comp, &self.clamp(x), 1.0, &mut out);
        out
    }

    /// Interpolation with out-of-box handling per the boundary policy.
    /// `gradient` and `hessian` hold the first and second derivative fields
    /// (`comp·n` and `comp·n²` components) used for extrapolation.
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate(
        &self,
        values: &[f64],
        gradient: &[f64],
        hessian: &[f64],
        comp: usize,
        x: &[f64],
        scale: f64,
        out: &mut [f64],
    ) {
        self.evaluate_taylor(values, &[gradient, hessian], comp, x, scale, out);
    }

    /// Like [`Self::evaluate`] with any number of derivative fields:
    /// `derivatives[j − 1]` holds `D^j` with `comp·nʲ` components per node.
    /// `LinearExtrapolate` uses the first one only, `Taylor` all of them.
    pub fn evaluate_taylor(
        &self,
        values: &[f64],
        derivatives: &[&[f64]],
        comp: usize,
        x: &[f64],
        scale: f64,
        out: &mut [f64],
    ) {
        let n = self.dim();
        let b = self.clamp(x);
        self.interpolate_into(values, comp, &b, scale, out);
        let delta: Vec<f64> = x.iter().zip(&b).map(|(p, q)| p - q).collect();
        let orders = match self.boundary {
            BoundaryPolicy::ClampGradient => 0,
            BoundaryPolicy::LinearExtrapolate => 1,
            BoundaryPolicy::Taylor => derivatives.len(),
        };
        if orders == 0 || delta.iter().all(|&v| v == 0.0) {
            return;
        }
        let mut factorial = 1.0;
        let mut width = comp;
        for (j, field) in derivatives.iter().take(orders).enumerate() {
            width *= n;
            factorial *= (j + 1) as f64;
            if field.is_empty() {
                break;
            }
            let mut term = vec![0.0; width];
            self.interpolate_into(field, width, &b, 1.0, &mut term);
            // contract the trailing derivative axes with δ one at a time
            for _ in 0..=j {
                term = term.chunks(n).map(|c| c.iter().zip(&delta).map(|(v, d)| v * d).sum()).collect();
            }
            for (o, t) in out.iter_mut().zip(&term) {
                *o += scale * t / factorial;
            }
        }
    }

    /// Finite-difference gradient of a tabulated field: central differences in
    /// the interior, second-order one-sided differences on the boundary.
    pub fn gradient(&self, values: &[f64], comp: usize) -> Vec<f64> {
        let n = self.dim();
        let nodes = self.node_count();
        let mut out = vec![0.0; nodes * comp * n];
        for node in 0..nodes {
            let idx = self.node_index(node);
            for a in 0..n {
                let h = self.spacing(a);
                let s = self.stride(a);
                let i = idx[a];
                let last = self.nodes[a] - 1;
                let at = |p: usize, c: usize| values[p * comp + c];
                for c in 0..comp {
                    let d = if i == 0 {
                        (-3.0 * at(node, c) + 4.0 * at(node + s, c) - at(node + 2 * s, c)) / (2.0 * h)
                    } else if i == last {
                        (3.0 * at(node, c) - 4.0 * at(node - s, c) + at(node - 2 * s, c)) / (2.0 * h)
                    } else {
                        (at(node + s, c) - at(node - s, c)) / (2.0 * h)
                    };
                    out[(node * comp + c) * n + a] = d;
                }
            }
        }
        out
    }

    /// Largest Frobenius norm, over grid cells, of the forward-difference
    /// gradient of a tabulated field.
    pub fn lipschitz_estimate(&self, values: &[f64], comp: usize) -> f64 {
        let n = self.dim();
        let mut best = 0.0f64;
        for node in 0..self.node_count() {
            let idx = self.node_index(node);
            if (0..n).any(|a| idx[a] + 1 == self.nodes[a]) {
                continue;
            }
            let mut sq = 0.0;
            for a in 0..n {
                let s = self.stride(a);
                let h = self.spacing(a);
                for c in 0..comp {
                    let q = (values[(node + s) * comp + c] - values[node * comp + c]) / h;
                    sq += q * q;
                }
            }
            let v = sq.sqrt();
            if !v.is_finite() {
                return f64::INFINITY;
            }
            best = best.max(v);
        }
        best
    }
}
