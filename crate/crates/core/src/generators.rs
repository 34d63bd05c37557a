//! The generators `h⁽ᵏ⁾` and `φ⁽ᵏ⁾` of the derivative BSDE hierarchy.
//!
//! Two independent routes are provided:
//!
//! * [`eval_h1`], [`eval_phi1`], [`eval_hk`] assemble the first-order formulas
//!   from a [`DerivativeBundle`](crate::model::DerivativeBundle) with explicit
//!   generalized-matrix products;
//! * [`eval_phik`] runs the recursion
//!
//! ```text
//! φ⁽ᵏ⁾(θ_k) = φ⁽ᵏ⁻¹⁾_x + Σᵢ (φ⁽ᵏ⁻¹⁾_{y⁽ⁱ⁾}·y⁽ⁱ⁺¹⁾ + φ⁽ᵏ⁻¹⁾_{z⁽ⁱ⁾}·h⁽ⁱ⁺¹⁾)
//!              − y⁽ᵏ⁾·(μ_x + μ_y y⁽¹⁾ + μ_z h⁽¹⁾) − Σ_j z⁽ᵏ'ʲ⁾·(σ⁽ʲ⁾_x + σ⁽ʲ⁾_y y⁽¹⁾ + σ⁽ʲ⁾_z h⁽¹⁾)
//! ```
//!
//! with `φ⁽⁰⁾ = f`. Column `l` of the derivative terms is the directional
//! derivative of `φ⁽ᵏ⁻¹⁾` along `(e_l, y⁽ⁱ⁺¹⁾[…,l], h⁽ⁱ⁺¹⁾[…,l])`, taken
//! exactly by opening one more [`Jet`] direction per level.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::model::{evaluate_coefficients, Arg, Coefficient, Dims, FbsdeProblem};
use crate::tensor::{neumann_inverse_apply, GeneralizedMatrix, Shape};

/// Residual tolerance of the `(Id − y⁽¹⁾σ_z)` solve.
pub const INVERSE_TOL: f64 = 1e-10;

/// `θ_k = (t, x, y⁽⁰⁾, z⁽⁰⁾, …, y⁽ᵏ⁾, z⁽ᵏ⁾)` with `y⁽ⁱ⁾ ∈ ℝ^{m ×ᵢ n}` and
/// `z⁽ⁱ⁾ ∈ ℝ^{(m×d) ×ᵢ n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaPoint {
    t: f64,
    x: Vec<f64>,
    y: Vec<GeneralizedMatrix>,
    z: Vec<GeneralizedMatrix>,
}

impl ThetaPoint {
    /// Checks shapes against the problem dimensions and, when `L_{σ,z} > 0`,
    /// that `‖y⁽¹⁾‖_op < L_{σ,z}^{-1}`.
    pub fn new(
        problem: &FbsdeProblem,
        t: f64,
        x: Vec<f64>,
        y: Vec<GeneralizedMatrix>,
        z: Vec<GeneralizedMatrix>,
    ) -> Result<Self> {
        let dims = problem.dims();
        if y.is_empty() || y.len() != z.len() {
            return Err(Error::InvalidShape(format!(
                "theta needs matching y and z levels, got {} and {}",
                y.len(),
                z.len()
            )));
        }
        if x.len() != dims.n || !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidShape(format!("x of length {} for n = {}", x.len(), dims.n)));
        }
        for (i, (yi, zi)) in y.iter().zip(&z).enumerate() {
            if yi.dims() != dims.y_shape(i).dims() {
                return Err(Error::ShapeMismatch(format!("y^({i}) has shape {:?}", yi.dims())));
            }
            if zi.dims() != dims.z_shape(i).dims() {
                return Err(Error::ShapeMismatch(format!("z^({i}) has shape {:?}", zi.dims())));
            }
        }
        let theta = Self { t, x, y, z };
        if theta.level() >= 1 && problem.lip_sigma_z() > 0.0 {
            let q = theta.y[1].operator_norm(1)? * problem.lip_sigma_z();
            if q >= 1.0 {
                return Err(Error::Singular { norm: q });
            }
        }
        Ok(theta)
    }

    /// Random point of `Θ_level` with entries uniform in `[-spread, spread]`;
    /// `y⁽¹⁾` is shrunk if needed so that `‖y⁽¹⁾‖_F L_{σ,z} ≤ 1/2`.
    pub fn sample(problem: &FbsdeProblem, level: usize, spread: f64, rng: &mut impl Rng) -> Self {
        let dims = problem.dims();
        let mut draw = |shape: Shape| {
            let values = (0..shape.len()).map(|_| rng.random_range(-spread..=spread)).collect();
            GeneralizedMatrix::from_vec(shape, values).expect("finite samples")
        };
        let y: Vec<_> = (0..=level).map(|i| draw(dims.y_shape(i))).collect();
        let z: Vec<_> = (0..=level).map(|i| draw(dims.z_shape(i))).collect();
        let x = draw(Shape::new([dims.n]).expect("n ≥ 1")).into_values();
        let t = rng.random_range(0.0..=problem.horizon());
        let mut theta = Self { t, x, y, z };
        let lip = problem.lip_sigma_z();
        if level >= 1 && lip > 0.0 {
            let norm = theta.y[1].frobenius_norm();
            if norm * lip > 0.5 {
                theta.y[1] = theta.y[1].scale(0.5 / (norm * lip));
            }
        }
        theta
    }

    pub fn level(&self) -> usize {
        self.y.len() - 1
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self, i: usize) -> &GeneralizedMatrix {
        &self.y[i]
    }

    pub fn z(&self, i: usize) -> &GeneralizedMatrix {
        &self.z[i]
    }

    /// `θ_level`, the leading part of this point.
    pub fn truncate(&self, level: usize) -> Self {
        Self {
            t: self.t,
            x: self.x.clone(),
            y: self.y[..=level].to_vec(),
            z: self.z[..=level].to_vec(),
        }
    }

    pub fn set_y(&mut self, i: usize, value: GeneralizedMatrix) -> Result<()> {
        if value.dims() != self.y[i].dims() {
            return Err(Error::ShapeMismatch(format!("y^({i}) replaced by {:?}", value.dims())));
        }
        self.y[i] = value;
        Ok(())
    }

    pub fn set_z(&mut self, i: usize, value: GeneralizedMatrix) -> Result<()> {
        if value.dims() != self.z[i].dims() {
            return Err(Error::ShapeMismatch(format!("z^({i}) replaced by {:?}", value.dims())));
        }
        self.z[i] = value;
        Ok(())
    }
}

/// `h⁽¹⁾, …, h⁽ᵏ⁾` and `φ⁽⁰⁾, …, φ⁽ᵏ⁾` at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorValue {
    pub h: Vec<GeneralizedMatrix>,
    pub phi: Vec<GeneralizedMatrix>,
}

fn need_level(theta: &ThetaPoint, k: usize) -> Result<()> {
    if theta.level() < k {
        return Err(Error::InvalidArgument(format!(
            "generator of order {k} needs theta of level ≥ {k}, got {}",
            theta.level()
        )));
    }
    Ok(())
}

fn need_order(problem: &FbsdeProblem, k: usize) -> Result<()> {
    if k > problem.k_max() {
        return Err(Error::OrderExceeded {
            requested: k,
            supported: problem.k_max(),
        });
    }
    Ok(())
}

fn finite(g: GeneralizedMatrix, what: &str) -> Result<GeneralizedMatrix> {
    if g.values().iter().all(|v| v.is_finite()) {
        Ok(g)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

// ---------------------------------------------------------------------------
// first-order formulas from the derivative bundle

struct FirstOrder {
    h1: GeneralizedMatrix,
    /// `σ_x + σ_y y⁽¹⁾ + σ_z h⁽¹⁾ ∈ ℝ^{n×d×n}`
    b: GeneralizedMatrix,
    /// `μ_x + μ_y y⁽¹⁾ + μ_z h⁽¹⁾ ∈ ℝ^{n×n}`
    alpha: GeneralizedMatrix,
    /// `f_x + f_y y⁽¹⁾ + f_z h⁽¹⁾ ∈ ℝ^{m×n}`
    f_total: GeneralizedMatrix,
}

fn first_order(problem: &FbsdeProblem, theta: &ThetaPoint) -> Result<FirstOrder> {
    need_level(theta, 1)?;
    need_order(problem, 1)?;
    let Dims { m, d, .. } = problem.dims();
    let bundle = evaluate_coefficients(
        problem,
        theta.t,
        &theta.x,
        theta.y[0].values(),
        theta.z[0].values(),
        1,
    )?;
    let (y1, z1) = (&theta.y[1], &theta.z[1]);
    let part = |which: Coefficient, arg: Arg| bundle.get(which).partial(&[arg]).expect("order-1 bundle");
    let sx = part(Coefficient::Diffusion, Arg::X);
    let sy = part(Coefficient::Diffusion, Arg::Y);
    let sz = part(Coefficient::Diffusion, Arg::Z);

    let vsz = y1.product(sz)?;
    let numerator = y1.product(sx)?.add(&y1.product(sy)?.product(y1)?)?.add(z1)?;
    let h1 = neumann_inverse_apply(&vsz, &numerator, INVERSE_TOL)?;

    let total = |which: Coefficient| -> Result<GeneralizedMatrix> {
        part(which, Arg::X)
            .add(&part(which, Arg::Y).product(y1)?)?
            .add(&part(which, Arg::Z).md_contract(&h1, m, d)?)
    };
    Ok(FirstOrder {
        b: total(Coefficient::Diffusion)?,
        alpha: total(Coefficient::Drift)?,
        f_total: total(Coefficient::Driver)?,
        h1,
    })
}

/// `Σ_j z⁽ᵏ'ʲ⁾ · B⁽ʲ⁾` for `z⁽ᵏ⁾ ∈ ℝ^{(m×d)×ₖn}` and `B ∈ ℝ^{n×d×n}`.
fn z_times_b(zk: &GeneralizedMatrix, b: &GeneralizedMatrix, dims: Dims) -> GeneralizedMatrix {
    let Dims { n, m, d } = dims;
    let inner = zk.values().len() / (m * d * n);
    let mut out = vec![0.0; m * inner * n];
    for a in 0..m {
        for j in 0..d {
            for r in 0..inner {
                for c in 0..n {
                    let zv = zk.values()[((a * d + j) * inner + r) * n + c];
                    for l in 0..n {
                        out[(a * inner + r) * n + l] += zv * b.values()[(c * d + j) * n + l];
                    }
                }
            }
        }
    }
    let mut shape = vec![m];
    shape.extend(&zk.dims()[2..]);
    GeneralizedMatrix::from_vec(Shape::new(shape).expect("positive"), out).expect("finite")
}

/// `h⁽ᵏ'ʲ⁾ = z⁽ᵏ'ʲ⁾ + y⁽ᵏ⁾ · B⁽ʲ⁾`, stored as `ℝ^{(m×d)×ₖn}`.
fn hk_from_b(yk: &GeneralizedMatrix, zk: &GeneralizedMatrix, b: &GeneralizedMatrix, dims: Dims) -> GeneralizedMatrix {
    let Dims { n, m, d } = dims;
    let inner = yk.values().len() / (m * n);
    let mut out = zk.clone();
    let vals = out.values_mut();
    for a in 0..m {
        for j in 0..d {
            for r in 0..inner {
                for l in 0..n {
                    let mut acc = 0.0;
                    for c in 0..n {
                        acc += yk.values()[(a * inner + r) * n + c] * b.values()[(c * d + j) * n + l];
                    }
                    vals[((a * d + j) * inner + r) * n + l] += acc;
                }
            }
        }
    }
    out
}

/// `h⁽¹⁾(θ₁) = (Id − y⁽¹⁾σ_z)^{-1}(y⁽¹⁾σ_x + y⁽¹⁾σ_y y⁽¹⁾ + z⁽¹⁾)`.
pub fn eval_h1(problem: &FbsdeProblem, theta: &ThetaPoint) -> Result<GeneralizedMatrix> {
    let h1 = first_order(problem, theta)?.h1.reshape(problem.dims().z_shape(1))?;
    finite(h1, "h^(1)")
}

/// `φ⁽¹⁾(θ₁)` from first-order coefficient derivatives.
pub fn eval_phi1(problem: &FbsdeProblem, theta: &ThetaPoint) -> Result<GeneralizedMatrix> {
    let fo = first_order(problem, theta)?;
    let y1 = &theta.y[1];
    let phi = fo
        .f_total
        .sub(&y1.product(&fo.alpha)?)?
        .sub(&z_times_b(&theta.z[1], &fo.b, problem.dims()))?;
    finite(phi, "phi^(1)")
}

/// `h⁽ᵏ⁾(θ_k)` for `k ≥ 2`.
pub fn eval_hk(problem: &FbsdeProblem, theta: &ThetaPoint, k: usize) -> Result<GeneralizedMatrix> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("eval_hk needs k ≥ 2, got {k}")));
    }
    need_level(theta, k)?;
    let fo = first_order(problem, theta)?;
    finite(hk_from_b(&theta.y[k], &theta.z[k], &fo.b, problem.dims()), "h^(k)")
}

// ---------------------------------------------------------------------------
// the recursion on jets

#[derive(Clone)]
struct JetTheta {
    t: f64,
    x: Vec<Jet>,
    y: Vec<Vec<Jet>>,
    z: Vec<Vec<Jet>>,
}

impl JetTheta {
    fn lift(theta: &ThetaPoint) -> Self {
        let lift = |v: &[f64]| v.iter().map(|&a| Jet::constant(a)).collect::<Vec<_>>();
        Self {
            t: theta.t,
            x: lift(&theta.x),
            y: theta.y.iter().map(|g| lift(g.values())).collect(),
            z: theta.z.iter().map(|g| lift(g.values())).collect(),
        }
    }
}

/// Per-point first-order quantities on jets.
struct Local {
    /// `[m, d, n]`
    h1: Vec<Jet>,
    /// `[n, n]`
    alpha: Vec<Jet>,
    /// `[n, d, n]`
    beta: Vec<Jet>,
}

fn unit(len: usize, at: usize) -> Vec<Jet> {
    let mut v = vec![Jet::constant(0.0); len];
    v[at] = Jet::constant(1.0);
    v
}

fn local(problem: &FbsdeProblem, th: &JetTheta, p: usize) -> Result<Local> {
    let Dims { n, m, d } = problem.dims();
    let md = m * d;
    let zero = Jet::constant(0.0);
    let base = (th.x.as_slice(), th.y[0].as_slice(), th.z[0].as_slice());
    let (y1, z1) = (&th.y[1], &th.z[1]);

    // σ does not depend on z when L_{σ,z} = 0: y⁽¹⁾σ_z vanishes, h⁽¹⁾ is the
    // numerator itself and Dσ along (e_l, y⁽¹⁾e_l, ·) is shared with β.
    let z_free = problem.lip_sigma_z() == 0.0;
    let mut x_sigma: Vec<Vec<Jet>> = Vec::with_capacity(n);
    let mut numerator = vec![zero; md * n];
    for l in 0..n {
        let ex = unit(n, l);
        let dy: Vec<Jet> = (0..m).map(|a| y1[a * n + l]).collect();
        let ds = problem.directional(Coefficient::Diffusion, th.t, base, (Some(&ex), Some(&dy), None), p);
        for a in 0..m {
            for j in 0..d {
                let mut acc = z1[(a * d + j) * n + l];
                for c in 0..n {
                    acc += y1[a * n + c] * ds[c * d + j];
                }
                numerator[(a * d + j) * n + l] = acc;
            }
        }
        x_sigma.push(ds);
    }
    let h1 = if z_free {
        numerator
    } else {
        // y⁽¹⁾σ_z as an operator on ℝ^{m×d}
        let mut vsz = vec![zero; md * md];
        for q in 0..md {
            let dz = unit(md, q);
            let ds = problem.directional(Coefficient::Diffusion, th.t, base, (None, None, Some(&dz)), p);
            for a in 0..m {
                for j in 0..d {
                    let mut acc = zero;
                    for c in 0..n {
                        acc += y1[a * n + c] * ds[c * d + j];
                    }
                    vsz[(a * d + j) * md + q] = acc;
                }
            }
        }
        let dims = problem.dims();
        let op_shape = Shape::new([m, d, m, d])?
            .with_md_pair(0, m, d)?
            .with_md_pair(2, m, d)?;
        neumann_inverse_apply(
            &GeneralizedMatrix::from_raw(op_shape, vsz),
            &GeneralizedMatrix::from_raw(dims.z_shape(1), numerator),
            INVERSE_TOL,
        )?
        .into_values()
    };

    let mut alpha = vec![zero; n * n];
    let mut beta = vec![zero; n * d * n];
    for (l, ds_x) in x_sigma.into_iter().enumerate() {
        let ex = unit(n, l);
        let dy: Vec<Jet> = (0..m).map(|a| y1[a * n + l]).collect();
        let dz: Vec<Jet> = (0..md).map(|q| h1[q * n + l]).collect();
        let dirs = (Some(ex.as_slice()), Some(dy.as_slice()), Some(dz.as_slice()));
        let dmu = problem.directional(Coefficient::Drift, th.t, base, dirs, p);
        let ds = if z_free {
            ds_x
        } else {
            problem.directional(Coefficient::Diffusion, th.t, base, dirs, p)
        };
        for c in 0..n {
            alpha[c * n + l] = dmu[c];
            for j in 0..d {
                beta[(c * d + j) * n + l] = ds[c * d + j];
            }
        }
    }
    Ok(Local { h1, alpha, beta })
}

/// `h⁽ⁱ⁾` for `i = 1..=k` (index 0 unused).
fn h_levels(dims: Dims, th: &JetTheta, loc: &Local, k: usize) -> Vec<Vec<Jet>> {
    let Dims { n, m, d } = dims;
    let mut hs = vec![Vec::new(), loc.h1.clone()];
    for i in 2..=k {
        let inner = n.pow(i as u32 - 1);
        let (yi, zi) = (&th.y[i], &th.z[i]);
        let mut h = zi.clone();
        for a in 0..m {
            for j in 0..d {
                for r in 0..inner {
                    for l in 0..n {
                        let mut acc = Jet::constant(0.0);
                        for c in 0..n {
                            acc += yi[(a * inner + r) * n + c] * loc.beta[(c * d + j) * n + l];
                        }
                        h[((a * d + j) * inner + r) * n + l] += acc;
                    }
                }
            }
        }
        hs.push(h);
    }
    hs
}

/// `φ⁽ᵏ⁾` on jets whose open directions are all below `p`.
fn phi_rec(problem: &FbsdeProblem, th: &JetTheta, k: usize, p: usize) -> Result<Vec<Jet>> {
    if k == 0 {
        return Ok(problem.eval_jet(Coefficient::Driver, th.t, &th.x, &th.y[0], &th.z[0]));
    }
    let dims = problem.dims();
    let Dims { n, m, d } = dims;
    let loc = local(problem, th, p)?;
    let hs = h_levels(dims, th, &loc, k);
    let inner = n.pow(k as u32 - 1);
    let mut out = vec![Jet::constant(0.0); m * inner * n];

    for l in 0..n {
        let mut x = th.x.clone();
        x[l] = x[l].with_tangent(&Jet::constant(1.0), p);
        let shift = |base: &[Jet], next: &[Jet]| -> Vec<Jet> {
            base.iter()
                .enumerate()
                .map(|(idx, b)| b.with_tangent(&next[idx * n + l], p))
                .collect()
        };
        let moved = JetTheta {
            t: th.t,
            x,
            y: (0..k).map(|i| shift(&th.y[i], &th.y[i + 1])).collect(),
            z: (0..k).map(|i| shift(&th.z[i], &hs[i + 1])).collect(),
        };
        let v = phi_rec(problem, &moved, k - 1, p + 1)?;
        for (idx, val) in v.iter().enumerate() {
            out[idx * n + l] = val.tangent(p);
        }
    }

    let (yk, zk) = (&th.y[k], &th.z[k]);
    for a in 0..m {
        for r in 0..inner {
            for l in 0..n {
                let mut acc = Jet::constant(0.0);
                for c in 0..n {
                    acc += yk[(a * inner + r) * n + c] * loc.alpha[c * n + l];
                    for j in 0..d {
                        acc += zk[((a * d + j) * inner + r) * n + c] * loc.beta[(c * d + j) * n + l];
                    }
                }
                out[(a * inner + r) * n + l] -= acc;
            }
        }
    }
    Ok(out)
}

fn to_gm(values: &[Jet], shape: Shape, what: &str) -> Result<GeneralizedMatrix> {
    GeneralizedMatrix::from_vec(shape, values.iter().map(Jet::value).collect())
        .map_err(|_| Error::NonFinite(what.to_string()))
}

/// `φ⁽ᵏ⁾(θ_k)` by the recursion, with exact derivative applications.
pub fn eval_phik(problem: &FbsdeProblem, theta: &ThetaPoint, k: usize) -> Result<GeneralizedMatrix> {
    need_order(problem, k)?;
    need_level(theta, k)?;
    let th = JetTheta::lift(&theta.truncate(k));
    let v = phi_rec(problem, &th, k, 0)?;
    to_gm(&v, problem.dims().y_shape(k), "phi^(k)")
}

/// All of `h⁽¹..ᵏ⁾(θ_k)` and `φ⁽⁰..ᵏ⁾(θ_i)` at once, `k = θ.level()`.
pub fn eval_generators(problem: &FbsdeProblem, theta: &ThetaPoint) -> Result<GeneratorValue> {
    let k = theta.level();
    let dims = problem.dims();
    let phi = eval_phi_levels(problem, theta)?;
    let th = JetTheta::lift(theta);
    let mut h = Vec::with_capacity(k);
    if k >= 1 {
        let loc = local(problem, &th, 0)?;
        for (i, hi) in h_levels(dims, &th, &loc, k).iter().enumerate().skip(1) {
            h.push(to_gm(hi, dims.z_shape(i), "h")?);
        }
    }
    Ok(GeneratorValue { h, phi })
}

/// `φ⁽⁰⁾(θ₀), …, φ⁽ᵏ⁾(θ_k)` without the auxiliary `h`.
pub(crate) fn eval_phi_levels(problem: &FbsdeProblem, theta: &ThetaPoint) -> Result<Vec<GeneralizedMatrix>> {
    let k = theta.level();
    need_order(problem, k)?;
    let dims = problem.dims();
    let th = JetTheta::lift(theta);
    let mut phi = Vec::with_capacity(k + 1);
    // phi_rec(i) reads levels 0..=i only
    for i in 0..=k {
        phi.push(to_gm(&phi_rec(problem, &th, i, 0)?, dims.y_shape(i), "phi")?);
    }
    Ok(phi)
}

/// Which block of `θ_k` a perturbation or derivative refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThetaBlock {
    X,
    Y(usize),
    Z(usize),
}

/// `d/dε φ⁽ᵏ⁾(θ + ε v)` at `ε = 0`, where `v` is zero except for `direction`
/// in `block`.
pub fn phik_directional(
    problem: &FbsdeProblem,
    theta: &ThetaPoint,
    k: usize,
    block: ThetaBlock,
    direction: &[f64],
) -> Result<GeneralizedMatrix> {
    need_order(problem, k)?;
    need_level(theta, k)?;
    let mut th = JetTheta::lift(&theta.truncate(k));
    let target = match block {
        ThetaBlock::X => &mut th.x,
        ThetaBlock::Y(i) if i <= k => &mut th.y[i],
        ThetaBlock::Z(i) if i <= k => &mut th.z[i],
        other => {
            return Err(Error::InvalidArgument(format!("{other:?} is not part of theta_{k}")));
        }
    };
    if target.len() != direction.len() {
        return Err(Error::ShapeMismatch(format!(
            "direction of length {} for a block of length {}",
            direction.len(),
            target.len()
        )));
    }
    for (v, &dv) in target.iter_mut().zip(direction) {
        *v = v.with_tangent(&Jet::constant(dv), 0);
    }
    let out = phi_rec(problem, &th, k, 1)?;
    let tangents: Vec<Jet> = out.iter().map(|v| v.tangent(0)).collect();
    to_gm(&tangents, problem.dims().y_shape(k), "d phi^(k)")
}

/// Jacobian of `φ⁽ᵏ⁾` with respect to one block, `[len(φ⁽ᵏ⁾)] × [len(block)]`
/// row-major.
fn jacobian(problem: &FbsdeProblem, theta: &ThetaPoint, k: usize, block: ThetaBlock) -> Result<Vec<f64>> {
    let len = match block {
        ThetaBlock::X => theta.x.len(),
        ThetaBlock::Y(i) => theta.y[i].values().len(),
        ThetaBlock::Z(i) => theta.z[i].values().len(),
    };
    let rows = problem.dims().y_len(k);
    let mut jac = vec![0.0; rows * len];
    for q in 0..len {
        let mut e = vec![0.0; len];
        e[q] = 1.0;
        let col = phik_directional(problem, theta, k, block, &e)?;
        for (r, v) in col.values().iter().enumerate() {
            jac[r * len + q] = *v;
        }
    }
    Ok(jac)
}

/// Result of [`check_structural_dependence`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuralReport {
    pub k: usize,
    pub trials: usize,
    /// Max change of `∂φ⁽ᵏ⁾/∂z⁽ᵏ⁾` when everything outside `θ₁` (outside
    /// `(t, x, y⁽⁰⁾, z⁽⁰⁾, y⁽¹⁾)` when `L_{σ,z} = 0`) is perturbed.
    pub z_top_deviation: f64,
    /// Max change of `∂φ⁽ᵏ⁾/∂z⁽ᵏ⁻¹⁾` when `z⁽ᵏ⁾` is perturbed; checked for
    /// `k ≥ 3`, or `k ≥ 2` when `L_{σ,z} = 0`.
    pub z_below_deviation: Option<f64>,
    /// Evaluations that failed (e.g. a singular `Id − y⁽¹⁾σ_z`), skipped.
    pub failed_trials: usize,
}

impl StructuralReport {
    pub fn max_deviation(&self) -> f64 {
        self.z_top_deviation.max(self.z_below_deviation.unwrap_or(0.0))
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (p, q)| m.max((p - q).abs()))
}

/// Numerically verifies the structural dependence of `φ⁽ᵏ⁾` on `θ_k`:
/// the coefficient of `z⁽ᵏ⁾` depends on `θ₁` only, and the coefficient of
/// `z⁽ᵏ⁻¹⁾` does not depend on `z⁽ᵏ⁾`.
pub fn check_structural_dependence(
    problem: &FbsdeProblem,
    k: usize,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<StructuralReport> {
    if k == 0 {
        return Err(Error::InvalidArgument("structural check needs k ≥ 1".into()));
    }
    need_order(problem, k)?;
    let zero_lip = problem.lip_sigma_z() == 0.0;
    let check_below = k >= 3 || (k >= 2 && zero_lip);
    let mut report = StructuralReport {
        k,
        trials,
        z_top_deviation: 0.0,
        z_below_deviation: check_below.then_some(0.0),
        failed_trials: 0,
    };
    let dims = problem.dims();
    for _ in 0..trials {
        let theta = ThetaPoint::sample(problem, k, 1.0, rng);
        let fresh = ThetaPoint::sample(problem, k, 1.0, rng);

        let mut moved = theta.clone();
        for i in 2..=k {
            moved.y[i] = fresh.y[i].clone();
            moved.z[i] = fresh.z[i].clone();
        }
        if zero_lip {
            moved.z[1] = fresh.z[1].clone();
        }
        let top = jacobian(problem, &theta, k, ThetaBlock::Z(k))
            .and_then(|a| Ok((a, jacobian(problem, &moved, k, ThetaBlock::Z(k))?)));
        match top {
            Ok((a, b)) => report.z_top_deviation = report.z_top_deviation.max(max_diff(&a, &b)),
            Err(_) => report.failed_trials += 1,
        }

        if check_below {
            let mut moved = theta.clone();
            moved.z[k] = fresh.z[k].clone();
            debug_assert_eq!(moved.z[k].values().len(), dims.z_len(k));
            let below = jacobian(problem, &theta, k, ThetaBlock::Z(k - 1))
                .and_then(|a| Ok((a, jacobian(problem, &moved, k, ThetaBlock::Z(k - 1))?)));
            match below {
                Ok((a, b)) => {
                    let dev = report.z_below_deviation.get_or_insert(0.0);
                    *dev = dev.max(max_diff(&a, &b));
                }
                Err(_) => report.failed_trials += 1,
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::model::{registry_get, registry_get_with, ProblemParams};

    fn gm(dims: &[usize], values: Vec<f64>) -> GeneralizedMatrix {
        GeneralizedMatrix::from_vec(Shape::new(dims.to_vec()).unwrap(), values).unwrap()
    }

    fn scalar_theta(problem: &FbsdeProblem, y: &[f64], z: &[f64]) -> ThetaPoint {
        ThetaPoint::new(
            problem,
            0.2,
            vec![0.3],
            y.iter().map(|&v| gm(&[1], vec![v])).enumerate().map(|(i, g)| {
                g.reshape(problem.dims().y_shape(i)).unwrap()
            }).collect(),
            z.iter().enumerate().map(|(i, &v)| gm(&[1], vec![v]).reshape(problem.dims().z_shape(i)).unwrap()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_sigma_gives_h_equal_z() {
        let p = registry_get("skorokhod").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let th = ThetaPoint::sample(&p, 3, 1.0, &mut rng);
        assert_eq!(eval_h1(&p, &th).unwrap(), th.z(1).clone());
        assert!(eval_hk(&p, &th, 2).unwrap().sub(th.z(2)).unwrap().max_abs() == 0.0);
        let g = eval_generators(&p, &th).unwrap();
        for (i, h) in g.h.iter().enumerate() {
            assert_eq!(h.values(), th.z(i + 1).values());
        }
    }

    #[test]
    fn half_z_volatility_scalar_h1() {
        let p = registry_get_with("z_coupled", &ProblemParams { offset: Some(1.0), ..Default::default() }).unwrap();
        let th = scalar_theta(&p, &[0.0, 0.4], &[0.5, 1.0]);
        let h1 = eval_h1(&p, &th).unwrap();
        assert!((h1.values()[0] - 1.25).abs() < 1e-14);
        let g = eval_generators(&p, &th).unwrap();
        assert!((g.h[0].values()[0] - 1.25).abs() < 1e-14);
    }

    #[test]
    fn scalar_hk_by_hand() {
        // σ = x + y²/2 + z/2: σ_x = 1, σ_y = y, σ_z = 1/2
        #[derive(Debug)]
        struct Mixed;
        impl crate::model::Coefficients for Mixed {
            fn drift(&self, _t: f64, _x: &[Jet], _y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
                vec![Jet::constant(0.0)]
            }
            fn diffusion(&self, _t: f64, x: &[Jet], y: &[Jet], z: &[Jet]) -> Vec<Jet> {
                vec![x[0] + y[0] * y[0] * 0.5 + z[0] * 0.5]
            }
            fn driver(&self, _t: f64, _x: &[Jet], _y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
                vec![Jet::constant(0.0)]
            }
            fn terminal(&self, x: &[Jet]) -> Vec<Jet> {
                vec![x[0]]
            }
        }
        let p = FbsdeProblem::new("mixed", Dims::new(1, 1, 1), 1.0, 3, 0.5, std::sync::Arc::new(Mixed)).unwrap();
        let (y0, y1, y2, z1, z2) = (0.7, 0.4, -0.3, 1.1, 0.25);
        let th = scalar_theta(&p, &[y0, y1, y2], &[0.2, z1, z2]);
        let h1 = (y1 * 1.0 + y1 * y0 * y1 + z1) / (1.0 - y1 * 0.5);
        let h2 = z2 + y2 * (1.0 + y0 * y1 + 0.5 * h1);
        assert!((eval_h1(&p, &th).unwrap().values()[0] - h1).abs() < 1e-14);
        assert!((eval_hk(&p, &th, 2).unwrap().values()[0] - h2).abs() < 1e-14);
        let g = eval_generators(&p, &th).unwrap();
        assert!((g.h[1].values()[0] - h2).abs() < 1e-14);
    }

    #[test]
    fn skorokhod_closed_forms() {
        let p = registry_get("skorokhod").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let th = ThetaPoint::sample(&p, 2, 1.5, &mut rng);
            let (y1, y2) = (th.y(1).values(), th.y(2).values());
            let (z0, z1, z2) = (th.z(0).values()[0], th.z(1).values(), th.z(2).values());
            let phi1 = eval_phi1(&p, &th).unwrap();
            let phik1 = eval_phik(&p, &th, 1).unwrap();
            for a in 0..2 {
                let expect = -2.0 * y1[1] * z0 * z1[a];
                assert!((phi1.values()[a] - expect).abs() < 1e-12);
                assert!((phik1.values()[a] - expect).abs() < 1e-12);
            }
            let phi2 = eval_phik(&p, &th, 2).unwrap();
            for a in 0..2 {
                for l in 0..2 {
                    let expect = -2.0 * y1[1] * z1[l] * z1[a]
                        - 2.0 * y2[2 + l] * z0 * z1[a]
                        - 2.0 * y1[1] * z0 * z2[a * 2 + l]
                        - 2.0 * y2[a * 2 + 1] * z0 * z1[l];
                    let got = phi2.values()[a * 2 + l];
                    assert!((got - expect).abs() < 1e-12, "{a}{l}: {got} vs {expect}");
                }
            }
        }
    }

    #[test]
    fn linear_problem_has_vanishing_generators() {
        let p = registry_get_with("linear", &ProblemParams { drift: Some(0.3), volatility: Some(0.7), ..Default::default() }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let th = ThetaPoint::sample(&p, 3, 1.0, &mut rng);
        let g = eval_generators(&p, &th).unwrap();
        for phi in &g.phi {
            assert_eq!(phi.max_abs(), 0.0);
        }
        let r = check_structural_dependence(&p, 3, 3, &mut rng).unwrap();
        assert_eq!(r.max_deviation(), 0.0);
    }

    #[test]
    fn heat_phi1_vanishes_on_both_routes() {
        let p = registry_get("heat").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let th = ThetaPoint::sample(&p, 1, 2.0, &mut rng);
        assert_eq!(eval_phi1(&p, &th).unwrap().max_abs(), 0.0);
        assert_eq!(eval_phik(&p, &th, 1).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn quadratic_driver_phi1_by_hand() {
        // f = y²/2: φ⁽¹⁾ = f_y y⁽¹⁾ = y⁽⁰⁾ y⁽¹⁾, φ⁽²⁾ = (y⁽¹⁾)² + y⁽⁰⁾ y⁽²⁾
        let p = registry_get("heat_quadratic").unwrap();
        let th = scalar_theta(&p, &[0.6, -0.8, 0.35], &[0.1, 0.2, 0.3]);
        assert!((eval_phi1(&p, &th).unwrap().values()[0] - 0.6 * -0.8).abs() < 1e-15);
        assert!((eval_phik(&p, &th, 1).unwrap().values()[0] - 0.6 * -0.8).abs() < 1e-15);
        let expect2 = 0.64 + 0.6 * 0.35;
        assert!((eval_phik(&p, &th, 2).unwrap().values()[0] - expect2).abs() < 1e-15);
    }

    #[test]
    fn phi1_routes_agree_on_coupled_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for name in ["skorokhod", "z_coupled", "heat_quadratic", "burgers_blowup"] {
            let p = registry_get(name).unwrap();
            for _ in 0..20 {
                let th = ThetaPoint::sample(&p, 2, 1.0, &mut rng);
                let a = eval_phi1(&p, &th).unwrap();
                let b = eval_phik(&p, &th, 1).unwrap();
                assert!(a.sub(&b).unwrap().max_abs() < 1e-13, "{name}");
                let g = eval_generators(&p, &th).unwrap();
                assert!(g.phi[1].sub(&a).unwrap().max_abs() < 1e-13);
                assert!(g.h[1].sub(&eval_hk(&p, &th, 2).unwrap()).unwrap().max_abs() < 1e-13);
            }
        }
    }

    #[test]
    fn affine_in_top_level() {
        let p = registry_get("z_coupled").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for k in 2..=3 {
            let th = ThetaPoint::sample(&p, k, 1.0, &mut rng);
            let other = ThetaPoint::sample(&p, k, 1.0, &mut rng);
            let at = |s: f64| {
                let mut t = th.clone();
                let y = th.y(k).scale(1.0 - s).add(&other.y(k).scale(s)).unwrap();
                let z = th.z(k).scale(1.0 - s).add(&other.z(k).scale(s)).unwrap();
                t.set_y(k, y).unwrap();
                t.set_z(k, z).unwrap();
                eval_phik(&p, &t, k).unwrap()
            };
            let (a, b, c) = (at(0.0), at(0.5), at(1.0));
            let mid = a.add(&c).unwrap().scale(0.5);
            assert!(mid.sub(&b).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn directional_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let step = 1e-5;
        for name in ["skorokhod", "z_coupled", "heat_quadratic"] {
            let p = registry_get(name).unwrap();
            for k in 0..=2 {
                let th = ThetaPoint::sample(&p, k, 0.8, &mut rng);
                let mut blocks = vec![ThetaBlock::X];
                for i in 0..=k {
                    blocks.push(ThetaBlock::Y(i));
                    blocks.push(ThetaBlock::Z(i));
                }
                for block in blocks {
                    let len = match block {
                        ThetaBlock::X => th.x().len(),
                        ThetaBlock::Y(i) => th.y(i).values().len(),
                        ThetaBlock::Z(i) => th.z(i).values().len(),
                    };
                    let dir: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let exact = phik_directional(&p, &th, k, block, &dir).unwrap();
                    let shifted = |s: f64| {
                        let mut t = th.clone();
                        match block {
                            ThetaBlock::X => t.x.iter_mut().zip(&dir).for_each(|(v, d)| *v += s * d),
                            ThetaBlock::Y(i) => t.y[i].values_mut().iter_mut().zip(&dir).for_each(|(v, d)| *v += s * d),
                            ThetaBlock::Z(i) => t.z[i].values_mut().iter_mut().zip(&dir).for_each(|(v, d)| *v += s * d),
                        }
                        eval_phik(&p, &t, k).unwrap()
                    };
                    let fd = shifted(step).sub(&shifted(-step)).unwrap().scale(0.5 / step);
                    let err = fd.sub(&exact).unwrap().max_abs();
                    assert!(err < 1e-6, "{name} k={k} {block:?}: {err}");
                }
            }
        }
    }

    #[test]
    fn structural_dependence_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let p = registry_get("skorokhod").unwrap();
        for k in 2..=3 {
            let r = check_structural_dependence(&p, k, 3, &mut rng).unwrap();
            assert!(r.max_deviation() <= 1e-10, "{r:?}");
            assert!(r.z_below_deviation.is_some());
            assert_eq!(r.failed_trials, 0);
        }
        let p = registry_get("z_coupled").unwrap();
        let r = check_structural_dependence(&p, 3, 3, &mut rng).unwrap();
        assert!(r.max_deviation() <= 1e-10, "{r:?}");
        let r2 = check_structural_dependence(&p, 2, 1, &mut rng).unwrap();
        assert!(r2.z_below_deviation.is_none());
    }

    #[test]
    fn singular_coupling_is_reported() {
        let p = registry_get("z_coupled").unwrap();
        let err = ThetaPoint::new(
            &p,
            0.0,
            vec![0.0],
            vec![gm(&[1], vec![0.0]), gm(&[1, 1], vec![2.5])],
            vec![gm(&[1, 1], vec![0.0]), gm(&[1, 1, 1], vec![0.0])],
        );
        assert!(matches!(err, Err(Error::Singular { .. })));
    }

    #[test]
    fn order_and_level_are_checked() {
        let p = registry_get("heat").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let th = ThetaPoint::sample(&p, 1, 1.0, &mut rng);
        assert!(eval_phik(&p, &th, 2).is_err());
        assert!(matches!(eval_phik(&p, &ThetaPoint::sample(&p, 4, 1.0, &mut rng), 5), Err(Error::OrderExceeded { .. })));
    }

    proptest::proptest! {
        #[test]
        fn inverse_bound_on_scalar_coupling(y1 in -1.9f64..1.9, z1 in -3.0f64..3.0) {
            let p = registry_get("z_coupled").unwrap();
            let th = scalar_theta(&p, &[0.0, y1], &[0.0, z1]);
            let h1 = eval_h1(&p, &th).unwrap().values()[0];
            let bound = 1.0 / (1.0 - y1.abs() * 0.5);
            proptest::prop_assert!(h1.abs() <= bound * z1.abs() * (1.0 + 1e-12));
        }
    }
}
