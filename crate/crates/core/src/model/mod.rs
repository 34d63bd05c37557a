//! Problem definitions: coefficients `(μ, σ, f, ξ)` with derivatives.
//!
//! Coefficients are written once against [`Jet`] arguments. Evaluating them on
//! jets seeded along coordinate directions yields exact partial derivatives of
//! any order up to [`crate::jet::MAX_DIRECTIONS`], which is what both the
//! [`DerivativeBundle`] and the generator recursion consume.

mod mllc;
mod registry;
mod transform;

use std::collections::BTreeMap;
use std::fmt;
use std::borrow::Cow;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{Jet, MAX_DIRECTIONS};
use crate::tensor::{GeneralizedMatrix, Shape};

pub use mllc::{validate_mllc, LipschitzEstimate, MllcReport, ProbeBox};
pub use registry::{registry_get, registry_get_with, ProblemParams, REGISTRY_NAMES};
pub use transform::ScaledCoefficients;

/// Dimensions: state `n`, backward `m`, Brownian `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub d: usize,
}

impl Dims {
    pub fn new(n: usize, m: usize, d: usize) -> Self {
        Self { n, m, d }
    }

    /// Number of entries of `y⁽ⁱ⁾ ∈ ℝ^{m ×ᵢ n}`.
    pub fn y_len(&self, level: usize) -> usize {
        self.m * self.n.pow(level as u32)
    }

    /// Number of entries of `z⁽ⁱ⁾ ∈ ℝ^{(m×d) ×ᵢ n}`.
    pub fn z_len(&self, level: usize) -> usize {
        self.m * self.d * self.n.pow(level as u32)
    }

    pub fn y_shape(&self, level: usize) -> Shape {
        let mut dims = vec![self.m];
        dims.extend(std::iter::repeat_n(self.n, level));
        Shape::new(dims).expect("positive dimensions")
    }

    pub fn z_shape(&self, level: usize) -> Shape {
        let mut dims = vec![self.m, self.d];
        dims.extend(std::iter::repeat_n(self.n, level));
        Shape::new(dims)
            .and_then(|s| s.with_md_pair(0, self.m, self.d))
            .expect("positive dimensions")
    }
}

/// The coefficient functions of a Markovian FBSDE
///
/// ```text
/// X_s = x + ∫ μ(r, X, Y, Z) dr + ∫ σ(r, X, Y, Z) dW
/// Y_s = ξ(X_T) − ∫_s^T f(r, X, Y, Z) dr − ∫_s^T Z dW
/// ```
///
/// All matrices are passed flattened row-major: `z` is `m×d`, the diffusion
/// returns `n×d`. Implementations must be pure and finite on finite inputs.
pub trait Coefficients: Send + Sync + fmt::Debug {
    /// μ ∈ ℝⁿ
    fn drift(&self, t: f64, x: &[Jet], y: &[Jet], z: &[Jet]) -> Vec<Jet>;
    /// σ ∈ ℝ^{n×d}
    fn diffusion(&self, t: f64, x: &[Jet], y: &[Jet], z: &[Jet]) -> Vec<Jet>;
    /// f ∈ ℝᵐ
    fn driver(&self, t: f64, x: &[Jet], y: &[Jet], z: &[Jet]) -> Vec<Jet>;
    /// ξ ∈ ℝᵐ
    fn terminal(&self, x: &[Jet]) -> Vec<Jet>;
    /// Closed-form `u⁽ˡᵉᵛᵉˡ⁾(t, x)` for horizon `T`, when one is known.
    fn exact(&self, _horizon: f64, _level: usize, _t: f64, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Which of the running coefficients to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Coefficient {
    Drift,
    Diffusion,
    Driver,
}

impl Coefficient {
    pub fn name(self) -> &'static str {
        match self {
            Coefficient::Drift => "mu",
            Coefficient::Diffusion => "sigma",
            Coefficient::Driver => "f",
        }
    }
}

#[derive(Clone)]
pub struct FbsdeProblem {
    name: String,
    dims: Dims,
    horizon: f64,
    k_max: usize,
    lip_sigma_z: f64,
    coefficients: Arc<dyn Coefficients>,
}

impl fmt::Debug for FbsdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FbsdeProblem")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("horizon", &self.horizon)
            .field("k_max", &self.k_max)
            .field("lip_sigma_z", &self.lip_sigma_z)
            .finish()
    }
}

impl FbsdeProblem {
    /// `lip_sigma_z` is the declared Lipschitz constant of σ in `z`
    /// (Frobenius norms); 0 means σ does not depend on `z`.
    pub fn new(
        name: impl Into<String>,
        dims: Dims,
        horizon: f64,
        k_max: usize,
        lip_sigma_z: f64,
        coefficients: Arc<dyn Coefficients>,
    ) -> Result<Self> {
        if dims.n == 0 || dims.m == 0 || dims.d == 0 {
            return Err(Error::InvalidArgument(format!("dimensions {dims:?}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon {horizon}")));
        }
        if !(lip_sigma_z >= 0.0) {
            return Err(Error::InvalidArgument(format!("L_sigma_z {lip_sigma_z}")));
        }
        if k_max > MAX_DIRECTIONS - 1 {
            return Err(Error::OrderExceeded {
                requested: k_max,
                supported: MAX_DIRECTIONS - 1,
            });
        }
        Ok(Self {
            name: name.into(),
            dims,
            horizon,
            k_max,
            lip_sigma_z,
            coefficients,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon {horizon}")));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn lip_sigma_z(&self) -> f64 {
        self.lip_sigma_z
    }

    /// `L_{σ,z}^{-1}`, infinite when σ does not depend on `z`.
    pub fn inverse_lip_sigma_z(&self) -> f64 {
        if self.lip_sigma_z > 0.0 {
            1.0 / self.lip_sigma_z
        } else {
            f64::INFINITY
        }
    }

    pub fn coefficients(&self) -> &Arc<dyn Coefficients> {
        &self.coefficients
    }

    pub(crate) fn eval_jet(
        &self,
        which: Coefficient,
        t: f64,
        x: &[Jet],
        y: &[Jet],
        z: &[Jet],
    ) -> Vec<Jet> {
        let c = &self.coefficients;
        match which {
            Coefficient::Drift => c.drift(t, x, y, z),
            Coefficient::Diffusion => c.diffusion(t, x, y, z),
            Coefficient::Driver => c.driver(t, x, y, z),
        }
    }

    /// Plain evaluation of a running coefficient.
    pub fn eval(&self, which: Coefficient, t: f64, x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
        let lift = |v: &[f64]| v.iter().map(|&a| Jet::constant(a)).collect::<Vec<_>>();
        self.eval_jet(which, t, &lift(x), &lift(y), &lift(z))
            .iter()
            .map(Jet::value)
            .collect()
    }

    pub fn drift(&self, t: f64, x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
        self.eval(Coefficient::Drift, t, x, y, z)
    }

    pub fn diffusion(&self, t: f64, x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
        self.eval(Coefficient::Diffusion, t, x, y, z)
    }

    pub fn driver(&self, t: f64, x: &[f64], y: &[f64], z: &[f64]) -> Vec<f64> {
        self.eval(Coefficient::Driver, t, x, y, z)
    }

    pub fn terminal(&self, x: &[f64]) -> Vec<f64> {
        let xj: Vec<Jet> = x.iter().map(|&a| Jet::constant(a)).collect();
        self.coefficients.terminal(&xj).iter().map(Jet::value).collect()
    }

    /// Closed-form `u⁽ˡᵉᵛᵉˡ⁾(t, x)` (flattened `ℝ^{m ×ᵢ n}`), if known.
    pub fn exact(&self, level: usize, t: f64, x: &[f64]) -> Option<Vec<f64>> {
        self.coefficients.exact(self.horizon, level, t, x)
    }

    /// Directional derivative `d/dε c(t, x + ε dx, y + ε dy, z + ε dz)` at
    /// `ε = 0`, computed by opening jet direction `dir`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn directional(
        &self,
        which: Coefficient,
        t: f64,
        (x, y, z): (&[Jet], &[Jet], &[Jet]),
        (dx, dy, dz): (Option<&[Jet]>, Option<&[Jet]>, Option<&[Jet]>),
        dir: usize,
    ) -> Vec<Jet> {
        fn push<'a>(base: &'a [Jet], tangent: Option<&[Jet]>, dir: usize) -> Cow<'a, [Jet]> {
            match tangent {
                Some(tv) => base
                    .iter()
                    .zip(tv)
                    .map(|(b, tj)| b.with_tangent(tj, dir))
                    .collect(),
                None => Cow::Borrowed(base),
            }
        }
        let (xs, ys, zs) = (push(x, dx, dir), push(y, dy, dir), push(z, dz, dir));
        self.eval_jet(which, t, &xs, &ys, &zs)
            .iter()
            .map(|v| v.tangent(dir))
            .collect()
    }

    /// `ξ⁽ⁱ⁾(x) ∈ ℝ^{m ×ᵢ n}`: the `order`-th derivative of the terminal
    /// condition, derivative axes appended in differentiation order.
    pub fn terminal_derivative(&self, x: &[f64], order: usize) -> Result<GeneralizedMatrix> {
        if order > MAX_DIRECTIONS {
            return Err(Error::OrderExceeded {
                requested: order,
                supported: MAX_DIRECTIONS,
            });
        }
        let n = self.dims.n;
        let shape = self.dims.y_shape(order);
        let combos = n.pow(order as u32);
        let m = self.dims.m;
        let mut values = vec![0.0; m * combos];
        let mask = (1usize << order) - 1;
        for combo in 0..combos {
            let idx = digits(combo, n, order);
            let mut xs: Vec<Jet> = x.iter().map(|&a| Jet::constant(a)).collect();
            for (dir, &c) in idx.iter().enumerate() {
                xs[c] = xs[c].with_tangent(&Jet::constant(1.0), dir);
            }
            let out = self.coefficients.terminal(&xs);
            for (a, v) in out.iter().enumerate() {
                values[a * combos + combo] = v.part(mask);
            }
        }
        GeneralizedMatrix::from_vec(shape, values)
            .map_err(|_| Error::NonFiniteCoefficient("xi"))
    }
}

/// Base-`base` digits of `value`, most significant first, `len` of them.
pub(crate) fn digits(mut value: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = value % base;
        value /= base;
    }
    out
}

/// Argument a derivative axis refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arg {
    X,
    Y,
    Z,
}

impl Arg {
    fn shape(self, dims: Dims) -> Vec<usize> {
        match self {
            Arg::X => vec![dims.n],
            Arg::Y => vec![dims.m],
            Arg::Z => vec![dims.m, dims.d],
        }
    }

    fn len(self, dims: Dims) -> usize {
        self.shape(dims).iter().product()
    }
}

/// One coefficient's value and partial derivatives, keyed by the
/// (non-decreasing) sequence of arguments differentiated. The empty key holds
/// the value itself; derivative axes follow the value axes in key order.
#[derive(Clone, Debug)]
pub struct CoefficientDerivatives {
    pub name: &'static str,
    pub partials: BTreeMap<Vec<Arg>, GeneralizedMatrix>,
}

impl CoefficientDerivatives {
    pub fn value(&self) -> &GeneralizedMatrix {
        &self.partials[&Vec::new()]
    }

    /// Partial derivative along `args` (any order of the same multiset).
    pub fn partial(&self, args: &[Arg]) -> Option<&GeneralizedMatrix> {
        let mut key = args.to_vec();
        key.sort();
        self.partials.get(&key)
    }
}

/// Coefficients and their derivatives at one point `(t, x, y, z)`.
#[derive(Clone, Debug)]
pub struct DerivativeBundle {
    pub order: usize,
    pub drift: CoefficientDerivatives,
    pub diffusion: CoefficientDerivatives,
    pub driver: CoefficientDerivatives,
    pub terminal: CoefficientDerivatives,
}

impl DerivativeBundle {
    pub fn get(&self, which: Coefficient) -> &CoefficientDerivatives {
        match which {
            Coefficient::Drift => &self.drift,
            Coefficient::Diffusion => &self.diffusion,
            Coefficient::Driver => &self.driver,
        }
    }
}

/// Non-decreasing sequences over `alphabet` of every length `0..=order`.
fn multisets(alphabet: &[Arg], order: usize) -> Vec<Vec<Arg>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..order {
        let mut next = Vec::new();
        for seq in &frontier {
            for &a in alphabet {
                if seq.last().is_none_or(|&l| l <= a) {
                    let mut s: Vec<Arg> = seq.clone();
                    s.push(a);
                    next.push(s);
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Values and all partial derivatives up to `order` of μ, σ, f (in x, y, z)
/// and ξ (in x) at `(t, x, y, z)`.
pub fn evaluate_coefficients(
    problem: &FbsdeProblem,
    t: f64,
    x: &[f64],
    y: &[f64],
    z: &[f64],
    order: usize,
) -> Result<DerivativeBundle> {
    if order > problem.k_max() {
        return Err(Error::OrderExceeded {
            requested: order,
            supported: problem.k_max(),
        });
    }
    let dims = problem.dims();
    if x.len() != dims.n || y.len() != dims.m || z.len() != dims.m * dims.d {
        return Err(Error::ShapeMismatch(format!(
            "point with |x|={}, |y|={}, |z|={} for dims {dims:?}",
            x.len(),
            y.len(),
            z.len()
        )));
    }

    let running = |which: Coefficient, value_shape: Vec<usize>| -> Result<CoefficientDerivatives> {
        let mut partials = BTreeMap::new();
        for key in multisets(&[Arg::X, Arg::Y, Arg::Z], order) {
            let sizes: Vec<usize> = key.iter().map(|a| a.len(dims)).collect();
            let combos: usize = sizes.iter().product();
            let out_len: usize = value_shape.iter().product();
            let mut values = vec![0.0; out_len * combos];
            let mask = (1usize << key.len()) - 1;
            for combo in 0..combos {
                let mut xs: Vec<Jet> = x.iter().map(|&a| Jet::constant(a)).collect();
                let mut ys: Vec<Jet> = y.iter().map(|&a| Jet::constant(a)).collect();
                let mut zs: Vec<Jet> = z.iter().map(|&a| Jet::constant(a)).collect();
                let mut rest = combo;
                let mut idx = vec![0; key.len()];
                for (slot, &size) in idx.iter_mut().zip(&sizes).rev() {
                    *slot = rest % size;
                    rest /= size;
                }
                for (dir, (&arg, &c)) in key.iter().zip(&idx).enumerate() {
                    let target = match arg {
                        Arg::X => &mut xs[c],
                        Arg::Y => &mut ys[c],
                        Arg::Z => &mut zs[c],
                    };
                    *target = target.with_tangent(&Jet::constant(1.0), dir);
                }
                let out = problem.eval_jet(which, t, &xs, &ys, &zs);
                if out.len() != out_len {
                    return Err(Error::ShapeMismatch(format!(
                        "coefficient {} returned {} values, expected {out_len}",
                        which.name(),
                        out.len()
                    )));
                }
                for (a, v) in out.iter().enumerate() {
                    values[a * combos + combo] = v.part(mask);
                }
            }
            let mut shape_dims = value_shape.clone();
            for a in &key {
                shape_dims.extend(a.shape(dims));
            }
            let shape = Shape::new(shape_dims)?;
            let gm = GeneralizedMatrix::from_vec(shape, values)
                .map_err(|_| Error::NonFiniteCoefficient(which.name()))?;
            partials.insert(key, gm);
        }
        Ok(CoefficientDerivatives {
            name: which.name(),
            partials,
        })
    };

    let drift = running(Coefficient::Drift, vec![dims.n])?;
    let diffusion = running(Coefficient::Diffusion, vec![dims.n, dims.d])?;
    let driver = running(Coefficient::Driver, vec![dims.m])?;
    let mut partials = BTreeMap::new();
    for r in 0..=order {
        partials.insert(vec![Arg::X; r], problem.terminal_derivative(x, r)?);
    }
    let terminal = CoefficientDerivatives {
        name: "xi",
        partials,
    };
    Ok(DerivativeBundle {
        order,
        drift,
        diffusion,
        driver,
        terminal,
    })
}
