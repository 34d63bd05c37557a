//! Generalized matrices: dense real arrays indexed by `[n₁] × … × [n_k]`.
//!
//! Storage is row-major, so the LAST axis is the fastest-varying one. A
//! generalized matrix with trailing axis of length `n` is identified with the
//! sequence of its `n` slices along that axis (`slice_last` / `stack_last`);
//! every derivative axis in this crate is appended at the end.
//!
//! Two products are provided:
//!
//! * [`gm_product`] contracts the last axis of `A` with the first axis of `B`;
//! * [`gm_md_contract`] contracts a trailing `(m, d)` pair of `A` with a
//!   leading `(m, d)` pair of `B`.
//!
//! Both are generic over [`Scalar`] so that the same code runs on plain `f64`
//! and on [`crate::jet::Jet`] values during forward-mode differentiation.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Field-like element type of a [`GeneralizedMatrix`].
pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn from_f64(v: f64) -> Self;

    /// The real (non-infinitesimal) part.
    fn re(&self) -> f64;

    /// True when every component (real and infinitesimal) vanishes.
    fn is_zero(&self) -> bool;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn re(&self) -> f64 {
        *self
    }

    #[inline]
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
}

/// Axis lengths of a generalized matrix, plus the positions of axis pairs that
/// form an `(m × d)` block.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    md_pairs: Vec<usize>,
}

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if let Some(pos) = dims.iter().position(|&n| n == 0) {
            return Err(Error::InvalidShape(format!(
                "axis {pos} of {dims:?} has length 0"
            )));
        }
        Ok(Self {
            dims,
            md_pairs: Vec::new(),
        })
    }

    /// Flags axes `(pos, pos + 1)` as an `(m × d)` pair.
    pub fn with_md_pair(mut self, pos: usize, m: usize, d: usize) -> Result<Self> {
        if pos + 1 >= self.dims.len() || self.dims[pos] != m || self.dims[pos + 1] != d {
            return Err(Error::InvalidShape(format!(
                "axes ({pos}, {}) of {:?} are not an ({m}×{d}) pair",
                pos + 1,
                self.dims
            )));
        }
        if self
            .md_pairs
            .iter()
            .any(|&p| p == pos || p + 1 == pos || p == pos + 1)
        {
            return Err(Error::InvalidShape(format!(
                "md pair at {pos} overlaps an existing pair"
            )));
        }
        self.md_pairs.push(pos);
        self.md_pairs.sort_unstable();
        Ok(self)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn md_pairs(&self) -> &[usize] {
        &self.md_pairs
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    /// Number of entries (1 for the rank-0 shape).
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn last(&self) -> Option<usize> {
        self.dims.last().copied()
    }

    /// Row-major offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dims.len());
        index
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &n)| {
                debug_assert!(i < n);
                acc * n + i
            })
    }

    /// Multi-index of a row-major offset.
    pub fn unravel(&self, mut offset: usize) -> Vec<usize> {
        let mut index = vec![0; self.dims.len()];
        for (slot, &n) in index.iter_mut().zip(&self.dims).rev() {
            *slot = offset % n;
            offset /= n;
        }
        index
    }

    fn concat(head: &Shape, head_keep: usize, tail: &Shape, tail_skip: usize) -> Shape {
        let mut dims = head.dims[..head_keep].to_vec();
        dims.extend_from_slice(&tail.dims[tail_skip..]);
        let mut md_pairs: Vec<usize> = head
            .md_pairs
            .iter()
            .copied()
            .filter(|&p| p + 1 < head_keep)
            .collect();
        md_pairs.extend(
            tail.md_pairs
                .iter()
                .filter(|&&p| p >= tail_skip)
                .map(|&p| p - tail_skip + head_keep),
        );
        Shape { dims, md_pairs }
    }
}

/// Dense generalized matrix `A ∈ ℝ^{n₁×…×n_k}` (or over any [`Scalar`]).
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedMatrix<T = f64> {
    shape: Shape,
    values: Vec<T>,
}

impl<T: Scalar> GeneralizedMatrix<T> {
    pub fn zeros(shape: Shape) -> Self {
        let len = shape.len();
        Self {
            shape,
            values: vec![T::zero(); len],
        }
    }

    /// Builds a matrix from row-major values; rejects wrong lengths and
    /// non-finite entries.
    pub fn from_vec(shape: Shape, values: Vec<T>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for shape {:?}",
                values.len(),
                shape.dims()
            )));
        }
        if values.iter().any(|v| !v.re().is_finite()) {
            return Err(Error::NonFinite(format!(
                "generalized matrix of shape {:?}",
                shape.dims()
            )));
        }
        Ok(Self { shape, values })
    }

    /// Like [`Self::from_vec`] without the finiteness check; the caller
    /// guarantees the length.
    pub(crate) fn from_raw(shape: Shape, values: Vec<T>) -> Self {
        debug_assert_eq!(shape.len(), values.len());
        Self { shape, values }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(&[usize]) -> T) -> Self {
        let values = (0..shape.len()).map(|o| f(&shape.unravel(o))).collect();
        Self { shape, values }
    }

    pub fn identity(n: usize) -> Self {
        let shape = Shape {
            dims: vec![n, n],
            md_pairs: Vec::new(),
        };
        Self::from_fn(shape, |i| if i[0] == i[1] { T::one() } else { T::zero() })
    }

    /// `Id_{m×d} ∈ ℝ^{(m×d)×(m×d)}`.
    pub fn md_identity(m: usize, d: usize) -> Self {
        let shape = Shape {
            dims: vec![m, d, m, d],
            md_pairs: vec![0, 2],
        };
        Self::from_fn(shape, |i| {
            if i[0] == i[2] && i[1] == i[3] {
                T::one()
            } else {
                T::zero()
            }
        })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn get(&self, index: &[usize]) -> T {
        self.values[self.shape.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let o = self.shape.offset(index);
        self.values[o] = value;
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> GeneralizedMatrix<U> {
        GeneralizedMatrix {
            shape: self.shape.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Real parts.
    pub fn re(&self) -> GeneralizedMatrix<f64> {
        self.map(|v| v.re())
    }

    pub fn reshape(&self, shape: Shape) -> Result<Self> {
        if shape.len() != self.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} into {:?}",
                self.dims(),
                shape.dims()
            )));
        }
        Ok(Self {
            shape,
            values: self.values.clone(),
        })
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            shape: self.shape.clone(),
            values: self.values.iter().map(|&v| v * s).collect(),
        }
    }

    fn check_same(&self, other: &Self, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other, "add")?;
        Ok(Self {
            shape: self.shape.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other, "sub")?;
        Ok(Self {
            shape: self.shape.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same(other, "add_assign")?;
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    pub fn sub_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same(other, "sub_assign")?;
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a -= b;
        }
        Ok(())
    }

    /// The `l`-th slice along the trailing axis.
    pub fn slice_last(&self, l: usize) -> Result<Self> {
        let n = self
            .shape
            .last()
            .ok_or_else(|| Error::InvalidShape("cannot slice a rank-0 matrix".into()))?;
        if l >= n {
            return Err(Error::InvalidArgument(format!(
                "slice {l} of trailing axis of length {n}"
            )));
        }
        let head = self.values.len() / n;
        let shape = Shape::concat(&self.shape, self.shape.rank() - 1, &self.shape, self.shape.rank());
        let values = (0..head).map(|i| self.values[i * n + l]).collect();
        Ok(Self { shape, values })
    }

    /// Inverse of `slice_last`: stacks equally shaped slices along a new
    /// trailing axis.
    pub fn stack_last(slices: &[Self]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::InvalidArgument("no slices to stack".into()))?;
        let n = slices.len();
        let head = first.values.len();
        let mut values = vec![T::zero(); head * n];
        for (l, s) in slices.iter().enumerate() {
            first.check_same(s, "stack_last")?;
            for (i, &v) in s.values.iter().enumerate() {
                values[i * n + l] = v;
            }
        }
        let mut dims = first.shape.dims.clone();
        dims.push(n);
        let shape = Shape {
            dims,
            md_pairs: first.shape.md_pairs.clone(),
        };
        Ok(Self { shape, values })
    }

    /// `A · B`: contracts the last axis of `self` with the first axis of `other`.
    pub fn product(&self, other: &Self) -> Result<Self> {
        let (Some(k), Some(&first)) = (self.shape.last(), other.dims().first()) else {
            return Err(Error::ShapeMismatch(
                "product needs rank ≥ 1 on both sides".into(),
            ));
        };
        if k != first {
            return Err(Error::ShapeMismatch(format!(
                "product: trailing axis {k} of {:?} vs leading axis {first} of {:?}",
                self.dims(),
                other.dims()
            )));
        }
        let shape = Shape::concat(&self.shape, self.shape.rank() - 1, &other.shape, 1);
        Ok(Self {
            shape,
            values: contract(&self.values, &other.values, k),
        })
    }

    /// `A ·_{(m×d)} B`: contracts the trailing `(m, d)` axes of `self` with the
    /// leading `(m, d)` axes of `other`.
    pub fn md_contract(&self, other: &Self, m: usize, d: usize) -> Result<Self> {
        let a = self.dims();
        let b = other.dims();
        if a.len() < 2 || b.len() < 2 || a[a.len() - 2..] != [m, d] || b[..2] != [m, d] {
            return Err(Error::ShapeMismatch(format!(
                "({m}×{d})-contraction of {a:?} with {b:?}"
            )));
        }
        let shape = Shape::concat(&self.shape, a.len() - 2, &other.shape, 2);
        Ok(Self {
            shape,
            values: contract(&self.values, &other.values, m * d),
        })
    }
}

/// `C[p, q] = Σ_z A[p, z] B[z, q]` on row-major buffers.
fn contract<T: Scalar>(a: &[T], b: &[T], inner: usize) -> Vec<T> {
    let rows = a.len() / inner;
    let cols = b.len() / inner;
    let mut c = vec![T::zero(); rows * cols];
    for p in 0..rows {
        let arow = &a[p * inner..(p + 1) * inner];
        let crow = &mut c[p * cols..(p + 1) * cols];
        for (z, &az) in arow.iter().enumerate() {
            let brow = &b[z * cols..(z + 1) * cols];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += az * bv;
            }
        }
    }
    c
}

impl GeneralizedMatrix<f64> {
    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Spectral norm of the map `ℝ^{cols} → ℝ^{rows}` obtained by grouping the
    /// first `split` axes as rows and the remaining axes as columns.
    ///
    /// Power iteration on `AᵀA` from the normalized all-ones vector, relative
    /// tolerance `1e-10`, at most `10_000` iterations.
    pub fn operator_norm(&self, split: usize) -> Result<f64> {
        if split > self.shape.rank() {
            return Err(Error::InvalidArgument(format!(
                "split {split} exceeds rank {}",
                self.shape.rank()
            )));
        }
        let rows: usize = self.dims()[..split].iter().product();
        let cols: usize = self.dims()[split..].iter().product();
        spectral_norm(&self.values, rows, cols)
    }
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;

fn spectral_norm(a: &[f64], rows: usize, cols: usize) -> Result<f64> {
    if a.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let apply = |v: &[f64]| -> Vec<f64> {
        (0..rows)
            .map(|r| (0..cols).map(|c| a[r * cols + c] * v[c]).sum())
            .collect()
    };
    let apply_t = |w: &[f64]| -> Vec<f64> {
        (0..cols)
            .map(|c| (0..rows).map(|r| a[r * cols + c] * w[r]).sum())
            .collect()
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();

    // all-ones first; basis vectors as deterministic restarts if the start is
    // orthogonal to every right singular vector with nonzero singular value
    let starts = std::iter::once(vec![1.0 / (cols as f64).sqrt(); cols]).chain((0..cols).map(|j| {
        let mut e = vec![0.0; cols];
        e[j] = 1.0;
        e
    }));
    for mut v in starts {
        let mut estimate = norm(&apply(&v));
        if estimate == 0.0 {
            continue;
        }
        for _ in 0..POWER_MAX_ITER {
            let u = apply_t(&apply(&v));
            let un = norm(&u);
            if un == 0.0 {
                break;
            }
            v = u.into_iter().map(|x| x / un).collect();
            let next = norm(&apply(&v));
            if (next - estimate).abs() <= POWER_TOL * next {
                return Ok(next);
            }
            estimate = next;
        }
        return Err(Error::NonConvergence {
            iterations: POWER_MAX_ITER,
        });
    }
    Ok(0.0)
}

pub fn gm_product<T: Scalar>(
    a: &GeneralizedMatrix<T>,
    b: &GeneralizedMatrix<T>,
) -> Result<GeneralizedMatrix<T>> {
    a.product(b)
}

pub fn gm_md_contract<T: Scalar>(
    a: &GeneralizedMatrix<T>,
    b: &GeneralizedMatrix<T>,
    m: usize,
    d: usize,
) -> Result<GeneralizedMatrix<T>> {
    a.md_contract(b, m, d)
}

pub fn frobenius_norm(a: &GeneralizedMatrix<f64>) -> f64 {
    a.frobenius_norm()
}

pub fn operator_norm(a: &GeneralizedMatrix<f64>, split: usize) -> Result<f64> {
    a.operator_norm(split)
}

/// `(Id_{m×d} − vsz)^{-1} · rhs` for `vsz ∈ ℝ^{(m×d)×(m×d)}` and `rhs` with a
/// leading `(m, d)` pair.
///
/// Refuses with [`Error::Singular`] when `‖vsz‖_op ≥ 1`; otherwise solves the
/// flattened `(m·d)`-dimensional system densely and checks
/// `‖(Id − vsz)·out − rhs‖₂ ≤ tol·(1 + ‖rhs‖₂)` on real parts.
pub fn neumann_inverse_apply<T: Scalar>(
    vsz: &GeneralizedMatrix<T>,
    rhs: &GeneralizedMatrix<T>,
    tol: f64,
) -> Result<GeneralizedMatrix<T>> {
    let vd = vsz.dims();
    if vd.len() != 4 || vd[0] != vd[2] || vd[1] != vd[3] {
        return Err(Error::ShapeMismatch(format!(
            "expected an (m×d)×(m×d) operator, got {vd:?}"
        )));
    }
    let (m, d) = (vd[0], vd[1]);
    let rd = rhs.dims();
    if rd.len() < 2 || rd[..2] != [m, d] {
        return Err(Error::ShapeMismatch(format!(
            "right-hand side {rd:?} has no leading ({m}×{d}) pair"
        )));
    }
    if vsz.values.iter().all(Scalar::is_zero) {
        return Ok(rhs.clone());
    }
    let real = vsz.re();
    let norm = real.operator_norm(2)?;
    if norm >= 1.0 {
        return Err(Error::Singular { norm });
    }

    let p = m * d;
    let q = rhs.values.len() / p;
    // I − V, row-major p×p
    let mut a: Vec<T> = vsz.values.iter().map(|&v| -v).collect();
    for i in 0..p {
        a[i * p + i] += T::one();
    }
    let mut x = rhs.values.clone();
    lu_solve_in_place(&mut a, &mut x, p, q)?;

    let out = GeneralizedMatrix {
        shape: rhs.shape.clone(),
        values: x,
    };
    let residual = {
        let applied = GeneralizedMatrix::<f64>::md_identity(m, d)
            .sub(&real)?
            .md_contract(&out.re(), m, d)?;
        applied.sub(&rhs.re())?.frobenius_norm()
    };
    let scale = 1.0 + rhs.re().frobenius_norm();
    if !(residual <= tol * scale) {
        return Err(Error::Singular { norm });
    }
    Ok(out)
}

/// Gaussian elimination with partial pivoting on real parts; solves `A X = B`
/// for `q` right-hand-side columns stored row-major in `b` (p×q).
fn lu_solve_in_place<T: Scalar>(a: &mut [T], b: &mut [T], p: usize, q: usize) -> Result<()> {
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&i, &j| {
                a[i * p + col]
                    .re()
                    .abs()
                    .total_cmp(&a[j * p + col].re().abs())
            })
            .unwrap_or(col);
        if a[pivot * p + col].re() == 0.0 {
            return Err(Error::Singular { norm: f64::NAN });
        }
        if pivot != col {
            for k in 0..p {
                a.swap(col * p + k, pivot * p + k);
            }
            for k in 0..q {
                b.swap(col * q + k, pivot * q + k);
            }
        }
        let diag = a[col * p + col];
        for row in col + 1..p {
            let factor = a[row * p + col] / diag;
            if factor.is_zero() {
                continue;
            }
            for k in col..p {
                let v = a[col * p + k];
                a[row * p + k] -= factor * v;
            }
            for k in 0..q {
                let v = b[col * q + k];
                b[row * q + k] -= factor * v;
            }
        }
    }
    for col in (0..p).rev() {
        let diag = a[col * p + col];
        for k in 0..q {
            let mut acc = b[col * q + k];
            for j in col + 1..p {
                acc -= a[col * p + j] * b[j * q + k];
            }
            b[col * q + k] = acc / diag;
        }
    }
    Ok(())
}
