//! Multivariate first-order-per-direction jets (hyper-dual numbers).
//!
//! A [`Jet`] with `p` active directions stores one coefficient per subset of
//! `{ε₀, …, ε_{p−1}}`, with `εᵢ² = 0`. Seeding each direction with a tangent
//! and multiplying out gives exact mixed partial derivatives: the coefficient
//! of `ε₀ε₁…ε_{p−1}` is the `p`-th directional derivative along the seeded
//! tangents. Nesting derivative passes therefore amounts to opening one more
//! direction, which is how the generator recursion differentiates itself.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::tensor::Scalar;

/// Maximum number of simultaneously open infinitesimal directions.
pub const MAX_DIRECTIONS: usize = 5;
const WIDTH: usize = 1 << MAX_DIRECTIONS;

#[derive(Clone, Copy)]
pub struct Jet {
    parts: [f64; WIDTH],
    dirs: u8,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("dirs", &self.dirs)
            .field("parts", &&self.parts[..1 << self.dirs])
            .finish()
    }
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        let n = 1 << self.dirs.max(other.dirs);
        self.parts[..n] == other.parts[..n]
    }
}

impl Default for Jet {
    fn default() -> Self {
        Self::constant(0.0)
    }
}

impl From<f64> for Jet {
    fn from(v: f64) -> Self {
        Self::constant(v)
    }
}

impl Jet {
    #[inline]
    pub fn constant(v: f64) -> Self {
        let mut parts = [0.0; WIDTH];
        parts[0] = v;
        Self { parts, dirs: 0 }
    }

    /// `v + ε_dir`.
    pub fn variable(v: f64, dir: usize) -> Self {
        assert!(dir < MAX_DIRECTIONS, "jet direction {dir} out of range");
        let mut j = Self::constant(v);
        j.parts[1 << dir] = 1.0;
        j.dirs = dir as u8 + 1;
        j
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.parts[0]
    }

    /// Number of open directions.
    #[inline]
    pub fn dirs(&self) -> usize {
        self.dirs as usize
    }

    /// Coefficient of the monomial `∏_{i ∈ mask} εᵢ`.
    pub fn part(&self, mask: usize) -> f64 {
        if mask < WIDTH {
            self.parts[mask]
        } else {
            0.0
        }
    }

    /// `self + ε_dir · tangent`. `dir` must not already be present in `self`
    /// or `tangent`.
    pub fn with_tangent(&self, tangent: &Jet, dir: usize) -> Jet {
        assert!(dir < MAX_DIRECTIONS, "jet direction {dir} out of range");
        debug_assert!(self.dirs() <= dir && tangent.dirs() <= dir);
        let bit = 1 << dir;
        let mut out = *self;
        out.dirs = (dir + 1) as u8;
        let n = 1 << tangent.dirs;
        out.parts[bit..bit + n].copy_from_slice(&tangent.parts[..n]);
        out
    }

    /// Coefficient of `ε_dir`, itself a jet in the remaining directions.
    pub fn tangent(&self, dir: usize) -> Jet {
        let bit = 1 << dir;
        let mut out = Jet::constant(0.0);
        if dir >= self.dirs() {
            return out;
        }
        let n = 1 << self.dirs;
        for s in 0..n {
            if s & bit == 0 {
                out.parts[s] = self.parts[s | bit];
            }
        }
        // directions above `dir` stay addressable
        out.dirs = if dir + 1 == self.dirs() {
            dir as u8
        } else {
            self.dirs
        };
        out
    }

    /// The jet with all infinitesimal parts dropped.
    pub fn real(&self) -> Jet {
        Jet::constant(self.value())
    }

    /// `Σ_j f⁽ʲ⁾(a₀) δʲ / j!` where `δ = self − a₀`. `derivs[j]` must hold
    /// `f⁽ʲ⁾(a₀)` for `j ≤ dirs`.
    pub fn compose(&self, derivs: &[f64]) -> Jet {
        let mut out = Jet::constant(derivs[0]);
        if self.dirs == 0 {
            return out;
        }
        let mut delta = *self;
        delta.parts[0] = 0.0;
        let mut power = delta;
        let mut factorial = 1.0;
        for (j, &dj) in derivs.iter().enumerate().skip(1).take(self.dirs()) {
            factorial *= j as f64;
            if dj != 0.0 {
                let c = dj / factorial;
                let n = 1 << power.dirs;
                for s in 1..n {
                    out.parts[s] += c * power.parts[s];
                }
                out.dirs = out.dirs.max(power.dirs);
            }
            if j < self.dirs() {
                power *= delta;
            }
        }
        out
    }

    fn order(&self) -> usize {
        self.dirs()
    }

    pub fn sin(self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let derivs: Vec<f64> = (0..=self.order())
            .map(|j| [s, c, -s, -c][j % 4])
            .collect();
        self.compose(&derivs)
    }

    pub fn cos(self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let derivs: Vec<f64> = (0..=self.order())
            .map(|j| [c, -s, -c, s][j % 4])
            .collect();
        self.compose(&derivs)
    }

    pub fn exp(self) -> Jet {
        let e = self.value().exp();
        self.compose(&vec![e; self.order() + 1])
    }

    pub fn ln(self) -> Jet {
        let a = self.value();
        let mut derivs = vec![a.ln()];
        let mut c = 1.0;
        for j in 1..=self.order() {
            derivs.push(c / a.powi(j as i32));
            c *= -(j as f64);
        }
        self.compose(&derivs)
    }

    /// `self^p` for real `p`.
    pub fn powf(self, p: f64) -> Jet {
        let a = self.value();
        let mut derivs = Vec::with_capacity(self.order() + 1);
        let mut c = 1.0;
        for j in 0..=self.order() {
            derivs.push(c * a.powf(p - j as f64));
            c *= p - j as f64;
        }
        self.compose(&derivs)
    }

    pub fn powi(self, p: i32) -> Jet {
        if p >= 0 {
            let mut out = Jet::constant(1.0);
            for _ in 0..p {
                out *= self;
            }
            out
        } else {
            self.powi(-p).recip()
        }
    }

    pub fn sqrt(self) -> Jet {
        self.powf(0.5)
    }

    pub fn recip(self) -> Jet {
        let a = self.value();
        let mut derivs = Vec::with_capacity(self.order() + 1);
        let mut c = 1.0;
        for j in 0..=self.order() {
            derivs.push(c / a.powi(j as i32 + 1));
            c *= -((j + 1) as f64);
        }
        self.compose(&derivs)
    }

    pub fn tanh(self) -> Jet {
        let t = self.value().tanh();
        // dᵏ/dxᵏ tanh = Pₖ(tanh) with P₀ = T, Pₖ₊₁ = Pₖ'(T)(1 − T²)
        let mut poly = vec![0.0, 1.0];
        let mut derivs = Vec::with_capacity(self.order() + 1);
        for _ in 0..=self.order() {
            derivs.push(poly.iter().rev().fold(0.0, |acc, &c| acc * t + c));
            let dp: Vec<f64> = poly
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| i as f64 * c)
                .collect();
            let mut next = vec![0.0; dp.len() + 2];
            for (i, &c) in dp.iter().enumerate() {
                next[i] += c;
                next[i + 2] -= c;
            }
            poly = next;
        }
        self.compose(&derivs)
    }

    /// `|x|` with derivative `sign(x)` (and zero at the kink).
    pub fn abs(self) -> Jet {
        let a = self.value();
        let mut derivs = vec![0.0; self.order() + 1];
        derivs[0] = a.abs();
        if derivs.len() > 1 {
            derivs[1] = if a > 0.0 {
                1.0
            } else if a < 0.0 {
                -1.0
            } else {
                0.0
            };
        }
        self.compose(&derivs)
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(mut self, rhs: Jet) -> Jet {
        self += rhs;
        self
    }
}

impl AddAssign for Jet {
    #[inline]
    fn add_assign(&mut self, rhs: Jet) {
        let n = 1 << rhs.dirs;
        for (a, b) in self.parts[..n].iter_mut().zip(&rhs.parts[..n]) {
            *a += b;
        }
        self.dirs = self.dirs.max(rhs.dirs);
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(mut self, rhs: Jet) -> Jet {
        self -= rhs;
        self
    }
}

impl SubAssign for Jet {
    #[inline]
    fn sub_assign(&mut self, rhs: Jet) {
        let n = 1 << rhs.dirs;
        for (a, b) in self.parts[..n].iter_mut().zip(&rhs.parts[..n]) {
            *a -= b;
        }
        self.dirs = self.dirs.max(rhs.dirs);
    }
}

impl Neg for Jet {
    type Output = Jet;
    #[inline]
    fn neg(mut self) -> Jet {
        let n = 1 << self.dirs;
        for a in &mut self.parts[..n] {
            *a = -*a;
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        if rhs.dirs == 0 {
            return self * rhs.parts[0];
        }
        if self.dirs == 0 {
            return rhs * self.parts[0];
        }
        let dirs = self.dirs.max(rhs.dirs);
        let n = 1usize << dirs;
        let mut out = Jet {
            parts: [0.0; WIDTH],
            dirs,
        };
        for s in 0..n {
            // sum over all submasks t of s
            let mut acc = 0.0;
            let mut t = s;
            loop {
                acc += self.parts[t] * rhs.parts[s ^ t];
                if t == 0 {
                    break;
                }
                t = (t - 1) & s;
            }
            out.parts[s] = acc;
        }
        out
    }
}

impl MulAssign for Jet {
    #[inline]
    fn mul_assign(&mut self, rhs: Jet) {
        *self = *self * rhs;
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn mul(mut self, rhs: f64) -> Jet {
        let n = 1 << self.dirs;
        for a in &mut self.parts[..n] {
            *a *= rhs;
        }
        self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    #[inline]
    fn mul(self, rhs: Jet) -> Jet {
        rhs * self
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn add(mut self, rhs: f64) -> Jet {
        self.parts[0] += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn sub(mut self, rhs: f64) -> Jet {
        self.parts[0] -= rhs;
        self
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, rhs: Jet) -> Jet {
        if rhs.dirs == 0 {
            return self * (1.0 / rhs.parts[0]);
        }
        self * rhs.recip()
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, rhs: f64) -> Jet {
        self * (1.0 / rhs)
    }
}

impl Scalar for Jet {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Jet::constant(v)
    }

    #[inline]
    fn re(&self) -> f64 {
        self.value()
    }

    fn is_zero(&self) -> bool {
        self.parts[..1 << self.dirs].iter().all(|&v| v == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn mixed_partials_of_a_product() {
        // f(x, y) = x² y at (3, 2): f_x = 12, f_y = 9, f_xy = 6
        let x = Jet::variable(3.0, 0);
        let y = Jet::variable(2.0, 1);
        let f = x * x * y;
        assert_eq!(f.value(), 18.0);
        assert_eq!(f.part(0b01), 12.0);
        assert_eq!(f.part(0b10), 9.0);
        assert_eq!(f.part(0b11), 6.0);
    }

    #[test]
    fn repeated_direction_gives_higher_derivatives() {
        // seeding three directions with the same tangent gives f'''
        let mut x = Jet::constant(0.7);
        for dir in 0..3 {
            x = x.with_tangent(&Jet::constant(1.0), dir);
        }
        let s = x.sin();
        assert!(close(s.part(0b111), -(0.7f64).cos(), 1e-14));
        let t = x.tanh();
        let th = 0.7f64.tanh();
        let third = -2.0 * (1.0 - th * th) * (1.0 - 3.0 * th * th);
        assert!(close(t.part(0b111), third, 1e-13));
    }

    #[test]
    fn division_and_reciprocal_agree() {
        let x = Jet::variable(1.5, 0).with_tangent(&Jet::constant(1.0), 1);
        let q = Jet::constant(1.0) / x;
        // d²/dx² 1/x = 2/x³
        assert!(close(q.part(0b11), 2.0 / 1.5f64.powi(3), 1e-14));
        let p = x.powi(-1);
        assert!(close(p.part(0b11), q.part(0b11), 1e-14));
    }

    #[test]
    fn tangent_extracts_inner_jet() {
        let x = Jet::variable(2.0, 0);
        let lifted = x.with_tangent(&(x * 3.0), 1);
        let sq = lifted * lifted;
        // d/dε₁ (x + 3x ε₁)² = 6x², whose ε₀ part is 12x = 24
        let t = sq.tangent(1);
        assert_eq!(t.value(), 24.0);
        assert_eq!(t.part(0b01), 24.0);
    }

    #[test]
    fn elementary_functions_match_finite_differences() {
        let h = 1e-6;
        let fns: Vec<(fn(Jet) -> Jet, fn(f64) -> f64)> = vec![
            (Jet::exp, f64::exp),
            (Jet::ln, f64::ln),
            (Jet::sqrt, f64::sqrt),
            (Jet::cos, f64::cos),
            (Jet::tanh, f64::tanh),
        ];
        for (jf, ff) in fns {
            let x0 = 0.8;
            let d = jf(Jet::variable(x0, 0)).part(1);
            let fd = (ff(x0 + h) - ff(x0 - h)) / (2.0 * h);
            assert!(close(d, fd, 1e-8), "{d} vs {fd}");
        }
    }
}
