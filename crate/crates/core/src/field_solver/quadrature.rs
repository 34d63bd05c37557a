//! Gauss–Hermite rules for expectations under the standard normal law.

use crate::error::{Error, Result};

/// Nodes `wᵢ` and weights `ωᵢ` with `Σ ωᵢ g(wᵢ) ≈ E[g(W)]`, `W ~ N(0, 1)`;
/// exact for polynomials of degree `< 2·points`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(points: usize) -> Result<Self> {
        if points == 0 || points > 64 {
            return Err(Error::InvalidArgument(format!(
                "Gauss-Hermite rule with {points} points (supported: 1..=64)"
            )));
        }
        // Newton iteration on orthonormal physicists' Hermite polynomials,
        // then rescaled to the standard normal weight.
        let n = points;
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let mut z = 0.0f64;
        for i in 0..n.div_ceil(2) {
            z = match i {
                0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            let mut converged = false;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / j as f64).sqrt() * p2 - ((j - 1) as f64 / j as f64).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let step = p1 / pp;
                z -= step;
                if step.abs() <= 1e-15 * z.abs().max(1.0) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::NonConvergence { iterations: 100 });
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        let scale = std::f64::consts::SQRT_2;
        let norm = std::f64::consts::PI.sqrt();
        let mut rule = Self {
            nodes: nodes.iter().rev().map(|x| x * scale).collect(),
            weights: weights.iter().rev().map(|w| w / norm).collect(),
        };
        if n % 2 == 1 {
            rule.nodes[n / 2] = 0.0;
        }
        Ok(rule)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Tensor rule in `dim` dimensions: (node, weight) pairs.
    pub fn tensor(&self, dim: usize) -> Vec<(Vec<f64>, f64)> {
        let q = self.len();
        (0..q.pow(dim as u32))
            .map(|mut combo| {
                let mut point = vec![0.0; dim];
                let mut weight = 1.0;
                for slot in point.iter_mut().rev() {
                    let i = combo % q;
                    combo /= q;
                    *slot = self.nodes[i];
                    weight *= self.weights[i];
                }
                (point, weight)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moment(rule: &GaussHermite, p: i32) -> f64 {
        rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(p)).sum()
    }

    #[test]
    fn normal_moments_are_exact() {
        for points in 1..=20 {
            let rule = GaussHermite::new(points).unwrap();
            let mut double_factorial = 1.0;
            for p in (0..2 * points as i32).step_by(2) {
                if p > 0 {
                    double_factorial *= (p - 1) as f64;
                }
                let m = moment(&rule, p);
                assert!((m - double_factorial).abs() <= 1e-12 * double_factorial, "{points} {p}: {m}");
                assert!(moment(&rule, p + 1).abs() < 1e-10 * double_factorial.max(1.0));
            }
        }
    }

    #[test]
    fn three_point_rule_by_hand() {
        let rule = GaussHermite::new(3).unwrap();
        let s3 = 3f64.sqrt();
        assert!((rule.nodes[0] + s3).abs() < 1e-14 && rule.nodes[1] == 0.0);
        assert!((rule.weights[0] - 1.0 / 6.0).abs() < 1e-14);
        assert!((rule.weights[1] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn characteristic_function() {
        // E[cos(aW)] = exp(-a²/2)
        let rule = GaussHermite::new(5).unwrap();
        let a = 0.0316;
        let e: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * (a * x).cos()).sum();
        assert!((e - (-a * a / 2.0).exp()).abs() < 1e-15);
        let t = rule.tensor(2);
        assert_eq!(t.len(), 25);
        assert!((t.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-14);
    }
}
