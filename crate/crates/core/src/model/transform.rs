use std::sync::Arc;

use super::{Coefficients, FbsdeProblem};
use crate::error::{Error, Result};
use crate::jet::Jet;

/// Coefficients of the problem seen through the spatial rescaling `x ↦ λx`:
///
/// ```text
/// ξ̄(x) = ξ(x/λ),  μ̄ = λ μ(t, x/λ, y, z),  σ̄ = λ σ(t, x/λ, y, z),  f̄ = f(t, x/λ, y, z)
/// ```
///
/// If `(u⁽⁰⁾, …, u⁽ᵏ⁾)` is a decoupling field of the original problem then
/// `ūⁱ(t, x) = λ^{-i} u⁽ⁱ⁾(t, x/λ)` is one of the rescaled problem.
#[derive(Debug)]
pub struct ScaledCoefficients {
    inner: Arc<dyn Coefficients>,
    lambda: f64,
}

impl ScaledCoefficients {
    fn unscale(&self, x: &[Jet]) -> Vec<Jet> {
        x.iter().map(|&v| v / self.lambda).collect()
    }
}

impl Coefficients for ScaledCoefficients {
    fn drift(&self, t: f64, x: &[Jet], y: &[Jet], z: &[Jet]) -> Vec<Jet> {
        let xs = self.unscale(x);
        self.inner
            .drift(t, &xs, y, z)
            .into_iter()
            .map(|v| v * self.lambda)
            .collect()
    }

    fn diffusion(&self, t: f64, x: &[Jet], y: &[Jet], z: &[Jet]) -> Vec<Jet> {
        let xs = self.unscale(x);
        self.inner
            .diffusion(t, &xs, y, z)
            .into_iter()
            .map(|v| v * self.lambda)
            .collect()
    }

    fn driver(&self, t: f64, x: &[Jet], y: &[Jet], z: &[Jet]) -> Vec<Jet> {
        self.inner.driver(t, &self.unscale(x), y, z)
    }

    fn terminal(&self, x: &[Jet]) -> Vec<Jet> {
        self.inner.terminal(&self.unscale(x))
    }
}

impl FbsdeProblem {
    /// The problem rescaled by `λ > 0` in space (see [`ScaledCoefficients`]).
    /// `L_{σ,z}` scales by `λ`.
    pub fn scaled(&self, lambda: f64) -> Result<FbsdeProblem> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("scaling factor {lambda}")));
        }
        FbsdeProblem::new(
            format!("{}@{lambda}", self.name()),
            self.dims(),
            self.horizon(),
            self.k_max(),
            self.lip_sigma_z() * lambda,
            Arc::new(ScaledCoefficients {
                inner: self.coefficients().clone(),
                lambda,
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use crate::model::registry_get;

    #[test]
    fn scaled_heat_has_doubled_volatility() {
        let p = registry_get("heat").unwrap().scaled(2.0).unwrap();
        assert_eq!(p.diffusion(0.0, &[1.0], &[0.0], &[0.0]), vec![2.0]);
        assert!((p.terminal(&[1.0])[0] - 0.5f64.sin()).abs() < 1e-15);
        assert!(registry_get("heat").unwrap().scaled(0.0).is_err());
    }
}
