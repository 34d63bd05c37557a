//! Built-in problems.
//!
//! | name             | n | m | d | μ        | σ          | f      | ξ                       |
//! |------------------|---|---|---|----------|------------|--------|-------------------------|
//! | `skorokhod`      | 2 | 1 | 1 | (0, z²)ᵀ | (1, 0)ᵀ    | 0      | g(x¹) − δ(x²)           |
//! | `burgers_blowup` | 1 | 1 | 1 | y        | 0          | 0      | a·x                     |
//! | `heat`           | 1 | 1 | 1 | 0        | 1          | 0      | sin x                   |
//! | `linear`         | 1 | 1 | 1 | c        | s          | 0      | a·x                     |
//! | `heat_quadratic` | 1 | 1 | 1 | 0        | 1          | y²/2   | sin x                   |
//! | `z_coupled`      | 1 | 1 | 1 | 0        | z/2 + b    | 0      | a·x                     |
//!
//! For `skorokhod`, `g = g_scale·tanh` and `δ = delta_scale·tanh` (defaults 1
//! and 0.1); any smooth, Lipschitz, non-decreasing `g` would do.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Coefficients, Dims, FbsdeProblem};
use crate::error::{Error, Result};
use crate::jet::Jet;

pub const REGISTRY_NAMES: [&str; 6] = [
    "skorokhod",
    "burgers_blowup",
    "heat",
    "linear",
    "heat_quadratic",
    "z_coupled",
];

/// Analytic derivatives are available to this order for every built-in.
const REGISTRY_K_MAX: usize = 4;

/// Tunable constants of the built-in problems. Unset fields take the
/// per-problem defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Scale of `g = g_scale·tanh` (skorokhod).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_scale: Option<f64>,
    /// Scale of `δ = delta_scale·tanh` (skorokhod).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_scale: Option<f64>,
    /// Terminal slope `a` (linear, burgers_blowup, z_coupled).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    /// Constant drift `c` (linear).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift: Option<f64>,
    /// Constant volatility `s` (linear).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volatility: Option<f64>,
    /// Offset `b` in `σ = z/2 + b` (z_coupled).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
}

pub fn registry_get(name: &str) -> Result<FbsdeProblem> {
    registry_get_with(name, &ProblemParams::default())
}

pub fn registry_get_with(name: &str, params: &ProblemParams) -> Result<FbsdeProblem> {
    let one = Dims::new(1, 1, 1);
    let (dims, horizon, lip, coefficients): (Dims, f64, f64, Arc<dyn Coefficients>) = match name {
        "skorokhod" => (
            Dims::new(2, 1, 1),
            1.0,
            0.0,
            Arc::new(Skorokhod {
                g_scale: params.g_scale.unwrap_or(1.0),
                delta_scale: params.delta_scale.unwrap_or(0.1),
            }),
        ),
        "burgers_blowup" => (
            one,
            1.5,
            0.0,
            Arc::new(Burgers {
                slope: params.slope.unwrap_or(1.0),
            }),
        ),
        "heat" => (one, 1.0, 0.0, Arc::new(Heat { quadratic: false })),
        "heat_quadratic" => (one, 1.0, 0.0, Arc::new(Heat { quadratic: true })),
        "linear" => (
            one,
            1.0,
            0.0,
            Arc::new(Linear {
                slope: params.slope.unwrap_or(1.0),
                drift: params.drift.unwrap_or(0.0),
                volatility: params.volatility.unwrap_or(1.0),
            }),
        ),
        "z_coupled" => (
            one,
            1.0,
            0.5,
            Arc::new(ZCoupled {
                slope: params.slope.unwrap_or(1.0),
                offset: params.offset.unwrap_or(0.0),
            }),
        ),
        other => return Err(Error::UnknownProblem(other.to_string())),
    };
    FbsdeProblem::new(
        name,
        dims,
        params.horizon.unwrap_or(horizon),
        REGISTRY_K_MAX,
        lip,
        coefficients,
    )
}

fn zero() -> Jet {
    Jet::constant(0.0)
}

#[derive(Debug)]
struct Skorokhod {
    g_scale: f64,
    delta_scale: f64,
}

impl Coefficients for Skorokhod {
    fn drift(&self, _t: f64, _x: &[Jet], _y: &[Jet], z: &[Jet]) -> Vec<Jet> {
        vec![zero(), z[0] * z[0]]
    }

    fn diffusion(&self, _t: f64, _x: &[Jet], _y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
        vec![Jet::constant(1.0), zero()]
    }

    fn driver(&self, _t: f64, _x: &[Jet], _y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
        vec![zero()]
    }

    fn terminal(&self, x: &[Jet]) -> Vec<Jet> {
        vec![x[0].tanh() * self.g_scale - x[1].tanh() * self.delta_scale]
    }
}

#[derive(Debug)]
struct Burgers {
    slope: f64,
}

impl Coefficients for Burgers {
    fn drift(&self, _t: f64, _x: &[Jet], y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
        vec![y[0]]
    }

    fn diffusion(&self, _t: f64, _x: &[Jet], _y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
        vec![zero()]
    }

    fn driver(&self, _t: f64, _x: &[Jet], _y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
        vec![zero()]
    }

    fn terminal(&self, x: &[Jet]) -> Vec<Jet> {
        vec![x[0] * self.slope]
    }

    /// Characteristics: `u = a x / (1 − a(T − t))` before the blow-up.
    fn exact(&self, horizon: f64, level: usize, t: f64, x: &[f64]) -> Option<Vec<f64>> {
        let denom = 1.0 - self.slope * (horizon - t);
        if denom <= 0.0 {
            return None;
        }
        let g = self.slope / denom;
        Some(vec![match level {
            0 => g * x[0],
            1 => g,
            _ => 0.0,
        }])
    }
}

#[derive(Debug)]
struct Heat {
    quadratic: bool,
}

impl Coefficients for Heat {
    fn drift(&self, _t: f64, _x: &[Jet], _y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
        vec![zero()]
    }

    fn diffusion(&self, _t: f64, _x: &[Jet], _y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
        vec![Jet::constant(1.0)]
    }

    fn driver(&self, _t: f64, _x: &[Jet], y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
        if self.quadratic {
            vec![y[0] * y[0] * 0.5]
        } else {
            vec![zero()]
        }
    }

    fn terminal(&self, x: &[Jet]) -> Vec<Jet> {
        vec![x[0].sin()]
    }

    /// `u⁽ⁱ⁾ = e^{−(T−t)/2} ∂ⁱ sin x` for the linear equation.
    fn exact(&self, horizon: f64, level: usize, t: f64, x: &[f64]) -> Option<Vec<f64>> {
        if self.quadratic {
            return None;
        }
        let decay = (-(horizon - t) / 2.0).exp();
        let (s, c) = x[0].sin_cos();
        Some(vec![decay * [s, c, -s, -c][level % 4]])
    }
}

#[derive(Debug)]
struct Linear {
    slope: f64,
    drift: f64,
    volatility: f64,
}

impl Coefficients for Linear {
    fn drift(&self, _t: f64, _x: &[Jet], _y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
        vec![Jet::constant(self.drift)]
    }

    fn diffusion(&self, _t: f64, _x: &[Jet], _y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
        vec![Jet::constant(self.volatility)]
    }

    fn driver(&self, _t: f64, _x: &[Jet], _y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
        vec![zero()]
    }

    fn terminal(&self, x: &[Jet]) -> Vec<Jet> {
        vec![x[0] * self.slope]
    }

    fn exact(&self, horizon: f64, level: usize, t: f64, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![match level {
            0 => self.slope * (x[0] + self.drift * (horizon - t)),
            1 => self.slope,
            _ => 0.0,
        }])
    }
}

#[derive(Debug)]
struct ZCoupled {
    slope: f64,
    offset: f64,
}

impl Coefficients for ZCoupled {
    fn drift(&self, _t: f64, _x: &[Jet], _y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
        vec![zero()]
    }

    fn diffusion(&self, _t: f64, _x: &[Jet], _y: &[Jet], z: &[Jet]) -> Vec<Jet> {
        vec![z[0] * 0.5 + self.offset]
    }

    fn driver(&self, _t: f64, _x: &[Jet], _y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
        vec![zero()]
    }

    fn terminal(&self, x: &[Jet]) -> Vec<Jet> {
        vec![x[0] * self.slope]
    }
}
