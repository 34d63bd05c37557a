use serde::{Deserialize, Serialize};

use super::FieldStack;

/// The three blow-up conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    /// `L_{u⁽⁰⁾,x}` reaches `L_{σ,z}^{-1}` (or, when `L_{σ,z} = 0`, `lip_blowup`).
    E0,
    /// Lipschitz blow-up of `u⁽¹⁾`.
    E1,
    /// Lipschitz blow-up of `u⁽²⁾`.
    E2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub lip_blowup: f64,
    /// Safety margin below `L_{σ,z}^{-1}` for (E0); `None` means
    /// `1e-2 · L_{σ,z}^{-1}`.
    pub e0_margin: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            lip_blowup: 1e3,
            e0_margin: None,
        }
    }
}

/// Evaluation of the blow-up conditions at one time level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SingularityDiagnostics {
    pub t: f64,
    /// `L_{σ,z}^{-1} − lip_estimates[0]`; `None` when `L_{σ,z} = 0`.
    pub e0_margin: Option<f64>,
    #[serde(deserialize_with = "nullable_values")]
    pub lip_estimates: Vec<f64>,
    #[serde(deserialize_with = "nullable_values")]
    pub sup_norms: Vec<f64>,
    pub triggered: Option<Condition>,
    /// (E2) crossed its threshold. With `L_{σ,z} = 0` this alone does not
    /// stop the sweep: (E0) or (E1) must fire for a genuine singularity.
    pub e2_crossed: bool,
    pub e2_essential: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// JSON writes non-finite numbers as `null`; they come back as NaN.
fn nullable_values<'de, D: serde::Deserializer<'de>>(de: D) -> Result<Vec<f64>, D::Error> {
    let raw: Vec<Option<f64>> = Deserialize::deserialize(de)?;
    Ok(raw.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
}

fn reached(value: f64, threshold: f64) -> bool {
    !value.is_finite() || value >= threshold
}

pub fn monitor_singularity(stack: &FieldStack, lip_sigma_z: f64, thresholds: &Thresholds) -> SingularityDiagnostics {
    let lip = &stack.lip_estimates;
    let k = lip.len() - 1;
    let (e0_margin, e0) = if lip_sigma_z > 0.0 {
        let inv = 1.0 / lip_sigma_z;
        let margin = thresholds.e0_margin.unwrap_or(1e-2 * inv);
        (Some(inv - lip[0]), reached(lip[0], inv - margin))
    } else {
        (None, reached(lip[0], thresholds.lip_blowup))
    };
    let e1 = k >= 1 && reached(lip[1], thresholds.lip_blowup);
    let e2_crossed = k >= 2 && reached(lip[2], thresholds.lip_blowup);
    let e2_essential = lip_sigma_z > 0.0;
    let triggered = if e0 {
        Some(Condition::E0)
    } else if e1 {
        Some(Condition::E1)
    } else if e2_crossed && e2_essential {
        Some(Condition::E2)
    } else {
        None
    };
    SingularityDiagnostics {
        t: stack.t,
        e0_margin,
        lip_estimates: lip.clone(),
        sup_norms: stack.sup_norms.clone(),
        triggered,
        e2_crossed,
        e2_essential,
        note: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack(lip: Vec<f64>) -> FieldStack {
        FieldStack {
            t: 0.3,
            fields: vec![Vec::new(); lip.len()],
            sup_norms: vec![0.0; lip.len()],
            lip_estimates: lip,
            generators: Vec::new(),
        }
    }

    #[test]
    fn conditions_fire_in_order() {
        let th = Thresholds::default();
        assert_eq!(monitor_singularity(&stack(vec![1.0, 2.0, 3.0]), 0.0, &th).triggered, None);
        assert_eq!(monitor_singularity(&stack(vec![1e3, 2.0]), 0.0, &th).triggered, Some(Condition::E0));
        assert_eq!(monitor_singularity(&stack(vec![1.0, 1e4]), 0.0, &th).triggered, Some(Condition::E1));
        // L = 0.5: E0 at 2 − 0.02
        assert_eq!(monitor_singularity(&stack(vec![1.99]), 0.5, &th).triggered, Some(Condition::E0));
        assert_eq!(monitor_singularity(&stack(vec![1.97]), 0.5, &th).triggered, None);
        assert_eq!(monitor_singularity(&stack(vec![f64::NAN]), 0.5, &th).triggered, Some(Condition::E0));
    }

    #[test]
    fn e2_is_non_essential_without_z_coupling() {
        let th = Thresholds::default();
        let d = monitor_singularity(&stack(vec![1.0, 1.0, 1e5]), 0.0, &th);
        assert!(d.e2_crossed && !d.e2_essential);
        assert_eq!(d.triggered, None);
        let d = monitor_singularity(&stack(vec![1.0, 1.0, 1e5]), 0.1, &th);
        assert_eq!(d.triggered, Some(Condition::E2));
    }
}
