//! Sampled check of the (k-)MLLC regularity hypotheses on a probe region.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate_coefficients, DerivativeBundle, FbsdeProblem};

const SEED: u64 = 0x6d6c_6c63;
const COARSE_SEGMENTS: usize = 16;
const FINE_SEGMENTS: usize = 256;
/// A scan slope that keeps growing this much under refinement indicates a jump.
const DIVERGENCE_RATIO: f64 = 4.0;
const DIVERGENCE_FLOOR: f64 = 1e-6;

/// Region on which the coefficients are probed: `[t₀, t₁] × ∏[xᵢ] × ∏[yᵢ] × {|zⱼ| ≤ r}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeBox {
    pub t: [f64; 2],
    pub x: Vec<[f64; 2]>,
    pub y: Vec<[f64; 2]>,
    pub z_radius: f64,
}

impl ProbeBox {
    /// Same interval for every state and backward coordinate.
    pub fn cube(problem: &FbsdeProblem, half_width: f64, z_radius: f64) -> Self {
        let dims = problem.dims();
        Self {
            t: [0.0, problem.horizon()],
            x: vec![[-half_width, half_width]; dims.n],
            y: vec![[-half_width, half_width]; dims.m],
            z_radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub coefficient: String,
    /// Derivative order whose Lipschitz constant is estimated.
    pub order: usize,
    pub estimate: f64,
    /// The line-scan slope grew without bound under refinement.
    pub divergent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MllcReport {
    pub k: usize,
    pub passes: bool,
    pub estimates: Vec<LipschitzEstimate>,
    pub lip_xi_x: f64,
    pub lip_sigma_z_declared: f64,
    pub lip_sigma_z_sampled: f64,
    /// `L_{ξ,x} · max(declared, sampled L_{σ,z})`
    pub coupling_product: f64,
    /// `1 − coupling_product`
    pub margin: f64,
    pub failures: Vec<String>,
}

struct Point {
    t: f64,
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
}

impl Point {
    fn coords(&self) -> Vec<f64> {
        self.x.iter().chain(&self.y).chain(&self.z).copied().collect()
    }

    fn with_coords(&self, c: &[f64], n: usize, m: usize) -> Point {
        Point {
            t: self.t,
            x: c[..n].to_vec(),
            y: c[n..n + m].to_vec(),
            z: c[n + m..].to_vec(),
        }
    }
}

const NAMES: [&str; 4] = ["mu", "sigma", "f", "xi"];

/// Flattened order-`j` partials of each coefficient, in [`NAMES`] order.
fn features(bundle: &DerivativeBundle, j: usize) -> [Vec<f64>; 4] {
    let collect = |c: &super::CoefficientDerivatives| -> Vec<f64> {
        c.partials
            .iter()
            .filter(|(key, _)| key.len() == j)
            .flat_map(|(_, g)| g.values().iter().copied())
            .collect()
    };
    [
        collect(&bundle.drift),
        collect(&bundle.diffusion),
        collect(&bundle.driver),
        collect(&bundle.terminal),
    ]
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

/// Sampled Lipschitz estimates of `μ, σ, f, ξ` and their derivatives up to
/// order `k` on `probe`, plus the coupling verdict `L_{ξ,x} L_{σ,z} < 1`.
/// Deterministic: the sample stream is fixed.
pub fn validate_mllc(problem: &FbsdeProblem, k: usize, probe: &ProbeBox, samples: usize) -> MllcReport {
    let dims = problem.dims();
    let (n, m) = (dims.n, dims.m);
    let mut failures = Vec::new();
    let declared = problem.lip_sigma_z();
    let mut report = MllcReport {
        k,
        passes: false,
        estimates: Vec::new(),
        lip_xi_x: f64::NAN,
        lip_sigma_z_declared: declared,
        lip_sigma_z_sampled: f64::NAN,
        coupling_product: f64::NAN,
        margin: f64::NAN,
        failures: Vec::new(),
    };
    if probe.x.len() != n || probe.y.len() != m || !(probe.z_radius >= 0.0) || samples < 2 {
        report
            .failures
            .push(format!("probe box or sample count incompatible with dims {dims:?}"));
        return report;
    }
    if k > problem.k_max() {
        report
            .failures
            .push(format!("order {k} exceeds supported order {}", problem.k_max()));
        return report;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let uniform = |lo: f64, hi: f64, rng: &mut ChaCha8Rng| {
        if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        }
    };
    let draw = |rng: &mut ChaCha8Rng| Point {
        t: uniform(probe.t[0], probe.t[1], rng),
        x: probe.x.iter().map(|b| uniform(b[0], b[1], rng)).collect(),
        y: probe.y.iter().map(|b| uniform(b[0], b[1], rng)).collect(),
        z: (0..dims.m * dims.d)
            .map(|_| uniform(-probe.z_radius, probe.z_radius, rng))
            .collect(),
    };

    let eval = |p: &Point| evaluate_coefficients(problem, p.t, &p.x, &p.y, &p.z, k);

    // best[c][j]: largest difference quotient of order-j partials of coefficient c
    let mut best = vec![vec![0.0f64; k + 1]; 4];
    let mut divergent = vec![vec![false; k + 1]; 4];
    let mut lip_sigma_z = 0.0f64;
    let record_pair = |a: &DerivativeBundle, b: &DerivativeBundle, pa: &Point, pb: &Point, best: &mut Vec<Vec<f64>>| {
        let d_full = dist(&pa.coords(), &pb.coords());
        let d_x = dist(&pa.x, &pb.x);
        for j in 0..=k {
            let (fa, fb) = (features(a, j), features(b, j));
            for c in 0..4 {
                let denom = if c == 3 { d_x } else { d_full };
                if denom > 0.0 {
                    best[c][j] = best[c][j].max(dist(&fa[c], &fb[c]) / denom);
                }
            }
        }
    };

    let mut failed_eval = false;
    for _ in 0..samples {
        let pa = draw(&mut rng);
        let mut pb = draw(&mut rng);
        pb.t = pa.t;
        // a z-only perturbation of pa for the L_{σ,z} estimate
        let mut pz = Point {
            t: pa.t,
            x: pa.x.clone(),
            y: pa.y.clone(),
            z: pb.z.clone(),
        };
        if pz.z == pa.z {
            pz.z.iter_mut().for_each(|v| *v += 1e-3);
        }
        match (eval(&pa), eval(&pb), eval(&pz)) {
            (Ok(a), Ok(b), Ok(z)) => {
                record_pair(&a, &b, &pa, &pb, &mut best);
                let dz = dist(&pa.z, &pz.z);
                if dz > 0.0 {
                    let q = dist(a.diffusion.value().values(), z.diffusion.value().values()) / dz;
                    lip_sigma_z = lip_sigma_z.max(q);
                }
            }
            (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => {
                failures.push(format!("evaluation failed: {e}"));
                failed_eval = true;
                break;
            }
        }
    }

    // Axis line scans through the centre at two resolutions.
    if !failed_eval {
        let centre = Point {
            t: 0.5 * (probe.t[0] + probe.t[1]),
            x: probe.x.iter().map(|b| 0.5 * (b[0] + b[1])).collect(),
            y: probe.y.iter().map(|b| 0.5 * (b[0] + b[1])).collect(),
            z: vec![0.0; dims.m * dims.d],
        };
        let base = centre.coords();
        let bounds: Vec<[f64; 2]> = probe
            .x
            .iter()
            .chain(&probe.y)
            .copied()
            .chain(std::iter::repeat_n([-probe.z_radius, probe.z_radius], dims.m * dims.d))
            .collect();
        'axes: for (axis, b) in bounds.iter().enumerate() {
            if b[1] <= b[0] {
                continue;
            }
            let mut slopes = [vec![vec![0.0f64; k + 1]; 4], vec![vec![0.0f64; k + 1]; 4]];
            for (res, &segments) in [COARSE_SEGMENTS, FINE_SEGMENTS].iter().enumerate() {
                let step = (b[1] - b[0]) / segments as f64;
                let mut prev: Option<Vec<Vec<f64>>> = None;
                for s in 0..=segments {
                    let mut c = base.clone();
                    c[axis] = b[0] + step * s as f64;
                    let p = centre.with_coords(&c, n, m);
                    let bundle = match eval(&p) {
                        Ok(bd) => bd,
                        Err(e) => {
                            failures.push(format!("evaluation failed on scan: {e}"));
                            break 'axes;
                        }
                    };
                    let feats: Vec<Vec<f64>> = (0..=k)
                        .flat_map(|j| features(&bundle, j))
                        .collect();
                    if let Some(pf) = &prev {
                        for j in 0..=k {
                            for cidx in 0..4 {
                                if cidx == 3 && axis >= n {
                                    continue;
                                }
                                let q = dist(&feats[j * 4 + cidx], &pf[j * 4 + cidx]) / step;
                                let slot = &mut slopes[res][cidx][j];
                                *slot = slot.max(q);
                            }
                        }
                    }
                    prev = Some(feats);
                }
            }
            for cidx in 0..4 {
                for j in 0..=k {
                    let (coarse, fine) = (slopes[0][cidx][j], slopes[1][cidx][j]);
                    if fine > DIVERGENCE_RATIO * coarse.max(DIVERGENCE_FLOOR) {
                        divergent[cidx][j] = true;
                    }
                    best[cidx][j] = best[cidx][j].max(fine);
                }
            }
        }
    }

    for (cidx, name) in NAMES.iter().enumerate() {
        for j in 0..=k {
            let estimate = best[cidx][j];
            if !estimate.is_finite() {
                failures.push(format!("{name}: order-{j} Lipschitz estimate is not finite"));
            }
            if divergent[cidx][j] {
                failures.push(format!(
                    "{name}: order-{j} derivative is not Lipschitz on the probe box (difference quotients diverge)"
                ));
            }
            report.estimates.push(LipschitzEstimate {
                coefficient: name.to_string(),
                order: j,
                estimate,
                divergent: divergent[cidx][j],
            });
        }
    }

    let lip_xi_x = best[3][0];
    let lip_sz = declared.max(lip_sigma_z);
    let product = if lip_sz == 0.0 { 0.0 } else { lip_xi_x * lip_sz };
    if !(product < 1.0) {
        failures.push(format!("L_xi_x * L_sigma_z = {product} is not below 1"));
    }
    report.lip_xi_x = lip_xi_x;
    report.lip_sigma_z_sampled = lip_sigma_z;
    report.coupling_product = product;
    report.margin = 1.0 - product;
    report.passes = failures.is_empty();
    report.failures = failures;
    report
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::jet::Jet;
    use crate::model::{registry_get, Coefficients, Dims};

    #[derive(Debug)]
    struct AbsTerminal;

    impl Coefficients for AbsTerminal {
        fn drift(&self, _t: f64, _x: &[Jet], _y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
            vec![Jet::constant(0.0)]
        }
        fn diffusion(&self, _t: f64, _x: &[Jet], _y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
            vec![Jet::constant(1.0)]
        }
        fn driver(&self, _t: f64, _x: &[Jet], _y: &[Jet], _z: &[Jet]) -> Vec<Jet> {
            vec![Jet::constant(0.0)]
        }
        fn terminal(&self, x: &[Jet]) -> Vec<Jet> {
            vec![x[0].abs()]
        }
    }

    #[test]
    fn skorokhod_passes_every_order() {
        let p = registry_get("skorokhod").unwrap();
        let probe = ProbeBox::cube(&p, 2.0, 1.0);
        for k in 0..=3 {
            let r = validate_mllc(&p, k, &probe, 50);
            assert!(r.passes, "k={k}: {:?}", r.failures);
            assert_eq!(r.lip_sigma_z_sampled, 0.0);
            assert!((r.lip_xi_x - 1.0).abs() < 0.05, "{}", r.lip_xi_x);
        }
    }

    #[test]
    fn kink_in_terminal_fails_first_order() {
        let p = FbsdeProblem::new("abs", Dims::new(1, 1, 1), 1.0, 2, 0.0, Arc::new(AbsTerminal)).unwrap();
        let probe = ProbeBox::cube(&p, 1.0, 1.0);
        assert!(validate_mllc(&p, 0, &probe, 50).passes);
        let r = validate_mllc(&p, 1, &probe, 50);
        assert!(!r.passes);
        assert!(r.failures.iter().any(|f| f.starts_with("xi: order-1")), "{:?}", r.failures);
    }

    #[test]
    fn z_coupled_problem_passes_with_half_product() {
        let p = registry_get("z_coupled").unwrap();
        let r = validate_mllc(&p, 0, &ProbeBox::cube(&p, 1.0, 2.0), 50);
        assert!(r.passes, "{:?}", r.failures);
        assert!((r.lip_sigma_z_sampled - 0.5).abs() < 1e-12);
        assert!((r.coupling_product - 0.5).abs() < 1e-9);
    }

    #[test]
    fn too_large_coupling_fails() {
        let params = crate::model::ProblemParams {
            slope: Some(3.0),
            ..Default::default()
        };
        let p = crate::model::registry_get_with("z_coupled", &params).unwrap();
        let r = validate_mllc(&p, 0, &ProbeBox::cube(&p, 1.0, 2.0), 20);
        assert!(!r.passes);
        assert!(r.coupling_product > 1.0);
    }
}
