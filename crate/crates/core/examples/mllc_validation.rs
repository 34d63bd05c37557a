//! Sampled check of the multilevel Lipschitz conditions for every built-in
//! problem on a probe box around the origin.

use decoupling::model::{registry_get, validate_mllc, ProbeBox, REGISTRY_NAMES};

fn main() -> decoupling::Result<()> {
    for name in REGISTRY_NAMES {
        let problem = registry_get(name)?;
        let probe = ProbeBox::cube(&problem, 1.0, 1.0);
        let report = validate_mllc(&problem, 2, &probe, 200);
        println!(
            "{name:<15} passes {:<5} L_ξ,x {:.3}  L_σ,z {:.3} (sampled {:.3})  product {:.3}",
            report.passes, report.lip_xi_x, report.lip_sigma_z_declared, report.lip_sigma_z_sampled, report.coupling_product
        );
        for failure in &report.failures {
            println!("    {failure}");
        }
    }
    Ok(())
}
