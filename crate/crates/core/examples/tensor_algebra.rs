//! Generalized-matrix products, (m×d)-contractions, norms and the Neumann
//! inverse `(Id − V)⁻¹` on small hand-built tensors.

use decoupling::tensor::{gm_md_contract, gm_product, neumann_inverse_apply, GeneralizedMatrix, Shape};

fn gm(dims: &[usize], values: Vec<f64>) -> decoupling::Result<GeneralizedMatrix> {
    GeneralizedMatrix::from_vec(Shape::new(dims.to_vec())?, values)
}

fn main() -> decoupling::Result<()> {
    // rank-3 times matrix: contracts the last index of `a` with the first of `b`
    let a = gm(&[2, 2, 3], (1..=12).map(f64::from).collect())?;
    let b = gm(&[3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0])?;
    let ab = gm_product(&a, &b)?;
    println!("(2×2×3)·(3×2) -> {:?}: {:?}", ab.dims(), ab.values());

    // an (m×d) pair contracted as a single index
    let (m, d) = (2, 2);
    let v = gm(&[m, d, m, d], (0..16).map(|i| 0.02 * f64::from(i % 5)).collect())?;
    let z = gm(&[m, d], vec![1.0, -1.0, 0.5, 2.0])?;
    let vz = gm_md_contract(&v, &z, m, d)?;
    println!("V:z -> {:?}: {:?}", vz.dims(), vz.values());

    println!("‖V‖_F = {:.4}, ‖V‖_op = {:.4}", v.frobenius_norm(), v.operator_norm(2)?);

    // solve (Id − V)·w = z and check the residual by hand
    let w = neumann_inverse_apply(&v, &z, 1e-14)?;
    let back = w.sub(&gm_md_contract(&v, &w, m, d)?)?;
    let residual = back.sub(&z)?.max_abs();
    println!("(Id − V)⁻¹ z = {:?}, residual {residual:.1e}", w.values());
    Ok(())
}
