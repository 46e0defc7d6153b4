//! Orientation moments aₙ(η) and the even derivatives of a CLD at ℓ = 0.

use spheroid_cld::field::{DensityField, FieldKind};
use spheroid_cld::kernel::{moment_a, moment_b};
use spheroid_cld::measurement::{derivative_at_zero, moment_f};
use spheroid_cld::operator::KernelOperator;
use spheroid_cld::recipes::bimodal_psd;
use spheroid_cld::{AngularQuadSpec, Grid1D, ShapeParam};

fn main() -> spheroid_cld::Result<()> {
    let quad = AngularQuadSpec::default();
    println!("{:>4} {:>12} {:>12} {:>12}", "n", "a_n(0.5)", "a_n(1)", "a_n(2)");
    for n in [1, 2, 5, 10, 20, 40] {
        let a: Vec<f64> = [0.5, 1.0, 2.0]
            .iter()
            .map(|&e| moment_a(n, ShapeParam::new(e).unwrap(), quad))
            .collect::<spheroid_cld::Result<_>>()?;
        println!("{n:>4} {:>12.5} {:>12.5} {:>12.5}", a[0], a[1], a[2]);
    }

    // d^{2n}/dℓ^{2n} of 𝓚ψ at 0 against −(2n)!·aₙ·bₙ·𝓕ₙ(ψ)
    let shape = ShapeParam::new(2.0)?;
    let rg = Grid1D::new(1e-4, 3e-4, 200)?;
    let cg = Grid1D::new(0.0, 1.2e-3, 200)?;
    let op = KernelOperator::build(rg.clone(), cg, &[shape], quad)?;
    let psd: DensityField = bimodal_psd(&rg)?;
    assert_eq!(psd.kind, FieldKind::Psd);
    for n in 1..=3 {
        let fitted = derivative_at_zero(&op, 0, &psd.values, n, 0.1, 41)?;
        let factorial: f64 = (1..=2 * n).map(f64::from).product();
        let predicted = -factorial * moment_a(n, shape, quad)? * moment_b(n)? * moment_f(n, &psd)?;
        println!("n={n}: fitted {fitted:.6e}, predicted {predicted:.6e}");
    }
    Ok(())
}
