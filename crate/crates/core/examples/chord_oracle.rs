//! Draws random chords of randomly oriented spheroids and compares their
//! empirical distribution with the quadrature kernel.

use spheroid_cld::oracle;
use spheroid_cld::{AngularQuadSpec, ShapeParam};

fn main() -> spheroid_cld::Result<()> {
    let samples = 1_000_000;
    for eta in [0.5, 1.0, 2.0] {
        let rep = oracle::compare(
            1e-3,
            ShapeParam::new(eta)?,
            AngularQuadSpec::default(),
            samples,
            2024,
            10,
        )?;
        println!("η = {eta}");
        for row in &rep.rows {
            println!(
                "  ℓ = {:.3e}  empirical {:.5}  kernel {:.5}  |Δ| {:.1e}  band {:.1e}",
                row.ell,
                row.empirical,
                row.kernel,
                row.deviation(),
                row.band
            );
        }
        println!(
            "  max deviation {:.2e}, inside band: {}",
            rep.max_deviation(),
            rep.all_within_band()
        );
    }
    Ok(())
}
