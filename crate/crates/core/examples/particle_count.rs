//! Turns a normalized PSD and a solid concentration into a particle count.

use spheroid_cld::field::{DensityField, FieldKind};
use spheroid_cld::measurement::{estimate_particle_count, ConcentrationData};
use spheroid_cld::{Grid1D, ShapeParam};

fn main() -> spheroid_cld::Result<()> {
    let grid = Grid1D::new(1e-4, 3e-4, 200)?;
    let psd = DensityField::from_fn(grid, FieldKind::Psd, |r| (-((r - 2e-4) / 3e-5f64).powi(2)).exp())?.normalized()?;
    // 10 g of solid per kg of solvent, density 2000 kg/m³, 1 kg of solvent
    let c = ConcentrationData::new(0.01, 2000.0, 1.0)?;
    for eta in [0.5, 1.0, 2.0] {
        let n = estimate_particle_count(&c, ShapeParam::new(eta)?, &psd)?;
        println!("η = {eta}: {n:.4e} particles");
    }
    Ok(())
}
