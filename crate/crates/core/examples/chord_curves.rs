//! Cumulative chord length curves of a single particle of radius 1 mm
//! for a few aspect ratios.

use spheroid_cld::kernel::OrientationTable;
use spheroid_cld::{AngularQuadSpec, ShapeParam};

fn main() -> spheroid_cld::Result<()> {
    let r = 1e-3;
    let etas = [0.25, 0.5, 1.0, 2.0, 4.0];
    let tables: Vec<_> = etas
        .iter()
        .map(|&e| Ok(OrientationTable::new(ShapeParam::new(e)?, AngularQuadSpec::default())))
        .collect::<spheroid_cld::Result<_>>()?;

    print!("{:>10}", "ell [mm]");
    for e in etas {
        print!("{:>10}", format!("η={e}"));
    }
    println!();
    for j in 0..=16 {
        let ell = j as f64 * 0.5e-3;
        print!("{:>10.2}", ell * 1e3);
        for t in &tables {
            print!("{:>10.4}", t.kernel(ell, r));
        }
        println!();
    }
    // the sphere has a closed form
    let ell = 1.3e-3;
    let exact = 1.0 - (1.0 - (ell / (2.0 * r)).powi(2)).sqrt();
    println!("sphere at 1.3 mm: {:.12} vs {:.12}", tables[2].kernel(ell, r), exact);
    Ok(())
}
