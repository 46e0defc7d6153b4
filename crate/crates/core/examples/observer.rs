//! Back-and-forth nudging on the two-shape growth run: recovers both PSDs
//! from the CLD series alone, starting from zero.

use spheroid_cld::bfn::BfnConfig;
use spheroid_cld::recipes::{interior_maxima, ObserverExperiment};

fn main() -> spheroid_cld::Result<()> {
    let exp = ObserverExperiment::default();
    let setup = exp.setup()?;
    let out = setup.run(BfnConfig::default())?;
    let rep = &out.report;
    println!("μ = {:.3e}, dt = {} s, {} steps per sweep", rep.mu, rep.dt, rep.n_steps);
    for (n, e) in rep.error_series().iter().step_by(5) {
        println!("n = {n:>3}  ‖ψ̂ − ψ‖(t_max) = {e:.4e}");
    }
    if let Some((c, rate)) = rep.fit {
        println!("error ≈ {c:.3e}·{rate:.4}ⁿ");
    }
    for i in 0..exp.etas.len() {
        let est = out.forward.last().restrict(i);
        println!(
            "shape {i}: maxima of the estimate at t_max {:?}",
            interior_maxima(&est, 0.1)
        );
    }
    Ok(())
}
