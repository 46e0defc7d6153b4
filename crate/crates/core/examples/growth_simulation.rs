//! Two shapes growing at constant rates with nucleation at the smallest
//! radius. Prints the mass of each shape and the observed CLD along the run.

use spheroid_cld::bfn::{CldSeries, Coupling};
use spheroid_cld::recipes::ObserverExperiment;

fn main() -> spheroid_cld::Result<()> {
    let exp = ObserverExperiment::default();
    let setup = exp.setup()?;
    let coupling = Coupling::new(&setup.operator, setup.truth.last())?;
    let series: CldSeries = CldSeries::from_trajectory(&coupling, &setup.truth)?;
    let stride = setup.truth.states.len() / 5;
    for (k, state) in setup.truth.states.iter().enumerate().step_by(stride) {
        let masses: Vec<String> = (0..state.n_shapes())
            .map(|i| format!("{:.4}", state.restrict(i).integral()))
            .collect();
        let q_top = series.values[k].iter().copied().fold(0.0, f64::max);
        println!(
            "t = {:>6.0} s  mass [{}]  max Q {q_top:.4}",
            series.times[k],
            masses.join(", ")
        );
    }
    for i in 0..exp.etas.len() {
        let end = setup.truth.last().restrict(i);
        let target = exp.terminal_profile(i);
        let dev = end
            .grid
            .nodes()
            .iter()
            .zip(&end.values)
            .map(|(r, v)| (v - target(*r)).abs())
            .fold(0.0, f64::max);
        println!(
            "shape {i}: max deviation from terminal profile {:.2e} (peak {:.3e})",
            dev,
            end.max()
        );
    }
    Ok(())
}
