//! Recovers a two-peak PSD (η = 2) from a CLD with 2% noise for three
//! regularization strengths.

use spheroid_cld::recipes::{interior_maxima, relative_l2_error, TikhonovExperiment};

fn main() -> spheroid_cld::Result<()> {
    let exp = TikhonovExperiment {
        seed: std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0),
        ..TikhonovExperiment::default()
    };
    let run = exp.run()?;
    println!("truth peak {:.4e}", run.truth.max());
    for (delta, sol) in &run.solutions {
        let maxima: Vec<String> = interior_maxima(&sol.psd, 0.1)
            .iter()
            .map(|m| format!("{m:.3e}"))
            .collect();
        println!(
            "δ = {delta:.0e}: error {:.3}, peak {:.4e}, residual {:.3e}, iterations {}, maxima [{}]",
            relative_l2_error(&sol.psd, &run.truth),
            sol.psd.max(),
            sol.residual_norm,
            sol.iterations,
            maxima.join(", ")
        );
    }
    Ok(())
}
