//! Monte-Carlo check of the chord kernel: sample chords of randomly
//! oriented spheroids and compare the empirical CDF with `kernel_value`.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{mc_chord_sample, ShapeParam};
use crate::kernel::OrientationTable;
use crate::quadrature::AngularQuadSpec;

const CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub ell: f64,
    pub empirical: f64,
    pub kernel: f64,
    /// `4·√(p(1−p)/N) + 10⁻⁵`.
    pub band: f64,
}

impl OracleRow {
    pub fn deviation(&self) -> f64 {
        (self.empirical - self.kernel).abs()
    }

    pub fn within_band(&self) -> bool {
        self.deviation() < self.band
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub eta: f64,
    pub r: f64,
    pub samples: usize,
    pub seed: u64,
    pub rows: Vec<OracleRow>,
}

impl OracleReport {
    pub fn max_deviation(&self) -> f64 {
        self.rows.iter().map(OracleRow::deviation).fold(0.0, f64::max)
    }

    pub fn all_within_band(&self) -> bool {
        self.rows.iter().all(OracleRow::within_band)
    }
}

/// Writes several reports as one `eta,ell,empirical,kernel,deviation,band`
/// table.
pub fn write_csv(reports: &[OracleReport], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "eta,ell,empirical,kernel,deviation,band").expect("write to Vec");
    for rep in reports {
        for row in &rep.rows {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e}",
                rep.eta,
                row.ell,
                row.empirical,
                row.kernel,
                row.deviation(),
                row.band
            )
            .expect("write to Vec");
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Probe chord lengths at the midpoints of `n` equal cells of
/// `[0, max chord]`.
pub fn probe_lengths(r: f64, shape: ShapeParam, n: usize) -> Vec<f64> {
    let top = shape.max_chord_factor() * r;
    (0..n).map(|k| (k as f64 + 0.5) / n as f64 * top).collect()
}

/// Empirical CDF of `samples` chords at `probes`.
///
/// Chunks of 2¹⁶ samples use independent ChaCha streams of `seed`, so the
/// result does not depend on the thread count.
pub fn empirical_cdf(r: f64, shape: ShapeParam, samples: usize, seed: u64, probes: &[f64]) -> Result<Vec<f64>> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!("radius must be positive, got {r}")));
    }
    if samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    if probes.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("probe lengths must be sorted"));
    }
    let chunks = samples.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = CHUNK.min(samples - c * CHUNK);
            let mut below = vec![0u64; probes.len() + 1];
            for _ in 0..n {
                let l = mc_chord_sample(r, shape, &mut rng);
                below[probes.partition_point(|&p| p < l)] += 1;
            }
            below
        })
        .reduce(
            || vec![0u64; probes.len() + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let mut acc = 0u64;
    Ok(counts[..probes.len()]
        .iter()
        .map(|c| {
            acc += c;
            acc as f64 / samples as f64
        })
        .collect())
}

pub fn compare(
    r: f64,
    shape: ShapeParam,
    quad: AngularQuadSpec,
    samples: usize,
    seed: u64,
    n_probes: usize,
) -> Result<OracleReport> {
    let probes = probe_lengths(r, shape, n_probes);
    let empirical = empirical_cdf(r, shape, samples, seed, &probes)?;
    let table = OrientationTable::new(shape, quad);
    let rows = probes
        .iter()
        .zip(empirical)
        .map(|(&ell, p)| {
            let k = table.kernel(ell, r);
            OracleRow {
                ell,
                empirical: p,
                kernel: k,
                band: 4.0 * (k * (1.0 - k) / samples as f64).sqrt() + 1e-5,
            }
        })
        .collect();
    Ok(OracleReport {
        eta: shape.eta(),
        r,
        samples,
        seed,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_is_monotone_and_reproducible() {
        let s = ShapeParam::new(2.0).unwrap();
        let probes = probe_lengths(1e-3, s, 10);
        let a = empirical_cdf(1e-3, s, 100_000, 7, &probes).unwrap();
        let b = empirical_cdf(1e-3, s, 100_000, 7, &probes).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[1] >= w[0]));
        assert!(*a.last().unwrap() <= 1.0);
        let c = empirical_cdf(1e-3, s, 100_000, 8, &probes).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sphere_matches_kernel() {
        let rep = compare(1e-3, ShapeParam::SPHERE, AngularQuadSpec::default(), 200_000, 1, 12).unwrap();
        assert!(rep.all_within_band(), "{rep:?}");
    }

    #[test]
    fn rejects_bad_input() {
        let s = ShapeParam::SPHERE;
        assert!(empirical_cdf(0.0, s, 10, 0, &[0.1]).is_err());
        assert!(empirical_cdf(1.0, s, 0, 0, &[0.1]).is_err());
        assert!(empirical_cdf(1.0, s, 10, 0, &[0.2, 0.1]).is_err());
    }
}
