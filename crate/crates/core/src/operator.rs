//! Discretized PSD → cumulative CLD map `𝓚` for one or several shapes, and
//! its adjoint.
//!
//! Block `i` stores the raw kernel `k_i(ℓ_j, r_m)`; the radial trapezoid
//! weights are applied on the fly, so
//! `(𝓚ψ)(ℓ_j) = Σ_i Σ_m k_i(ℓ_j, r_m) w_m ψ_i(r_m)` and
//! `(𝓚*Q)_i(r_m) = Σ_j k_i(ℓ_j, r_m) ω_j Q(ℓ_j)` with chord weights `ω_j`.
//! These are exact adjoints for the weighted inner products of the grids.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{DensityField, FieldKind};
use crate::geometry::ShapeParam;
use crate::grid::Grid1D;
use crate::kernel::{OrientationTable, DEFAULT_RADIUS_FLOOR};
use crate::quadrature::AngularQuadSpec;

#[derive(Debug, Clone)]
pub struct KernelOperator {
    radial_grid: Grid1D,
    chord_grid: Grid1D,
    shapes: Vec<ShapeParam>,
    quad: AngularQuadSpec,
    blocks: Vec<DMatrix<f64>>,
    truncated: bool,
}

const CACHE_MAGIC: &[u8; 8] = b"SPHCLDK1";

impl KernelOperator {
    pub fn build(
        radial_grid: Grid1D,
        chord_grid: Grid1D,
        shapes: &[ShapeParam],
        quad: AngularQuadSpec,
    ) -> Result<Self> {
        if shapes.is_empty() {
            return Err(Error::invalid("operator needs at least one shape"));
        }
        if radial_grid.lo() <= DEFAULT_RADIUS_FLOOR {
            return Err(Error::invalid(format!(
                "radial grid must start above {DEFAULT_RADIUS_FLOOR:e} m (got {:e})",
                radial_grid.lo()
            )));
        }
        if chord_grid.lo() != 0.0 {
            return Err(Error::invalid("chord grid must start at 0"));
        }
        let needed = shapes
            .iter()
            .map(|s| s.max_chord_factor() * radial_grid.hi())
            .fold(0.0, f64::max);
        if chord_grid.hi() < needed * (1.0 - 1e-12) {
            return Err(Error::ChordGridTooShort {
                chord_hi: chord_grid.hi(),
                needed,
            });
        }
        let radii = radial_grid.nodes();
        let ells = chord_grid.nodes();
        let blocks = shapes
            .iter()
            .map(|&shape| {
                let table = OrientationTable::new(shape, quad);
                let columns: Vec<Vec<f64>> = radii
                    .par_iter()
                    .map(|&r| ells.iter().map(|&l| table.kernel(l, r)).collect())
                    .collect();
                DMatrix::from_fn(ells.len(), radii.len(), |j, m| columns[m][j])
            })
            .collect();
        Ok(Self {
            radial_grid,
            chord_grid,
            shapes: shapes.to_vec(),
            quad,
            blocks,
            truncated: false,
        })
    }

    /// Sets `k_i(ℓ, r) = 0` for `ℓ` beyond the largest chord of shape `i`
    /// on the radial grid, `2 r_max η_i` for oblate shapes.
    ///
    /// With several shapes this makes the shorter-chord shapes vanish from
    /// the tail of `Q`. Columns of the truncated blocks are no longer
    /// monotone.
    pub fn truncated_to_support(mut self) -> Self {
        if self.truncated {
            return self;
        }
        let ells = self.chord_grid.nodes();
        let r_hi = self.radial_grid.hi();
        for (shape, block) in self.shapes.iter().zip(self.blocks.iter_mut()) {
            let cutoff = shape.max_chord_factor() * r_hi * (1.0 + 1e-12);
            for (j, &l) in ells.iter().enumerate() {
                if l > cutoff {
                    block.row_mut(j).fill(0.0);
                }
            }
        }
        self.truncated = true;
        self
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    /// Builds through an on-disk cache keyed by [`KernelOperator::cache_key`].
    pub fn build_cached(
        cache_dir: &Path,
        radial_grid: Grid1D,
        chord_grid: Grid1D,
        shapes: &[ShapeParam],
        quad: AngularQuadSpec,
    ) -> Result<Self> {
        let key = cache_key(&radial_grid, &chord_grid, shapes, quad);
        let path = cache_dir.join(format!("kernel-{key}.bin"));
        if path.exists() {
            if let Ok(op) = Self::load(&path) {
                if op.cache_key() == key && !op.truncated {
                    return Ok(op);
                }
            }
        }
        let op = Self::build(radial_grid, chord_grid, shapes, quad)?;
        fs::create_dir_all(cache_dir).map_err(|e| Error::io(format!("creating {}", cache_dir.display()), e))?;
        op.save(&path)?;
        Ok(op)
    }

    pub fn radial_grid(&self) -> &Grid1D {
        &self.radial_grid
    }

    pub fn chord_grid(&self) -> &Grid1D {
        &self.chord_grid
    }

    pub fn shapes(&self) -> &[ShapeParam] {
        &self.shapes
    }

    pub fn quad(&self) -> AngularQuadSpec {
        self.quad
    }

    pub fn n_shapes(&self) -> usize {
        self.shapes.len()
    }

    /// Raw kernel block `k_i(ℓ_j, r_m)` (rows: chord nodes, columns: radii).
    pub fn kernel_block(&self, shape: usize) -> &DMatrix<f64> {
        &self.blocks[shape]
    }

    /// Block including the radial quadrature weights, `k_i(ℓ_j, r_m)·w_m`.
    pub fn weighted_block(&self, shape: usize) -> DMatrix<f64> {
        let w = self.radial_grid.weights();
        let mut m = self.blocks[shape].clone();
        for (c, mut col) in m.column_iter_mut().enumerate() {
            col *= w[c];
        }
        m
    }

    pub fn cache_key(&self) -> String {
        cache_key(&self.radial_grid, &self.chord_grid, &self.shapes, self.quad)
    }

    /// `Σ_i 𝓚_i ψ_i` on raw value slices.
    pub fn apply_values(&self, psd: &[&[f64]]) -> Result<Vec<f64>> {
        if psd.len() != self.shapes.len() {
            return Err(Error::GridMismatch(format!(
                "{} PSD blocks for {} shapes",
                psd.len(),
                self.shapes.len()
            )));
        }
        let w = self.radial_grid.weights();
        let mut out = vec![0.0; self.chord_grid.len()];
        for (block, values) in self.blocks.iter().zip(psd) {
            if values.len() != w.len() {
                return Err(Error::GridMismatch(format!(
                    "PSD has {} values, radial grid has {} nodes",
                    values.len(),
                    w.len()
                )));
            }
            for (m, (v, wm)) in values.iter().zip(w).enumerate() {
                let c = v * wm;
                if c == 0.0 {
                    continue;
                }
                for (o, k) in out.iter_mut().zip(block.column(m).iter()) {
                    *o += k * c;
                }
            }
        }
        Ok(out)
    }

    /// Cumulative CLD of a (multi-shape) PSD.
    pub fn apply(&self, psd: &[DensityField]) -> Result<DensityField> {
        for f in psd {
            if !f.grid.same_as(&self.radial_grid) {
                return Err(Error::GridMismatch(
                    "PSD grid differs from the operator radial grid".into(),
                ));
            }
        }
        let slices: Vec<&[f64]> = psd.iter().map(|f| f.values.as_slice()).collect();
        let values = self.apply_values(&slices)?;
        DensityField::new(self.chord_grid.clone(), values, FieldKind::CumulativeCld)
    }

    /// `(𝓚*Q)_i` on raw value slices, one vector per shape.
    pub fn adjoint_values(&self, q: &[f64]) -> Result<Vec<Vec<f64>>> {
        let wl = self.chord_grid.weights();
        if q.len() != wl.len() {
            return Err(Error::GridMismatch(format!(
                "CLD has {} values, chord grid has {} nodes",
                q.len(),
                wl.len()
            )));
        }
        let weighted: Vec<f64> = q.iter().zip(wl).map(|(a, b)| a * b).collect();
        Ok(self
            .blocks
            .iter()
            .map(|block| {
                block
                    .column_iter()
                    .map(|col| col.iter().zip(&weighted).map(|(k, x)| k * x).sum())
                    .collect()
            })
            .collect())
    }

    pub fn apply_adjoint(&self, q: &DensityField) -> Result<Vec<DensityField>> {
        if !q.grid.same_as(&self.chord_grid) {
            return Err(Error::GridMismatch(
                "CLD grid differs from the operator chord grid".into(),
            ));
        }
        self.adjoint_values(&q.values)?
            .into_iter()
            .map(|v| DensityField::new(self.radial_grid.clone(), v, FieldKind::Psd))
            .collect()
    }

    /// `(𝓚_i ψ)(ℓ)` at an arbitrary chord length, with the kernel evaluated
    /// directly rather than read from the assembled block.
    pub fn evaluate_at(&self, shape: usize, psd: &[f64], ells: &[f64]) -> Result<Vec<f64>> {
        if psd.len() != self.radial_grid.len() {
            return Err(Error::GridMismatch("PSD length differs from the radial grid".into()));
        }
        let table = OrientationTable::new(self.shapes[shape], self.quad);
        let radii = self.radial_grid.nodes();
        let w = self.radial_grid.weights();
        let cutoff = self.shapes[shape].max_chord_factor() * self.radial_grid.hi() * (1.0 + 1e-12);
        Ok(ells
            .par_iter()
            .map(|&l| {
                let support = if self.truncated && l > cutoff { 0.0 } else { 1.0 };
                radii
                    .iter()
                    .zip(w)
                    .zip(psd)
                    .map(|((&r, wm), p)| table.kernel(l, r) * wm * p)
                    .sum::<f64>()
                    * support
            })
            .collect())
    }

    /// Operator norm `‖𝓚‖` between the weighted spaces, by power iteration
    /// on `𝓚*𝓚`.
    pub fn norm_estimate(&self, iterations: usize) -> f64 {
        let n = self.radial_grid.len();
        let mut x: Vec<Vec<f64>> = (0..self.shapes.len())
            .map(|i| (0..n).map(|m| 1.0 + 0.1 * ((m + 3 * i) % 7) as f64).collect())
            .collect();
        let norm = |x: &[Vec<f64>]| x.iter().map(|v| self.radial_grid.dot(v, v)).sum::<f64>().sqrt();
        let mut lambda = 0.0;
        for _ in 0..iterations.max(1) {
            let nx = norm(&x);
            if nx == 0.0 {
                return 0.0;
            }
            for v in x.iter_mut() {
                v.iter_mut().for_each(|a| *a /= nx);
            }
            let slices: Vec<&[f64]> = x.iter().map(|v| v.as_slice()).collect();
            let y = self.apply_values(&slices).expect("shapes match");
            x = self.adjoint_values(&y).expect("grid matches");
            lambda = norm(&x);
        }
        lambda.sqrt()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CACHE_MAGIC);
        for g in [&self.radial_grid, &self.chord_grid] {
            buf.extend_from_slice(&g.lo().to_le_bytes());
            buf.extend_from_slice(&g.hi().to_le_bytes());
            buf.extend_from_slice(&(g.len() as u64).to_le_bytes());
        }
        buf.extend_from_slice(&(self.quad.n_phi as u64).to_le_bytes());
        buf.extend_from_slice(&(self.quad.n_theta as u64).to_le_bytes());
        buf.extend_from_slice(&(self.shapes.len() as u64).to_le_bytes());
        for s in &self.shapes {
            buf.extend_from_slice(&s.eta().to_le_bytes());
        }
        buf.push(self.truncated as u8);
        for b in &self.blocks {
            for v in b.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(path, buf).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut cur = ByteCursor {
            bytes: &bytes,
            pos: 0,
            path: path.to_path_buf(),
        };
        if cur.take(8)? != CACHE_MAGIC {
            return Err(cur.error("not a kernel cache file"));
        }
        let grid = |cur: &mut ByteCursor| -> Result<Grid1D> {
            let lo = cur.f64()?;
            let hi = cur.f64()?;
            let n = cur.u64()? as usize;
            Grid1D::new(lo, hi, n)
        };
        let radial_grid = grid(&mut cur)?;
        let chord_grid = grid(&mut cur)?;
        let quad = AngularQuadSpec::new(cur.u64()? as usize, cur.u64()? as usize)?;
        let n_shapes = cur.u64()? as usize;
        let shapes = (0..n_shapes)
            .map(|_| ShapeParam::new(cur.f64()?))
            .collect::<Result<Vec<_>>>()?;
        let truncated = match cur.take(1)?[0] {
            0 => false,
            1 => true,
            _ => return Err(cur.error("bad support flag")),
        };
        let (rows, cols) = (chord_grid.len(), radial_grid.len());
        let mut blocks = Vec::with_capacity(n_shapes);
        for _ in 0..n_shapes {
            let data = (0..rows * cols).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
            blocks.push(DMatrix::from_vec(rows, cols, data));
        }
        if cur.pos != bytes.len() {
            return Err(cur.error("trailing bytes"));
        }
        Ok(Self {
            radial_grid,
            chord_grid,
            shapes,
            quad,
            blocks,
            truncated,
        })
    }
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: PathBuf,
}

impl ByteCursor<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: 0,
            msg: format!("byte {}: {msg}", self.pos),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.error("unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn cache_key(radial: &Grid1D, chord: &Grid1D, shapes: &[ShapeParam], quad: AngularQuadSpec) -> String {
    let mut h = Sha256::new();
    for g in [radial, chord] {
        h.update(g.lo().to_le_bytes());
        h.update(g.hi().to_le_bytes());
        h.update((g.len() as u64).to_le_bytes());
    }
    for s in shapes {
        h.update(s.eta().to_le_bytes());
    }
    h.update((quad.n_phi as u64).to_le_bytes());
    h.update((quad.n_theta as u64).to_le_bytes());
    h.finalize().iter().take(12).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::cumulative;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_op(shapes: &[f64]) -> KernelOperator {
        let shapes: Vec<_> = shapes.iter().map(|&e| ShapeParam::new(e).unwrap()).collect();
        let rg = Grid1D::new(1e-4, 3e-4, 40).unwrap();
        let cg = Grid1D::new(0.0, 1.2e-3, 50).unwrap();
        KernelOperator::build(rg, cg, &shapes, AngularQuadSpec::new(24, 24).unwrap()).unwrap()
    }

    #[test]
    fn rejects_short_chord_grid() {
        let rg = Grid1D::new(1e-4, 3e-4, 10).unwrap();
        let cg = Grid1D::new(0.0, 1e-3, 10).unwrap();
        let err = KernelOperator::build(rg, cg, &[ShapeParam::new(2.0).unwrap()], AngularQuadSpec::default());
        assert!(matches!(err, Err(Error::ChordGridTooShort { .. })));
    }

    #[test]
    fn columns_are_monotone_and_bounded() {
        let op = small_op(&[0.5, 2.0]);
        for b in &op.blocks {
            for col in b.column_iter() {
                for w in col.as_slice().windows(2) {
                    assert!(w[1] >= w[0] - 1e-12);
                }
                assert!(col.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn dirac_reproduces_kernel_column() {
        let op = small_op(&[1.0]);
        let r0 = op.radial_grid.node(17);
        let psd = DensityField::dirac(op.radial_grid.clone(), r0, FieldKind::Psd).unwrap();
        let q = op.apply(&[psd]).unwrap();
        for (l, v) in op.chord_grid.nodes().iter().zip(&q.values) {
            let exact = 1.0 - (1.0 - (l / (2.0 * r0)).powi(2)).max(0.0).sqrt();
            assert!((v - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_and_additivity() {
        let op = small_op(&[1.0, 2.0]);
        let g = op.radial_grid.clone();
        let zero = DensityField::zeros(g.clone(), FieldKind::Psd);
        let q = op.apply(&[zero.clone(), zero.clone()]).unwrap();
        assert!(q.values.iter().all(|v| *v == 0.0));
        let bump = DensityField::from_fn(g, FieldKind::Psd, |r| (-(r - 2e-4f64).powi(2) / 1e-9).exp()).unwrap();
        let both = op.apply(&[bump.clone(), zero.clone()]).unwrap();
        let single = small_op(&[1.0]).apply(&[bump]).unwrap();
        assert_eq!(both.values, single.values);
    }

    #[test]
    fn equal_shapes_cannot_be_told_apart() {
        let op = small_op(&[2.0, 2.0]);
        let g = op.radial_grid.clone();
        let p = DensityField::from_fn(g, FieldKind::Psd, |r| (r * 1e4).sin() + 2.0).unwrap();
        let neg = p.scaled(-1.0);
        let q = op.apply(&[p.clone(), neg]).unwrap();
        assert!(q.values.iter().all(|v| v.abs() < 1e-18));
        let twice = op.apply(&[p.clone(), p.clone()]).unwrap();
        let once = small_op(&[2.0]).apply(&[p]).unwrap();
        for (a, b) in twice.values.iter().zip(&once.values) {
            assert!((a - 2.0 * b).abs() <= 1e-15 * a.abs());
        }
    }

    #[test]
    fn adjoint_identity() {
        let op = small_op(&[1.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let psi: Vec<Vec<f64>> = (0..2)
                .map(|_| (0..op.radial_grid.len()).map(|_| rng.random::<f64>() - 0.5).collect())
                .collect();
            let q: Vec<f64> = (0..op.chord_grid.len()).map(|_| rng.random::<f64>() - 0.5).collect();
            let slices: Vec<&[f64]> = psi.iter().map(|v| v.as_slice()).collect();
            let kpsi = op.apply_values(&slices).unwrap();
            let lhs = op.chord_grid.dot(&kpsi, &q);
            let kq = op.adjoint_values(&q).unwrap();
            let rhs: f64 = psi.iter().zip(&kq).map(|(a, b)| op.radial_grid.dot(a, b)).sum();
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1e-30) + 1e-25);
        }
    }

    #[test]
    fn adjoint_of_indicator_integrates_kernel() {
        let op = small_op(&[2.0]);
        let ones = DensityField::from_fn(op.chord_grid.clone(), FieldKind::CumulativeCld, |_| 1.0).unwrap();
        let back = &op.apply_adjoint(&ones).unwrap()[0];
        // oracle: fine trapezoid integral of the kernel over [0, ℓ_max]
        let table = OrientationTable::new(ShapeParam::new(2.0).unwrap(), AngularQuadSpec::new(24, 24).unwrap());
        let fine = Grid1D::new(0.0, op.chord_grid.hi(), 2000).unwrap();
        for (m, r) in op.radial_grid.nodes().iter().enumerate().step_by(7) {
            let vals: Vec<f64> = fine.nodes().iter().map(|l| table.kernel(*l, *r)).collect();
            let oracle = fine.integrate(&vals);
            assert!((back.values[m] - oracle).abs() < 2e-3 * oracle, "r={r}");
        }
        assert!(back.values.iter().all(|v| *v > 0.0));
        // larger particles give shorter chords less often: ∫k dℓ decreases in r
        for w in back.values.windows(2) {
            assert!(w[1] < w[0]);
        }
        let zero = DensityField::zeros(op.chord_grid.clone(), FieldKind::CumulativeCld);
        assert!(op.apply_adjoint(&zero).unwrap()[0].values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn normalized_dirac_reaches_one() {
        let op = small_op(&[2.0]);
        let psd = DensityField::dirac(op.radial_grid.clone(), 2e-4, FieldKind::Psd).unwrap();
        let q = op.apply(&[psd]).unwrap();
        assert!((q.values.last().unwrap() - 1.0).abs() < 1e-12);
        let dq = crate::field::differentiate(&q);
        let again = cumulative(&dq);
        assert!((again.values.last().unwrap() - 1.0).abs() < 0.05);
    }

    #[test]
    fn evaluate_at_matches_assembled_rows() {
        let op = small_op(&[2.0]);
        let psd: Vec<f64> = op.radial_grid.nodes().iter().map(|r| r * 1e4).collect();
        let direct = op.evaluate_at(0, &psd, &op.chord_grid.nodes()).unwrap();
        let assembled = op.apply_values(&[&psd]).unwrap();
        for (a, b) in direct.iter().zip(&assembled) {
            assert!((a - b).abs() < 1e-14 * a.abs().max(1.0));
        }
    }

    #[test]
    fn cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let op = small_op(&[0.5, 2.0]);
        let built = KernelOperator::build_cached(
            dir.path(),
            op.radial_grid.clone(),
            op.chord_grid.clone(),
            &op.shapes,
            op.quad,
        )
        .unwrap();
        let loaded = KernelOperator::build_cached(
            dir.path(),
            op.radial_grid.clone(),
            op.chord_grid.clone(),
            &op.shapes,
            op.quad,
        )
        .unwrap();
        assert_eq!(built.blocks, loaded.blocks);
        assert_eq!(loaded.cache_key(), op.cache_key());
        let other = cache_key(&op.radial_grid, &op.chord_grid, &[ShapeParam::SPHERE], op.quad);
        assert_ne!(other, op.cache_key());
    }

    #[test]
    fn truncation_zeroes_only_past_each_shape_support() {
        let full = small_op(&[0.5, 1.0]);
        let op = full.clone().truncated_to_support();
        assert!(op.is_truncated() && !full.is_truncated());
        let ells = op.chord_grid.nodes();
        // η = 0.5 and η = 1 both reach 2·r_max = 6e-4
        for (b, f) in op.blocks.iter().zip(&full.blocks) {
            for (j, &l) in ells.iter().enumerate() {
                if l > 6e-4 * (1.0 + 1e-9) {
                    assert!(b.row(j).iter().all(|v| *v == 0.0));
                } else {
                    assert_eq!(b.row(j), f.row(j));
                }
            }
        }
        let p = vec![1.0; op.radial_grid.len()];
        let direct = op.evaluate_at(1, &p, &[5e-4, 7e-4]).unwrap();
        assert!(direct[0] > 0.0 && direct[1] == 0.0);
        let same = op.clone().truncated_to_support();
        assert_eq!(same.blocks, op.blocks);
    }

    #[test]
    fn truncated_adjoint_and_save() {
        let op = small_op(&[1.0, 2.0]).truncated_to_support();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..op.radial_grid.len()).map(|_| rng.random::<f64>()).collect())
            .collect();
        let q: Vec<f64> = (0..op.chord_grid.len()).map(|_| rng.random::<f64>()).collect();
        let slices: Vec<&[f64]> = psi.iter().map(|v| v.as_slice()).collect();
        let lhs = op.chord_grid.dot(&op.apply_values(&slices).unwrap(), &q);
        let kq = op.adjoint_values(&q).unwrap();
        let rhs: f64 = psi.iter().zip(&kq).map(|(a, b)| op.radial_grid.dot(a, b)).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.bin");
        op.save(&path).unwrap();
        let back = KernelOperator::load(&path).unwrap();
        assert!(back.is_truncated());
        assert_eq!(back.blocks, op.blocks);
    }
}
