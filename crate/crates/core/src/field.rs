//! Densities sampled on a grid, their running integrals, and the CSV form
//! `x,value` used to exchange them.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid1D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Psd,
    Cld,
    CumulativeCld,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid: Grid1D,
    pub values: Vec<f64>,
    pub kind: FieldKind,
}

impl DensityField {
    pub fn new(grid: Grid1D, values: Vec<f64>, kind: FieldKind) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values, kind })
    }

    pub fn zeros(grid: Grid1D, kind: FieldKind) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
            kind,
        }
    }

    pub fn from_fn(grid: Grid1D, kind: FieldKind, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().into_iter().map(f).collect();
        Self::new(grid, values, kind)
    }

    /// Discrete Dirac mass at the node nearest to `x`: `1/spacing` there
    /// (doubled at an end node, whose trapezoid weight is halved).
    pub fn dirac(grid: Grid1D, x: f64, kind: FieldKind) -> Result<Self> {
        let i = grid
            .nearest(x)
            .ok_or_else(|| Error::invalid(format!("Dirac position {x:e} lies outside the grid")))?;
        let mut f = Self::zeros(grid, kind);
        f.values[i] = 1.0 / f.grid.weights()[i];
        Ok(f)
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
            kind: self.kind,
        }
    }

    /// Rescales to unit integral under the grid quadrature.
    pub fn normalized(&self) -> Result<Self> {
        let total = self.integral();
        if !(total.abs() > 0.0) {
            return Err(Error::invalid("cannot normalize a density with zero integral"));
        }
        Ok(self.scaled(1.0 / total))
    }

    /// Cumulative field divided by its value at the last node.
    pub fn normalized_cumulative(&self) -> Result<Self> {
        let last = *self.values.last().expect("grids have at least two nodes");
        if !(last.abs() > 0.0) {
            return Err(Error::invalid("cumulative field vanishes at the last node"));
        }
        Ok(self.scaled(1.0 / last))
    }

    pub fn read_csv(path: &Path, kind: FieldKind) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        parse_field_csv(&text, path, kind)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(self.values.len() * 48);
        writeln!(out, "x,value").expect("write to Vec");
        for (x, v) in self.grid.nodes().iter().zip(&self.values) {
            writeln!(out, "{x:e},{v:e}").expect("write to Vec");
        }
        fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

fn parse_field_csv(text: &str, path: &Path, kind: FieldKind) -> Result<DensityField> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "value" {
        return Err(parse_err(
            1,
            format!(
                "expected header `x,value`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() != 2 {
            return Err(parse_err(line, format!("expected 2 columns, found {}", rec.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("`{s}` is not a finite number")))
        };
        xs.push(num(&rec[0])?);
        vs.push(num(&rec[1])?);
    }
    if xs.len() < 2 {
        return Err(parse_err(xs.len() + 1, "need at least two rows".into()));
    }
    let grid = Grid1D::new(xs[0], xs[xs.len() - 1], xs.len()).map_err(|e| parse_err(2, e.to_string()))?;
    for (i, x) in xs.iter().enumerate() {
        if (x - grid.node(i)).abs() > 1e-6 * grid.spacing() {
            return Err(parse_err(i + 2, format!("abscissa {x:e} breaks the uniform spacing")));
        }
    }
    DensityField::new(grid, vs, kind)
}

/// Running trapezoid integral `Q(ℓ) = ∫₀^ℓ q`.
pub fn cumulative(q: &DensityField) -> DensityField {
    let h = q.grid.spacing();
    let mut out = Vec::with_capacity(q.values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in q.values.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    DensityField {
        grid: q.grid.clone(),
        values: out,
        kind: FieldKind::CumulativeCld,
    }
}

/// Second-order differences: centered inside, one-sided three-point stencils
/// at the ends (two-point when the grid has only two nodes).
pub fn differentiate(big_q: &DensityField) -> DensityField {
    let h = big_q.grid.spacing();
    let v = &big_q.values;
    let n = v.len();
    let mut out = vec![0.0; n];
    if n == 2 {
        let d = (v[1] - v[0]) / h;
        out = vec![d, d];
    } else {
        out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
        out[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
        for i in 1..n - 1 {
            out[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
        }
    }
    DensityField {
        grid: big_q.grid.clone(),
        values: out,
        kind: FieldKind::Cld,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid1D {
        Grid1D::new(0.0, 2.0, n).unwrap()
    }

    #[test]
    fn cumulative_of_constant_is_linear() {
        let q = DensityField::from_fn(grid(21), FieldKind::Cld, |_| 3.0).unwrap();
        let big_q = cumulative(&q);
        for (x, v) in big_q.grid.nodes().iter().zip(&big_q.values) {
            assert!((v - 3.0 * x).abs() < 1e-12);
        }
        assert_eq!(big_q.kind, FieldKind::CumulativeCld);
    }

    #[test]
    fn differentiate_inverts_cumulative_to_second_order() {
        let err = |n: usize| {
            let q = DensityField::from_fn(grid(n), FieldKind::Cld, |x| (2.0 * x).sin() + x * x).unwrap();
            let back = differentiate(&cumulative(&q));
            q.values
                .iter()
                .zip(&back.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(101), err(201));
        assert!(e1 < 1e-2);
        assert!(e1 / e2 > 3.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn dirac_has_unit_mass() {
        let g = Grid1D::new(1e-4, 3e-4, 200).unwrap();
        let d = DensityField::dirac(g.clone(), 2e-4, FieldKind::Psd).unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-12);
        let end = DensityField::dirac(g.clone(), 1e-4, FieldKind::Psd).unwrap();
        assert!((end.integral() - 1.0).abs() < 1e-12);
        assert!(DensityField::dirac(g, 1.0, FieldKind::Psd).is_err());
    }

    #[test]
    fn rejects_mismatch_and_nan() {
        assert!(DensityField::new(grid(3), vec![0.0; 4], FieldKind::Psd).is_err());
        assert!(DensityField::new(grid(3), vec![0.0, f64::NAN, 1.0], FieldKind::Psd).is_err());
    }

    #[test]
    fn normalization() {
        let f = DensityField::from_fn(grid(11), FieldKind::Psd, |x| x).unwrap();
        assert!((f.normalized().unwrap().integral() - 1.0).abs() < 1e-14);
        assert!(DensityField::zeros(grid(5), FieldKind::Psd).normalized().is_err());
        let c = cumulative(&f);
        let cn = c.normalized_cumulative().unwrap();
        assert_eq!(*cn.values.last().unwrap(), 1.0);
    }

    #[test]
    fn csv_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let f = DensityField::from_fn(Grid1D::new(1e-4, 3e-4, 7).unwrap(), FieldKind::Psd, |x| x * 1e4).unwrap();
        f.write_csv(&p).unwrap();
        let back = DensityField::read_csv(&p, FieldKind::Psd).unwrap();
        assert!(back.grid.same_as(&f.grid));
        for (a, b) in back.values.iter().zip(&f.values) {
            assert!((a - b).abs() <= 1e-15 * a.abs());
        }

        let bad = dir.path().join("bad.csv");
        fs::write(&bad, "x,value\n0,1\n1,oops\n2,3\n").unwrap();
        let err = DensityField::read_csv(&bad, FieldKind::Psd).unwrap_err();
        assert!(err.to_string().contains("bad.csv:3"), "{err}");
        fs::write(&bad, "r,psi\n0,1\n1,2\n").unwrap();
        assert!(DensityField::read_csv(&bad, FieldKind::Psd)
            .unwrap_err()
            .to_string()
            .contains(":1"));
        fs::write(&bad, "x,value\n0,1\n1,2\n3,3\n").unwrap();
        assert!(DensityField::read_csv(&bad, FieldKind::Psd)
            .unwrap_err()
            .to_string()
            .contains(":3"));
    }
}
