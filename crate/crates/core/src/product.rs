//! Functions on a product of two dyadic tori, stored as a row-major sample
//! matrix (variable 1 slow), and shifts acting in one variable.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DyadicError, Result};
use crate::function::{read_header, read_samples, write_header, DyadicFunction, HEADER_LEN};
use crate::grid::GridSpec;
use crate::haar::{ext_analysis, ext_synthesis};
use crate::shift::ShiftOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Var {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl Var {
    pub fn from_index(v: usize) -> Result<Var> {
        match v {
            1 => Ok(Var::One),
            2 => Ok(Var::Two),
            _ => Err(DyadicError::Spec(format!("variable {v} (expected 1 or 2)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProductGrid {
    pub grid1: GridSpec,
    pub grid2: GridSpec,
}

impl ProductGrid {
    pub fn new(grid1: GridSpec, grid2: GridSpec) -> Result<Self> {
        grid1.validate()?;
        grid2.validate()?;
        if grid1.n_cells().saturating_mul(grid2.n_cells()) > crate::grid::MAX_CELLS {
            return Err(DyadicError::InvalidGrid("product grid too large".into()));
        }
        Ok(ProductGrid { grid1, grid2 })
    }

    pub fn unshifted(d1: usize, n1: usize, d2: usize, n2: usize) -> Result<Self> {
        ProductGrid::new(GridSpec::new(d1, n1)?, GridSpec::new(d2, n2)?)
    }

    pub fn grid(&self, var: Var) -> &GridSpec {
        match var {
            Var::One => &self.grid1,
            Var::Two => &self.grid2,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.grid1.n_cells(), self.grid2.n_cells())
    }

    pub fn cell_volume(&self) -> f64 {
        self.grid1.cell_volume() * self.grid2.cell_volume()
    }

    pub fn ensure_same(&self, other: &ProductGrid) -> Result<()> {
        self.grid1.ensure_same(&other.grid1)?;
        self.grid2.ensure_same(&other.grid2)
    }
}

/// Applies `f` to every slice along `var` of a `rows x cols` row-major matrix.
/// Each slice maps to a slice of length `out_len`; the result is again row-major.
pub(crate) fn map_axis<F>(data: &[f64], rows: usize, cols: usize, var: Var, out_len: usize, f: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    match var {
        Var::Two => {
            let mut out = vec![0.0; rows * out_len];
            out.par_chunks_mut(out_len.max(1)).zip(data.par_chunks(cols.max(1))).for_each(|(o, row)| {
                o.copy_from_slice(&f(row));
            });
            out
        }
        Var::One => {
            let t = transpose(data, rows, cols);
            let mapped = map_axis(&t, cols, rows, Var::Two, out_len, f);
            transpose(&mapped, cols, out_len)
        }
    }
}

pub(crate) fn transpose(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductFunction {
    grid: ProductGrid,
    samples: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ProductJson {
    grid1: GridSpec,
    grid2: GridSpec,
    samples: Vec<f64>,
}

impl Serialize for ProductFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ProductJson { grid1: self.grid.grid1.clone(), grid2: self.grid.grid2.clone(), samples: self.samples.clone() }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProductFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = ProductJson::deserialize(d)?;
        let grid = ProductGrid::new(raw.grid1, raw.grid2).map_err(serde::de::Error::custom)?;
        ProductFunction::new(grid, raw.samples).map_err(serde::de::Error::custom)
    }
}

impl ProductFunction {
    pub fn new(grid: ProductGrid, samples: Vec<f64>) -> Result<Self> {
        let (r, c) = grid.shape();
        if samples.len() != r * c {
            return Err(DyadicError::Format(format!("expected {} samples, got {}", r * c, samples.len())));
        }
        Ok(ProductFunction { grid, samples })
    }

    pub(crate) fn from_parts(grid: ProductGrid, samples: Vec<f64>) -> Self {
        ProductFunction { grid, samples }
    }

    pub fn zeros(grid: &ProductGrid) -> Self {
        let (r, c) = grid.shape();
        ProductFunction { grid: grid.clone(), samples: vec![0.0; r * c] }
    }

    pub fn constant(grid: &ProductGrid, v: f64) -> Self {
        let (r, c) = grid.shape();
        ProductFunction { grid: grid.clone(), samples: vec![v; r * c] }
    }

    /// I.i.d. uniform samples on `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(grid: &ProductGrid, rng: &mut R) -> Self {
        let (r, c) = grid.shape();
        let samples = (0..r * c).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        ProductFunction { grid: grid.clone(), samples }
    }

    /// `f1 (x) f2`.
    pub fn tensor(f1: &DyadicFunction, f2: &DyadicFunction) -> Result<Self> {
        let grid = ProductGrid::new(f1.grid().clone(), f2.grid().clone())?;
        let samples = f1.samples().iter().flat_map(|&a| f2.samples().iter().map(move |&b| a * b)).collect();
        Ok(ProductFunction { grid, samples })
    }

    pub fn grid(&self) -> &ProductGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn norm_l2(&self) -> f64 {
        (self.samples.iter().map(|x| x * x).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        ProductFunction { grid: self.grid.clone(), samples: self.samples.iter().map(|x| x * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    pub fn add_scaled(&mut self, s: f64, other: &Self) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        for (a, b) in self.samples.iter_mut().zip(&other.samples) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn multiply(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a * b)
    }

    fn zip(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        let samples = self.samples.iter().zip(&other.samples).map(|(&a, &b)| op(a, b)).collect();
        Ok(ProductFunction { grid: self.grid.clone(), samples })
    }

    /// Applies a map on sample slices along `var`.
    pub fn map_slices<F>(&self, var: Var, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Sync,
    {
        let (r, c) = self.grid.shape();
        let out_len = match var {
            Var::One => r,
            Var::Two => c,
        };
        ProductFunction { grid: self.grid.clone(), samples: map_axis(&self.samples, r, c, var, out_len, f) }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Two `DYF1` headers (variable 1 first), then little-endian `f64` samples.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.grid.grid1.omega.is_some() || self.grid.grid2.omega.is_some() {
            return Err(DyadicError::Format("binary format has no field for grid shifts".into()));
        }
        let mut out = Vec::with_capacity(2 * HEADER_LEN + 8 * self.samples.len());
        write_header(&mut out, &self.grid.grid1);
        write_header(&mut out, &self.grid.grid2);
        for x in &self.samples {
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (g1, rest) = read_header(bytes)?;
        let (g2, rest) = read_header(rest)?;
        let grid = ProductGrid::new(g1, g2)?;
        let (r, c) = grid.shape();
        let samples = read_samples(rest, r * c)?;
        ProductFunction::new(grid, samples)
    }
}

pub fn product_inner(f: &ProductFunction, g: &ProductFunction) -> Result<f64> {
    f.grid.ensure_same(&g.grid)?;
    Ok(f.samples.iter().zip(&g.samples).map(|(a, b)| a * b).sum::<f64>() * f.grid.cell_volume())
}

/// Extended Haar coefficients in one variable, the other left in sample space.
pub fn partial_ext_analysis(f: &ProductFunction, var: Var) -> Vec<f64> {
    let tree = f.grid.grid(var).tree();
    let (r, c) = f.grid.shape();
    map_axis(&f.samples, r, c, var, tree.ext_len(), |s| ext_analysis(&tree, s))
}

/// Extended coefficients in both variables, `E1 x E2` row-major.
pub fn ext_analysis_2d(f: &ProductFunction) -> Vec<f64> {
    let t1 = f.grid.grid1.tree();
    let t2 = f.grid.grid2.tree();
    let (r, _) = f.grid.shape();
    let half = partial_ext_analysis(f, Var::Two);
    map_axis(&half, r, t2.ext_len(), Var::One, t1.ext_len(), |s| ext_analysis(&t1, s))
}

pub fn ext_synthesis_2d(grid: &ProductGrid, ext: &[f64]) -> ProductFunction {
    let t1 = grid.grid1.tree();
    let t2 = grid.grid2.tree();
    let (r, c) = grid.shape();
    let half = map_axis(ext, t1.ext_len(), t2.ext_len(), Var::One, r, |s| ext_synthesis(&t1, s));
    let samples = map_axis(&half, r, t2.ext_len(), Var::Two, c, |s| ext_synthesis(&t2, s));
    ProductFunction { grid: grid.clone(), samples }
}

pub fn apply_in_variable(s: &ShiftOperator, var: Var, f: &ProductFunction) -> Result<ProductFunction> {
    s.grid().ensure_same(f.grid.grid(var))?;
    let tree = s.grid().tree();
    Ok(f.map_slices(var, |slice| s.apply_samples_with(&tree, slice)))
}

/// `[[M_b, S1], S2] f = b S1 S2 f - S1(b S2 f) - S2(b S1 f) + S2 S1 (b f)`.
pub fn iterated_commutator(
    b: &ProductFunction,
    s1: &ShiftOperator,
    s2: &ShiftOperator,
    f: &ProductFunction,
) -> Result<ProductFunction> {
    b.grid.ensure_same(&f.grid)?;
    let a1 = |g: &ProductFunction| apply_in_variable(s1, Var::One, g);
    let a2 = |g: &ProductFunction| apply_in_variable(s2, Var::Two, g);
    let t1 = b.multiply(&a1(&a2(f)?)?)?;
    let t2 = a1(&b.multiply(&a2(f)?)?)?;
    let t3 = a2(&b.multiply(&a1(f)?)?)?;
    let t4 = a2(&a1(&b.multiply(f)?)?)?;
    t1.sub(&t2)?.sub(&t3)?.add(&t4)
}
