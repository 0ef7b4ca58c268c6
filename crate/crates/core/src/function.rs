//! Piecewise-constant functions on the dyadic torus, stored as finest-cell samples.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DyadicError, Result};
use crate::grid::{linear_to_coords, GridSpec};

pub(crate) const DYF_MAGIC: &[u8; 4] = b"DYF1";
pub(crate) const HEADER_LEN: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct DyadicFunction {
    grid: GridSpec,
    samples: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FunctionJson {
    d: usize,
    #[serde(rename = "N")]
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    omega: Option<Vec<Vec<u8>>>,
    samples: Vec<f64>,
}

impl Serialize for DyadicFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FunctionJson {
            d: self.grid.dim,
            n: self.grid.depth,
            omega: self.grid.omega.clone(),
            samples: self.samples.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DyadicFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = FunctionJson::deserialize(d)?;
        let grid = GridSpec { dim: raw.d, depth: raw.n, omega: raw.omega };
        DyadicFunction::new(grid, raw.samples).map_err(serde::de::Error::custom)
    }
}

impl DyadicFunction {
    pub fn new(grid: GridSpec, samples: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if samples.len() != grid.n_cells() {
            return Err(DyadicError::Format(format!("expected {} samples, got {}", grid.n_cells(), samples.len())));
        }
        Ok(DyadicFunction { grid, samples })
    }

    pub(crate) fn from_parts(grid: GridSpec, samples: Vec<f64>) -> Self {
        debug_assert_eq!(samples.len(), grid.n_cells());
        DyadicFunction { grid, samples }
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        DyadicFunction { grid: grid.clone(), samples: vec![0.0; grid.n_cells()] }
    }

    pub fn constant(grid: &GridSpec, c: f64) -> Self {
        DyadicFunction { grid: grid.clone(), samples: vec![c; grid.n_cells()] }
    }

    /// Samples `f` at each cell, given the cell's integer coordinates (axis 1 first).
    pub fn from_fn(grid: &GridSpec, f: impl Fn(&[usize]) -> f64) -> Self {
        let side = grid.side();
        let samples = (0..grid.n_cells()).map(|i| f(&linear_to_coords(i, side, grid.dim))).collect();
        DyadicFunction { grid: grid.clone(), samples }
    }

    /// I.i.d. uniform samples on `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(grid: &GridSpec, rng: &mut R) -> Self {
        let samples = (0..grid.n_cells()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        DyadicFunction { grid: grid.clone(), samples }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn norm_l2(&self) -> f64 {
        (self.samples.iter().map(|x| x * x).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|x| x * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        DyadicFunction { grid: self.grid.clone(), samples: self.samples.iter().map(|&x| f(x)).collect() }
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

    fn zip(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        let samples = self.samples.iter().zip(&other.samples).map(|(&a, &b)| op(a, b)).collect();
        Ok(DyadicFunction { grid: self.grid.clone(), samples })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Binary form: `"DYF1"`, `u32 d`, `u32 N`, 4 reserved zero bytes, then
    /// little-endian `f64` samples. Shifted grids are not representable.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.grid.omega.is_some() {
            return Err(DyadicError::Format("binary format has no field for grid shifts".into()));
        }
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.samples.len());
        write_header(&mut out, &self.grid);
        for x in &self.samples {
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (grid, rest) = read_header(bytes)?;
        let samples = read_samples(rest, grid.n_cells())?;
        DyadicFunction::new(grid, samples)
    }
}

pub(crate) fn write_header(out: &mut Vec<u8>, grid: &GridSpec) {
    out.extend_from_slice(DYF_MAGIC);
    out.extend_from_slice(&(grid.dim as u32).to_le_bytes());
    out.extend_from_slice(&(grid.depth as u32).to_le_bytes());
    out.extend_from_slice(&[0u8; 4]);
}

pub(crate) fn read_header(bytes: &[u8]) -> Result<(GridSpec, &[u8])> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != DYF_MAGIC {
        return Err(DyadicError::Format("missing DYF1 header".into()));
    }
    let d = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let grid = GridSpec::new(d, n)?;
    Ok((grid, &bytes[HEADER_LEN..]))
}

pub(crate) fn read_samples(bytes: &[u8], count: usize) -> Result<Vec<f64>> {
    if bytes.len() != 8 * count {
        return Err(DyadicError::Format(format!("expected {} sample bytes, got {}", 8 * count, bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// `<f, g>` with the piecewise-constant quadrature weight.
pub fn inner_product(f: &DyadicFunction, g: &DyadicFunction) -> Result<f64> {
    f.grid.ensure_same(&g.grid)?;
    Ok(f.samples.iter().zip(&g.samples).map(|(a, b)| a * b).sum::<f64>() * f.grid.cell_volume())
}

pub fn pointwise_multiply(f: &DyadicFunction, g: &DyadicFunction) -> Result<DyadicFunction> {
    f.zip(g, |a, b| a * b)
}
