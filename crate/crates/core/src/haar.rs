//! Haar transforms.
//!
//! Internally every operator works in the *extended* Haar frame: for each cube
//! `I` (levels `0..=N`) and each signature `eps in {0,1}^d` the coefficient
//! `<f, h_I^eps>`, where the noncancellative `h_I^1 = |I|^{-1/2} chi_I` is kept
//! alongside the cancellative ones. The frame is redundant; its synthesis map
//! `c -> sum c_{I,eps} h_I^eps` is the exact transpose of the analysis map.
//! [`HaarCoefficients`] is the orthonormal (non-redundant) view.

use crate::error::{DyadicError, Result};
use crate::function::DyadicFunction;
use crate::grid::{CubeTree, GridSpec, HaarIndex, Signature};

/// Cube averages at every level, leaves first filled from the samples.
pub(crate) fn averages(tree: &CubeTree, samples: &[f64]) -> Vec<f64> {
    let mut avg = vec![0.0; tree.n_cubes()];
    let leaf0 = tree.level_offset[tree.depth];
    avg[leaf0..leaf0 + samples.len()].copy_from_slice(samples);
    let inv = 1.0 / tree.n_sig as f64;
    for k in (0..tree.depth).rev() {
        for g in tree.cubes_at(k) {
            let s: f64 = (0..tree.n_sig).map(|c| avg[tree.child(g, c)]).sum();
            avg[g] = s * inv;
        }
    }
    avg
}

/// `<f, h_I^eps>` for every cube and signature.
pub fn ext_analysis(tree: &CubeTree, samples: &[f64]) -> Vec<f64> {
    let avg = averages(tree, samples);
    let mut ext = vec![0.0; tree.ext_len()];
    let full = tree.full();
    for g in tree.cubes_at(tree.depth) {
        ext[tree.ext(g, full)] = tree.sqrt_volume(g) * avg[g];
    }
    let inv = 1.0 / tree.n_sig as f64;
    for k in 0..tree.depth {
        let sv = tree.sqrt_vol[k];
        for g in tree.cubes_at(k) {
            for s in 0..tree.n_sig as u32 {
                let sig = Signature(s);
                let mut acc = 0.0;
                for c in 0..tree.n_sig {
                    acc += sig.sign_on_child(c as u32, tree.dim) * avg[tree.child(g, c)];
                }
                ext[tree.ext(g, sig)] = sv * inv * acc;
            }
        }
    }
    ext
}

/// `sum_{I,eps} c_{I,eps} h_I^eps` sampled on the finest cells.
pub fn ext_synthesis(tree: &CubeTree, ext: &[f64]) -> Vec<f64> {
    debug_assert_eq!(ext.len(), tree.ext_len());
    let full = tree.full();
    let mut val = vec![0.0; tree.n_cubes()];
    val[0] = ext[tree.ext(0, full)] / tree.sqrt_vol[0];
    for k in 0..tree.depth {
        let inv_sv = 1.0 / tree.sqrt_vol[k];
        let inv_child = 1.0 / tree.sqrt_vol[k + 1];
        for g in tree.cubes_at(k) {
            for c in 0..tree.n_sig {
                let mut v = val[g];
                for s in 0..(tree.n_sig as u32 - 1) {
                    let e = ext[tree.ext(g, Signature(s))];
                    if e != 0.0 {
                        v += e * Signature(s).sign_on_child(c as u32, tree.dim) * inv_sv;
                    }
                }
                let ch = tree.child(g, c);
                v += ext[tree.ext(ch, full)] * inv_child;
                val[ch] = v;
            }
        }
    }
    let leaf0 = tree.level_offset[tree.depth];
    val[leaf0..].to_vec()
}

/// Orthonormal Haar coefficients: the root mean plus every cancellative
/// coefficient at levels `0..N`.
#[derive(Clone, Debug, PartialEq)]
pub struct HaarCoefficients {
    grid: GridSpec,
    pub mean: f64,
    /// `coeffs[g * (2^d - 1) + eps]` for global cube `g` below level `N`.
    coeffs: Vec<f64>,
}

impl HaarCoefficients {
    pub fn zeros(grid: &GridSpec) -> Self {
        let tree = grid.tree();
        HaarCoefficients { grid: grid.clone(), mean: 0.0, coeffs: vec![0.0; tree.n_inner() * (tree.n_sig - 1)] }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn slot(&self, idx: &HaarIndex) -> Result<usize> {
        idx.validate(&self.grid)?;
        if !idx.is_cancellative() {
            return Err(DyadicError::InvalidIndex(
                "noncancellative coefficients other than the root mean are not stored".into(),
            ));
        }
        let tree = self.grid.tree();
        Ok(tree.global(&idx.cube) * (tree.n_sig - 1) + idx.sig.0 as usize)
    }

    pub fn get(&self, idx: &HaarIndex) -> Result<f64> {
        Ok(self.coeffs[self.slot(idx)?])
    }

    pub fn set(&mut self, idx: &HaarIndex, value: f64) -> Result<()> {
        let s = self.slot(idx)?;
        self.coeffs[s] = value;
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn iter(&self) -> impl Iterator<Item = (HaarIndex, f64)> + '_ {
        let tree = self.grid.tree();
        let per = tree.n_sig - 1;
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, &v)| (HaarIndex::new(tree.cube(i / per), Signature((i % per) as u32)), v))
    }

    /// `mean^2 + sum coeff^2`.
    pub fn energy(&self) -> f64 {
        self.mean * self.mean + self.coeffs.iter().map(|c| c * c).sum::<f64>()
    }
}

pub fn haar_forward(f: &DyadicFunction) -> HaarCoefficients {
    let tree = f.grid().tree();
    let ext = ext_analysis(&tree, f.samples());
    let per = tree.n_sig - 1;
    let mut coeffs = vec![0.0; tree.n_inner() * per];
    for g in 0..tree.n_inner() {
        for s in 0..per {
            coeffs[g * per + s] = ext[g * tree.n_sig + s];
        }
    }
    HaarCoefficients { grid: f.grid().clone(), mean: ext[tree.ext(0, tree.full())], coeffs }
}

pub fn haar_inverse(c: &HaarCoefficients) -> DyadicFunction {
    let tree = c.grid.tree();
    let per = tree.n_sig - 1;
    let mut ext = vec![0.0; tree.ext_len()];
    for g in 0..tree.n_inner() {
        for s in 0..per {
            ext[g * tree.n_sig + s] = c.coeffs[g * per + s];
        }
    }
    ext[tree.ext(0, tree.full())] = c.mean;
    DyadicFunction::from_parts(c.grid.clone(), ext_synthesis(&tree, &ext))
}

/// Sampled `h_I^eps`; the noncancellative signature is allowed at every level.
pub fn haar_function(grid: &GridSpec, idx: &HaarIndex) -> Result<DyadicFunction> {
    idx.validate(grid)?;
    let tree = grid.tree();
    let g = tree.global(&idx.cube);
    let samples = (0..grid.n_cells()).map(|cell| tree.haar_value(g, idx.sig, cell)).collect();
    Ok(DyadicFunction::from_parts(grid.clone(), samples))
}
