//! Dyadic grids on the unit torus `[0,1)^d` at finite depth.
//!
//! A grid of depth `N` has cubes at levels `0..=N`; level-`N` cubes are the
//! sample cells. An optional shift `omega` (one offset vector per level
//! `1..=N`) moves every level-`k` cube by `sum_{j>k} 2^{-j} omega_j`, with
//! wrap-around on the torus.
//!
//! All per-grid navigation (parents, geometric children, level offsets) lives
//! in [`CubeTree`], which is built once per distinct [`GridSpec`] and cached.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{DyadicError, Result};

/// Upper bound on `(2^N)^d` for a single grid.
pub const MAX_CELLS: usize = 1 << 22;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(rename = "d")]
    pub dim: usize,
    #[serde(rename = "N")]
    pub depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Vec<Vec<u8>>>,
}

impl GridSpec {
    pub fn new(dim: usize, depth: usize) -> Result<Self> {
        let grid = GridSpec { dim, depth, omega: None };
        grid.validate()?;
        Ok(grid)
    }

    pub fn with_omega(dim: usize, depth: usize, omega: Vec<Vec<u8>>) -> Result<Self> {
        let grid = GridSpec { dim, depth, omega: Some(omega) };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.depth == 0 {
            return Err(DyadicError::InvalidGrid(format!(
                "dimension and depth must be positive (d={}, N={})",
                self.dim, self.depth
            )));
        }
        let bits = self.dim.saturating_mul(self.depth);
        if bits >= usize::BITS as usize || (1usize << bits) > MAX_CELLS {
            return Err(DyadicError::InvalidGrid(format!(
                "(2^{})^{} cells exceeds the budget of {MAX_CELLS}",
                self.depth, self.dim
            )));
        }
        if let Some(omega) = &self.omega {
            if omega.len() != self.depth {
                return Err(DyadicError::InvalidGrid(format!(
                    "omega must have {} levels, got {}",
                    self.depth,
                    omega.len()
                )));
            }
            for (j, w) in omega.iter().enumerate() {
                if w.len() != self.dim || w.iter().any(|&x| x > 1) {
                    return Err(DyadicError::InvalidGrid(format!(
                        "omega level {} must be a 0/1 vector of length {}",
                        j + 1,
                        self.dim
                    )));
                }
            }
        }
        Ok(())
    }

    /// Number of cells per axis, `2^N`.
    pub fn side(&self) -> usize {
        1 << self.depth
    }

    pub fn n_cells(&self) -> usize {
        1 << (self.depth * self.dim)
    }

    /// Quadrature weight of one cell, `2^{-Nd}`.
    pub fn cell_volume(&self) -> f64 {
        (-((self.depth * self.dim) as f64)).exp2()
    }

    pub fn n_signatures(&self) -> usize {
        1 << self.dim
    }

    pub fn full_signature(&self) -> Signature {
        Signature((1u32 << self.dim) - 1)
    }

    /// Offset of the level-`level` cubes, in units of finest cells per axis.
    pub fn level_offset(&self, level: usize) -> Vec<usize> {
        let mut shift = vec![0usize; self.dim];
        if let Some(omega) = &self.omega {
            for j in (level + 1)..=self.depth {
                for (a, s) in shift.iter_mut().enumerate() {
                    *s += (omega[j - 1][a] as usize) << (self.depth - j);
                }
            }
        }
        shift
    }

    /// The same grid without a shift.
    pub fn unshifted(&self) -> GridSpec {
        GridSpec { dim: self.dim, depth: self.depth, omega: None }
    }

    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(DyadicError::GridMismatch(format!(
                "d={},N={} vs d={},N={}{}",
                self.dim,
                self.depth,
                other.dim,
                other.depth,
                if self.omega != other.omega { " (different shifts)" } else { "" }
            )));
        }
        Ok(())
    }

    pub fn tree(&self) -> Arc<CubeTree> {
        CubeTree::for_grid(self)
    }
}

/// Haar signature `eps in {0,1}^d`; bit `a` holds the entry for axis `a+1`.
/// A zero entry selects the difference `chi_left - chi_right` on that axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signature(pub u32);

impl Signature {
    pub fn is_cancellative(self, dim: usize) -> bool {
        self.0 != (1u32 << dim) - 1
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let mut s = 0u32;
        for (a, &b) in bits.iter().enumerate() {
            match b {
                0 => {}
                1 => s |= 1 << a,
                _ => return Err(DyadicError::InvalidIndex(format!("signature entry {b}"))),
            }
        }
        Ok(Signature(s))
    }

    pub fn to_bits(self, dim: usize) -> Vec<u8> {
        (0..dim).map(|a| ((self.0 >> a) & 1) as u8).collect()
    }

    /// Sign of `h^sig` on the geometric child `child` (bit `a` set = right half on axis `a`).
    #[inline]
    pub fn sign_on_child(self, child: u32, dim: usize) -> f64 {
        let mask = (1u32 << dim) - 1;
        if (!self.0 & child & mask).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    /// Signature of the product `h_I^a h_I^b = |I|^{-1/2} h_I^{prod}`.
    pub fn product(self, other: Signature, dim: usize) -> Signature {
        let mask = (1u32 << dim) - 1;
        Signature(!(self.0 ^ other.0) & mask)
    }

    pub fn cancellative(dim: usize) -> impl Iterator<Item = Signature> {
        (0..(1u32 << dim) - 1).map(Signature)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub level: usize,
    pub pos: Vec<u32>,
}

impl DyadicCube {
    pub fn root(dim: usize) -> Self {
        DyadicCube { level: 0, pos: vec![0; dim] }
    }

    pub fn volume(&self) -> f64 {
        (-((self.level * self.pos.len()) as f64)).exp2()
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.pos.len() != grid.dim {
            return Err(DyadicError::InvalidIndex(format!(
                "cube has {} coordinates, grid has dimension {}",
                self.pos.len(),
                grid.dim
            )));
        }
        if self.level > grid.depth {
            return Err(DyadicError::InvalidIndex(format!(
                "cube level {} exceeds grid depth {}",
                self.level, grid.depth
            )));
        }
        let side = 1u64 << self.level;
        if self.pos.iter().any(|&p| p as u64 >= side) {
            return Err(DyadicError::InvalidIndex(format!(
                "cube position {:?} outside [0, {side}) at level {}",
                self.pos, self.level
            )));
        }
        Ok(())
    }
}

/// The `k`-th dyadic ancestor `I^{(k)}`, computed in grid coordinates.
pub fn ancestor(grid: &GridSpec, cube: &DyadicCube, k: usize) -> Result<DyadicCube> {
    cube.validate(grid)?;
    if k > cube.level {
        return Err(DyadicError::OutOfRange(format!(
            "ancestor {k} of a level-{} cube lies above the root",
            cube.level
        )));
    }
    let tree = grid.tree();
    let mut g = tree.global(cube);
    for _ in 0..k {
        g = tree.parent[g];
    }
    Ok(tree.cube(g))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HaarIndex {
    pub cube: DyadicCube,
    pub sig: Signature,
}

impl HaarIndex {
    pub fn new(cube: DyadicCube, sig: Signature) -> Self {
        HaarIndex { cube, sig }
    }

    pub fn is_cancellative(&self) -> bool {
        self.sig.is_cancellative(self.cube.pos.len())
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        self.cube.validate(grid)?;
        if self.sig.0 >= (1u32 << grid.dim) {
            return Err(DyadicError::InvalidIndex(format!("signature {} out of range", self.sig.0)));
        }
        if self.sig.is_cancellative(grid.dim) && self.cube.level >= grid.depth {
            return Err(DyadicError::InvalidIndex(format!(
                "cancellative Haar functions need level < {}, got {}",
                grid.depth, self.cube.level
            )));
        }
        Ok(())
    }
}

/// Precomputed navigation for one grid. Cubes are numbered globally level by
/// level (`level_offset[k] + linear index`); the linear index is row-major in
/// grid coordinates with axis 1 slowest, so leaf numbering matches sample order.
#[derive(Debug)]
pub struct CubeTree {
    pub grid: GridSpec,
    pub dim: usize,
    pub depth: usize,
    pub n_sig: usize,
    pub level_offset: Vec<usize>,
    pub level: Vec<usize>,
    pub parent: Vec<usize>,
    /// Geometric position of a cube inside its parent.
    pub child_bit: Vec<u32>,
    /// `children[g * n_sig + c]` for every non-leaf cube `g`.
    pub children: Vec<usize>,
    /// `2^{-kd/2}` per level.
    pub sqrt_vol: Vec<f64>,
}

impl CubeTree {
    pub fn for_grid(grid: &GridSpec) -> Arc<CubeTree> {
        static CACHE: OnceLock<Mutex<HashMap<GridSpec, Arc<CubeTree>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        guard.entry(grid.clone()).or_insert_with(|| Arc::new(CubeTree::build(grid))).clone()
    }

    fn build(grid: &GridSpec) -> CubeTree {
        let (d, n) = (grid.dim, grid.depth);
        let n_sig = 1usize << d;
        let mut level_offset = Vec::with_capacity(n + 2);
        let mut acc = 0usize;
        for k in 0..=n {
            level_offset.push(acc);
            acc += 1usize << (k * d);
        }
        level_offset.push(acc);
        let total = acc;

        let mut level = vec![0usize; total];
        let mut parent = vec![usize::MAX; total];
        let mut child_bit = vec![0u32; total];
        let mut children = vec![usize::MAX; level_offset[n] * n_sig];

        for k in 0..=n {
            for g in level_offset[k]..level_offset[k + 1] {
                level[g] = k;
            }
        }
        for k in 0..n {
            let side = 1usize << k;
            let child_side = side << 1;
            let count = 1usize << (k * d);
            for m in 0..count {
                let coords = linear_to_coords(m, side, d);
                let g = level_offset[k] + m;
                for c in 0..n_sig as u32 {
                    let mut lin = 0usize;
                    for (a, &x) in coords.iter().enumerate() {
                        let bit = ((c >> a) & 1) as usize;
                        let w = grid.omega.as_ref().map_or(0, |o| o[k][a] as usize);
                        let child = (2 * x + bit + w) % child_side;
                        lin = lin * child_side + child;
                    }
                    let cg = level_offset[k + 1] + lin;
                    children[g * n_sig + c as usize] = cg;
                    parent[cg] = g;
                    child_bit[cg] = c;
                }
            }
        }
        let sqrt_vol = (0..=n).map(|k| (-((k * d) as f64) / 2.0).exp2()).collect();
        CubeTree {
            grid: grid.clone(),
            dim: d,
            depth: n,
            n_sig,
            level_offset,
            level,
            parent,
            child_bit,
            children,
            sqrt_vol,
        }
    }

    pub fn n_cubes(&self) -> usize {
        self.level_offset[self.depth + 1]
    }

    /// Number of cubes that carry cancellative Haar functions (levels `0..N`).
    pub fn n_inner(&self) -> usize {
        self.level_offset[self.depth]
    }

    pub fn ext_len(&self) -> usize {
        self.n_cubes() * self.n_sig
    }

    #[inline]
    pub fn ext(&self, g: usize, sig: Signature) -> usize {
        g * self.n_sig + sig.0 as usize
    }

    #[inline]
    pub fn full(&self) -> Signature {
        Signature(self.n_sig as u32 - 1)
    }

    #[inline]
    pub fn child(&self, g: usize, c: usize) -> usize {
        self.children[g * self.n_sig + c]
    }

    pub fn cubes_at(&self, level: usize) -> std::ops::Range<usize> {
        self.level_offset[level]..self.level_offset[level + 1]
    }

    #[inline]
    pub fn leaf(&self, cell: usize) -> usize {
        self.level_offset[self.depth] + cell
    }

    pub fn ancestor_of(&self, mut g: usize, k: usize) -> usize {
        for _ in 0..k {
            g = self.parent[g];
        }
        g
    }

    pub fn is_ancestor(&self, anc: usize, mut g: usize) -> bool {
        let la = self.level[anc];
        if self.level[g] < la {
            return false;
        }
        while self.level[g] > la {
            g = self.parent[g];
        }
        g == anc
    }

    /// `|I|^{1/2}` of cube `g`.
    #[inline]
    pub fn sqrt_volume(&self, g: usize) -> f64 {
        self.sqrt_vol[self.level[g]]
    }

    #[inline]
    pub fn volume(&self, g: usize) -> f64 {
        let s = self.sqrt_volume(g);
        s * s
    }

    pub fn global(&self, cube: &DyadicCube) -> usize {
        let side = 1usize << cube.level;
        let lin = cube.pos.iter().fold(0usize, |acc, &p| acc * side + p as usize);
        self.level_offset[cube.level] + lin
    }

    pub fn cube(&self, g: usize) -> DyadicCube {
        let k = self.level[g];
        let lin = g - self.level_offset[k];
        let pos = linear_to_coords(lin, 1 << k, self.dim).into_iter().map(|x| x as u32).collect();
        DyadicCube { level: k, pos }
    }

    /// Finest cells contained in cube `g`, in increasing order.
    pub fn leaves(&self, g: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![g];
        while let Some(h) = stack.pop() {
            if self.level[h] == self.depth {
                out.push(h - self.level_offset[self.depth]);
            } else {
                for c in 0..self.n_sig {
                    stack.push(self.child(h, c));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// All descendants of `g` exactly `k` levels below it.
    pub fn descendants(&self, g: usize, k: usize) -> Vec<usize> {
        let mut cur = vec![g];
        for _ in 0..k {
            cur =
                cur.iter().flat_map(|&h| (0..self.n_sig).map(move |c| (h, c))).map(|(h, c)| self.child(h, c)).collect();
        }
        cur.sort_unstable();
        cur
    }

    /// Value of `h_g^sig` on a finest cell.
    pub fn haar_value(&self, g: usize, sig: Signature, cell: usize) -> f64 {
        let k = self.level[g];
        let mut h = self.leaf(cell);
        if k == self.depth {
            return if h == g && !sig.is_cancellative(self.dim) { 1.0 / self.sqrt_volume(g) } else { 0.0 };
        }
        while self.level[h] > k + 1 {
            h = self.parent[h];
        }
        if self.parent[h] != g {
            return 0.0;
        }
        sig.sign_on_child(self.child_bit[h], self.dim) / self.sqrt_volume(g)
    }
}

pub(crate) fn linear_to_coords(mut lin: usize, side: usize, dim: usize) -> Vec<usize> {
    let mut coords = vec![0usize; dim];
    for a in (0..dim).rev() {
        coords[a] = lin % side;
        lin /= side;
    }
    coords
}
