//! Dyadic shifts `S^{ij} f = sum_K sum_{I,J} a_{IJK} <f, h_I> h_J` with
//! `I^{(i)} = J^{(j)} = K` and `|a_{IJK}| <= |I|^{1/2} |J|^{1/2} / |K|`.
//!
//! Noncancellative shifts (`i = j = 0`) are paraproducts with a symbol `a`:
//! the analysis orientation is `S f = sum_I a_I^eps <f, h_I^1> h_I^eps` with
//! `a_I^eps = <a, h_I^eps> |I|^{-1/2}`; the synthesis orientation is its transpose.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DyadicError, Result};
use crate::function::DyadicFunction;
use crate::grid::{CubeTree, DyadicCube, GridSpec, HaarIndex, Signature};
use crate::haar::{ext_analysis, ext_synthesis};
use crate::norms::dyadic_bmo_norm;
use crate::rng::rng_for;

const BOUND_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Noncancellative Haar on the input side.
    Analysis,
    /// Noncancellative Haar on the output side.
    Synthesis,
}

impl Orientation {
    pub fn flip(self) -> Self {
        match self {
            Orientation::Analysis => Orientation::Synthesis,
            Orientation::Synthesis => Orientation::Analysis,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ShiftKind {
    Cancellative,
    Noncancellative {
        symbol: DyadicFunction,
        orientation: Orientation,
        /// Factor applied to the raw symbol to reach its stored value (1 if none).
        normalization: f64,
    },
}

/// What [`random_shift`] should draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftFamily {
    Cancellative,
    Noncancellative(Orientation),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShiftEntry {
    pub k: DyadicCube,
    pub i: HaarIndex,
    pub j: HaarIndex,
    pub a: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShiftOperator {
    grid: GridSpec,
    i: usize,
    j: usize,
    kind: ShiftKind,
    entries: Vec<ShiftEntry>,
    /// `(input ext slot, output ext slot, a)`
    compiled: Vec<(usize, usize, f64)>,
}

impl ShiftOperator {
    /// Builds a shift from explicit entries, checking every coefficient constraint.
    ///
    /// Cancellative shifts may carry at most one entry per `(I, J)` cube pair;
    /// with that restriction every `K`-block has Frobenius norm at most one,
    /// which is what makes the operator an `L^2` contraction in any dimension.
    pub fn new(grid: &GridSpec, i: usize, j: usize, kind: ShiftKind, entries: Vec<ShiftEntry>) -> Result<Self> {
        grid.validate()?;
        let tree = grid.tree();
        let noncanc = matches!(kind, ShiftKind::Noncancellative { .. });
        if noncanc && (i != 0 || j != 0) {
            return Err(DyadicError::Spec("noncancellative shifts need i = j = 0".into()));
        }
        if let ShiftKind::Noncancellative { symbol, .. } = &kind {
            grid.ensure_same(symbol.grid())?;
        }
        let mut pairs = std::collections::HashSet::new();
        let mut compiled = Vec::with_capacity(entries.len());
        for e in &entries {
            e.k.validate(grid)?;
            e.i.validate(grid)?;
            e.j.validate(grid)?;
            if e.i.cube.level != e.k.level + i || e.j.cube.level != e.k.level + j {
                return Err(DyadicError::Constraint(format!(
                    "entry at K level {} has I level {} and J level {} (i={i}, j={j})",
                    e.k.level, e.i.cube.level, e.j.cube.level
                )));
            }
            let (gk, gi, gj) = (tree.global(&e.k), tree.global(&e.i.cube), tree.global(&e.j.cube));
            if tree.ancestor_of(gi, i) != gk || tree.ancestor_of(gj, j) != gk {
                return Err(DyadicError::Constraint("I or J does not lie in K".into()));
            }
            let bound = tree.sqrt_volume(gi) * tree.sqrt_volume(gj) / tree.volume(gk);
            if !(e.a.abs() <= bound * (1.0 + BOUND_SLACK)) {
                return Err(DyadicError::Constraint(format!("|a| = {} exceeds bound {bound}", e.a.abs())));
            }
            let (ci, cj) = (e.i.is_cancellative(), e.j.is_cancellative());
            if !noncanc {
                if !ci || !cj {
                    return Err(DyadicError::Constraint("cancellative shift with a noncancellative Haar".into()));
                }
                if !pairs.insert((gi, gj)) {
                    return Err(DyadicError::Constraint("more than one entry for an (I, J) cube pair".into()));
                }
            } else if ci == cj {
                return Err(DyadicError::Constraint(
                    "noncancellative shift entries need exactly one noncancellative side".into(),
                ));
            }
            compiled.push((tree.ext(gi, e.i.sig), tree.ext(gj, e.j.sig), e.a));
        }
        Ok(ShiftOperator { grid: grid.clone(), i, j, kind, entries, compiled })
    }

    /// Paraproduct shift with symbol `a`; requires `dyadic_bmo_norm(a) <= 1`.
    pub fn noncancellative(symbol: &DyadicFunction, orientation: Orientation) -> Result<Self> {
        Self::noncancellative_scaled(symbol, orientation, 1.0)
    }

    fn noncancellative_scaled(symbol: &DyadicFunction, orientation: Orientation, normalization: f64) -> Result<Self> {
        let bmo = dyadic_bmo_norm(symbol);
        if bmo > 1.0 + BOUND_SLACK {
            return Err(DyadicError::Constraint(format!("symbol has dyadic BMO norm {bmo} > 1")));
        }
        let grid = symbol.grid();
        let tree = grid.tree();
        let ext = ext_analysis(&tree, symbol.samples());
        let full = tree.full();
        let mut entries = Vec::new();
        for g in 0..tree.n_inner() {
            let cube = tree.cube(g);
            for eps in Signature::cancellative(grid.dim) {
                let a = ext[tree.ext(g, eps)] / tree.sqrt_volume(g);
                let canc = HaarIndex::new(cube.clone(), eps);
                let nc = HaarIndex::new(cube.clone(), full);
                let (i, j) = match orientation {
                    Orientation::Analysis => (nc, canc),
                    Orientation::Synthesis => (canc, nc),
                };
                entries.push(ShiftEntry { k: cube.clone(), i, j, a });
            }
        }
        let kind = ShiftKind::Noncancellative { symbol: symbol.clone(), orientation, normalization };
        ShiftOperator::new(grid, 0, 0, kind, entries)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn i(&self) -> usize {
        self.i
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn kind(&self) -> &ShiftKind {
        &self.kind
    }

    pub fn entries(&self) -> &[ShiftEntry] {
        &self.entries
    }

    pub fn is_cancellative(&self) -> bool {
        matches!(self.kind, ShiftKind::Cancellative)
    }

    pub fn symbol(&self) -> Option<&DyadicFunction> {
        match &self.kind {
            ShiftKind::Noncancellative { symbol, .. } => Some(symbol),
            ShiftKind::Cancellative => None,
        }
    }

    pub fn orientation(&self) -> Option<Orientation> {
        match &self.kind {
            ShiftKind::Noncancellative { orientation, .. } => Some(*orientation),
            ShiftKind::Cancellative => None,
        }
    }

    /// Largest `|a_{IJK}| |K| / (|I|^{1/2} |J|^{1/2})` over all entries.
    pub fn max_normalized_coefficient(&self) -> f64 {
        let tree = self.grid.tree();
        self.entries
            .iter()
            .map(|e| {
                let (gk, gi, gj) = (tree.global(&e.k), tree.global(&e.i.cube), tree.global(&e.j.cube));
                e.a.abs() * tree.volume(gk) / (tree.sqrt_volume(gi) * tree.sqrt_volume(gj))
            })
            .fold(0.0, f64::max)
    }

    pub fn transpose(&self) -> ShiftOperator {
        let kind = match &self.kind {
            ShiftKind::Cancellative => ShiftKind::Cancellative,
            ShiftKind::Noncancellative { symbol, orientation, normalization } => ShiftKind::Noncancellative {
                symbol: symbol.clone(),
                orientation: orientation.flip(),
                normalization: *normalization,
            },
        };
        let entries = self
            .entries
            .iter()
            .map(|e| ShiftEntry { k: e.k.clone(), i: e.j.clone(), j: e.i.clone(), a: e.a })
            .collect();
        let compiled = self.compiled.iter().map(|&(s, t, a)| (t, s, a)).collect();
        ShiftOperator { grid: self.grid.clone(), i: self.j, j: self.i, kind, entries, compiled }
    }

    /// Applies the shift to extended Haar coefficients.
    pub fn apply_ext(&self, ext: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; ext.len()];
        for &(s, t, a) in &self.compiled {
            out[t] += a * ext[s];
        }
        out
    }

    pub(crate) fn apply_samples_with(&self, tree: &CubeTree, samples: &[f64]) -> Vec<f64> {
        ext_synthesis(tree, &self.apply_ext(&ext_analysis(tree, samples)))
    }

    pub fn apply_samples(&self, samples: &[f64]) -> Vec<f64> {
        self.apply_samples_with(&self.grid.tree(), samples)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ShiftJson::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: ShiftJson = serde_json::from_str(s)?;
        raw.into_operator()
    }
}

pub fn apply_shift(s: &ShiftOperator, f: &DyadicFunction) -> Result<DyadicFunction> {
    s.grid.ensure_same(f.grid())?;
    Ok(DyadicFunction::from_parts(f.grid().clone(), s.apply_samples(f.samples())))
}

/// Random admissible shift, deterministic in `seed`.
///
/// Cancellative: for every `K` at levels `0..=N-1-max(i,j)` and every cube pair
/// `(I, J)` below it, one entry with uniformly random cancellative signatures and
/// `a` uniform on `[-bound, bound]`. Noncancellative: i.i.d. uniform samples as
/// symbol, rescaled to dyadic BMO norm 1 (a zero symbol stays zero).
pub fn random_shift(grid: &GridSpec, i: usize, j: usize, seed: u64, family: ShiftFamily) -> Result<ShiftOperator> {
    grid.validate()?;
    let mut rng = rng_for(seed, 0);
    match family {
        ShiftFamily::Noncancellative(orientation) => {
            if i != 0 || j != 0 {
                return Err(DyadicError::Spec("noncancellative shifts need i = j = 0".into()));
            }
            let raw = DyadicFunction::random(grid, &mut rng);
            let bmo = dyadic_bmo_norm(&raw);
            let scale = if bmo > 0.0 { 1.0 / bmo } else { 1.0 };
            let sym = raw.scale(scale);
            // rounding can leave the rescaled norm a hair above one
            let sym = sym.scale(1.0 / dyadic_bmo_norm(&sym).max(1.0));
            ShiftOperator::noncancellative_scaled(&sym, orientation, scale)
        }
        ShiftFamily::Cancellative => {
            let n = grid.depth;
            if i.max(j) >= n {
                return Err(DyadicError::Depth { i, j, depth: n });
            }
            let tree = grid.tree();
            let n_canc = (1u32 << grid.dim) - 1;
            let bound = (-(((i + j) * grid.dim) as f64) / 2.0).exp2();
            let mut entries = Vec::new();
            for level in 0..n - i.max(j) {
                for gk in tree.cubes_at(level) {
                    let k = tree.cube(gk);
                    let is = tree.descendants(gk, i);
                    let js = tree.descendants(gk, j);
                    for &gi in &is {
                        for &gj in &js {
                            let si = Signature(rng.gen_range(0..n_canc));
                            let sj = Signature(rng.gen_range(0..n_canc));
                            let a = rng.gen_range(-bound..=bound);
                            entries.push(ShiftEntry {
                                k: k.clone(),
                                i: HaarIndex::new(tree.cube(gi), si),
                                j: HaarIndex::new(tree.cube(gj), sj),
                                a,
                            });
                        }
                    }
                }
            }
            ShiftOperator::new(grid, i, j, ShiftKind::Cancellative, entries)
        }
    }
}

/// Number of entries [`random_shift`] draws for a cancellative shift.
pub fn cancellative_entry_count(grid: &GridSpec, i: usize, j: usize) -> usize {
    let d = grid.dim;
    (0..grid.depth.saturating_sub(i.max(j))).map(|l| 1usize << ((l + i + j) * d)).sum()
}

#[derive(Serialize, Deserialize)]
struct CubeJson {
    level: usize,
    pos: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct IndexJson {
    level: usize,
    pos: Vec<u32>,
    sig: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct EntryJson {
    #[serde(rename = "K")]
    k: CubeJson,
    #[serde(rename = "I")]
    i: IndexJson,
    #[serde(rename = "J")]
    j: IndexJson,
    a: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum KindTag {
    Cancellative,
    Noncancellative,
}

#[derive(Serialize, Deserialize)]
struct ShiftJson {
    d: usize,
    #[serde(rename = "N")]
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    omega: Option<Vec<Vec<u8>>>,
    i: usize,
    j: usize,
    kind: KindTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    orientation: Option<Orientation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normalization: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    symbol: Option<DyadicFunction>,
    entries: Vec<EntryJson>,
}

impl From<&ShiftOperator> for ShiftJson {
    fn from(s: &ShiftOperator) -> Self {
        let d = s.grid.dim;
        let idx = |h: &HaarIndex| IndexJson { level: h.cube.level, pos: h.cube.pos.clone(), sig: h.sig.to_bits(d) };
        let entries = s
            .entries
            .iter()
            .map(|e| EntryJson {
                k: CubeJson { level: e.k.level, pos: e.k.pos.clone() },
                i: idx(&e.i),
                j: idx(&e.j),
                a: e.a,
            })
            .collect();
        let (kind, orientation, normalization, symbol) = match &s.kind {
            ShiftKind::Cancellative => (KindTag::Cancellative, None, None, None),
            ShiftKind::Noncancellative { symbol, orientation, normalization } => {
                (KindTag::Noncancellative, Some(*orientation), Some(*normalization), Some(symbol.clone()))
            }
        };
        ShiftJson {
            d,
            n: s.grid.depth,
            omega: s.grid.omega.clone(),
            i: s.i,
            j: s.j,
            kind,
            orientation,
            normalization,
            symbol,
            entries,
        }
    }
}

impl ShiftJson {
    fn into_operator(self) -> Result<ShiftOperator> {
        let grid = GridSpec { dim: self.d, depth: self.n, omega: self.omega };
        grid.validate()?;
        let idx = |h: IndexJson| -> Result<HaarIndex> {
            Ok(HaarIndex::new(DyadicCube { level: h.level, pos: h.pos }, Signature::from_bits(&h.sig)?))
        };
        let entries = self
            .entries
            .into_iter()
            .map(|e| {
                Ok(ShiftEntry { k: DyadicCube { level: e.k.level, pos: e.k.pos }, i: idx(e.i)?, j: idx(e.j)?, a: e.a })
            })
            .collect::<Result<Vec<_>>>()?;
        let kind = match self.kind {
            KindTag::Cancellative => ShiftKind::Cancellative,
            KindTag::Noncancellative => ShiftKind::Noncancellative {
                symbol: self
                    .symbol
                    .ok_or_else(|| DyadicError::Format("noncancellative shift without symbol".into()))?,
                orientation: self
                    .orientation
                    .ok_or_else(|| DyadicError::Format("noncancellative shift without orientation".into()))?,
                normalization: self.normalization.unwrap_or(1.0),
            },
        };
        ShiftOperator::new(&grid, self.i, self.j, kind, entries)
    }
}
