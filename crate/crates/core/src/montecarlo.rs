//! Random shifted grids and Monte Carlo averages of operators built on them.
//!
//! On a depth-`N` torus only the `N` offsets `omega_1..omega_N` act, and the
//! shifted grid is the standard one translated by `sum_j omega_j 2^{N-j}` cells.
//! Averaging over `omega` therefore averages over all cell translations, which
//! is what turns a fixed shift pattern into a convolution.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{DyadicError, Result};
use crate::grid::{GridSpec, HaarIndex, Signature};
use crate::operator::LinearOperator;
use crate::rng::{rng_for, trial_seed};
use crate::shift::{ShiftEntry, ShiftKind, ShiftOperator};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmegaSample {
    /// `omega[j - 1]` is the offset vector of level `j`.
    pub omega: Vec<Vec<u8>>,
    pub seed: u64,
}

pub fn sample_omega(d: usize, n: usize, seed: u64) -> OmegaSample {
    let mut rng = rng_for(seed, 0);
    let omega = (0..n).map(|_| (0..d).map(|_| rng.gen_range(0..=1u8)).collect()).collect();
    OmegaSample { omega, seed }
}

pub fn shifted_grid(base: &GridSpec, w: &OmegaSample) -> Result<GridSpec> {
    GridSpec::with_omega(base.dim, base.depth, w.omega.clone())
}

/// Mean and standard error of a family of equally sized vectors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatrixEstimate {
    /// Side of the (square) matrix; `mean.len() == n * n`.
    pub n: usize,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: usize,
    pub skipped: usize,
    pub seed: u64,
    pub threads: usize,
}

impl MatrixEstimate {
    /// `(row, col, mean, stderr)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64, f64)> + '_ {
        (0..self.mean.len()).map(move |e| (e / self.n, e % self.n, self.mean[e], self.stderr[e]))
    }
}

/// Running mean and sum of squared deviations, merged pairwise (Chan et al.).
#[derive(Clone)]
struct Moments {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn empty(len: usize) -> Self {
        Moments { count: 0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let c = self.count as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *m;
            *m += delta / c;
            *s += delta * (v - *m);
        }
    }

    fn merge(a: Moments, b: Moments) -> Moments {
        if a.count == 0 {
            return b;
        }
        if b.count == 0 {
            return a;
        }
        let (na, nb) = (a.count as f64, b.count as f64);
        let n = na + nb;
        let mut out = Moments::empty(a.mean.len());
        out.count = a.count + b.count;
        for e in 0..a.mean.len() {
            let delta = b.mean[e] - a.mean[e];
            out.mean[e] = a.mean[e] + delta * nb / n;
            out.m2[e] = a.m2[e] + b.m2[e] + delta * delta * na * nb / n;
        }
        out
    }
}

/// Samples per sequential block; blocks are merged in a fixed pairwise order.
const BLOCK: usize = 64;

/// Monte Carlo mean of `stat(omega)` over `samples` random grids.
///
/// Sample `s` uses `omega` drawn from `trial_seed(seed, s)`. Blocks of [`BLOCK`]
/// consecutive samples are accumulated sequentially and then merged as a
/// balanced binary tree in index order, so results are bit-identical for any
/// thread count. Samples whose statistic fails are skipped and counted.
pub fn average_vectors<F>(
    base: &GridSpec,
    samples: usize,
    seed: u64,
    len: usize,
    stat: F,
) -> Result<(Vec<f64>, Vec<f64>, usize, usize)>
where
    F: Fn(&GridSpec) -> Result<Vec<f64>> + Sync,
{
    let n_blocks = samples.div_ceil(BLOCK);
    let blocks: Vec<(Moments, usize)> = (0..n_blocks)
        .into_par_iter()
        .map(|blk| {
            let mut m = Moments::empty(len);
            let mut skipped = 0;
            for s in blk * BLOCK..((blk + 1) * BLOCK).min(samples) {
                let w = sample_omega(base.dim, base.depth, trial_seed(seed, s as u64));
                match shifted_grid(base, &w).and_then(|g| stat(&g)) {
                    Ok(v) if v.len() == len => m.push(&v),
                    _ => skipped += 1,
                }
            }
            (m, skipped)
        })
        .collect();
    let skipped = blocks.iter().map(|b| b.1).sum();
    let mut level: Vec<Moments> = blocks.into_iter().map(|b| b.0).collect();
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => Moments::merge(a, b),
                None => a,
            });
        }
        level = next;
    }
    let m = level.pop().unwrap_or_else(|| Moments::empty(len));
    let count = m.count;
    let stderr = if count > 1 {
        m.m2.iter().map(|s| (s / (count as f64 - 1.0) / count as f64).sqrt()).collect()
    } else {
        vec![0.0; len]
    };
    Ok((m.mean, stderr, count, skipped))
}

/// Monte Carlo estimate of `E_omega` of the dense matrix of `builder(omega)`.
pub fn average_operator<F>(base: &GridSpec, builder: F, samples: usize, seed: u64) -> Result<MatrixEstimate>
where
    F: Fn(&GridSpec) -> Result<LinearOperator> + Sync,
{
    let n = base.n_cells();
    if n > crate::operator::DENSE_LIMIT {
        return Err(DyadicError::OutOfRange(format!("{n} cells is too many for dense averaging")));
    }
    let (mean, stderr, count, skipped) =
        average_vectors(base, samples, seed, n * n, |g| Ok(builder(g)?.dense_matrix()))?;
    Ok(MatrixEstimate { n, mean, stderr, samples: count, skipped, seed, threads: rayon::current_num_threads() })
}

/// First finest cell of a level-`level` cube in circular order, i.e. its left end.
fn left_end(grid: &GridSpec, tree: &crate::grid::CubeTree, g: usize) -> usize {
    let level = tree.level[g];
    let len = 1usize << (grid.depth - level);
    let off = grid.level_offset(level)[0];
    let side = grid.side();
    *tree.leaves(g).iter().find(|&&c| (c + side - off % side).is_multiple_of(len)).expect("cube has a left end")
}

/// The fixed `i = 0, j = 1` pattern on a (possibly shifted) one-dimensional
/// grid: `S f = sum_K <f, h_K> (h_{K_left} - h_{K_right}) / sqrt(2)`, with Haar
/// functions oriented geometrically (positive on the left half).
pub fn petermichl_shift(grid: &GridSpec) -> Result<ShiftOperator> {
    if grid.dim != 1 {
        return Err(DyadicError::Spec("the averaged pattern is one-dimensional".into()));
    }
    if grid.depth < 2 {
        return Err(DyadicError::Depth { i: 0, j: 1, depth: grid.depth });
    }
    let tree = grid.tree();
    let sig = Signature(0);
    // +1 when the frame's Haar function is positive on the geometric left half
    let orient = |g: usize| tree.haar_value(g, sig, left_end(grid, &tree, g)).signum();
    let mut entries = Vec::new();
    for level in 0..grid.depth - 1 {
        for gk in tree.cubes_at(level) {
            let start = left_end(grid, &tree, gk);
            for c in 0..2 {
                let gj = tree.child(gk, c);
                let geo = if tree.leaves(gj).contains(&start) { 1.0 } else { -1.0 };
                entries.push(ShiftEntry {
                    k: tree.cube(gk),
                    i: HaarIndex::new(tree.cube(gk), sig),
                    j: HaarIndex::new(tree.cube(gj), sig),
                    a: geo * std::f64::consts::FRAC_1_SQRT_2 * orient(gk) * orient(gj),
                });
            }
        }
    }
    ShiftOperator::new(grid, 0, 1, ShiftKind::Cancellative, entries)
}

/// `M(r, c)` minus the mean of its wrapped diagonal `(c - r) mod n`.
pub fn toeplitz_deviation(m: &[f64], n: usize) -> Vec<f64> {
    let mut diag = vec![0.0; n];
    for r in 0..n {
        for c in 0..n {
            diag[(c + n - r) % n] += m[r * n + c];
        }
    }
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            out[r * n + c] = m[r * n + c] - diag[(c + n - r) % n] / n as f64;
        }
    }
    out
}

/// `M + M^T`.
pub fn antisymmetry_defect(m: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            out[r * n + c] = m[r * n + c] + m[c * n + r];
        }
    }
    out
}

/// Per-entry `|mean| <= 3 stderr` test with a family-wise decision rule.
///
/// Under the null each entry exceeds `3 stderr` with probability about
/// `0.0027`; the test passes when the number of exceedances is at most the
/// expected count plus three of its Poisson standard deviations. `max_z` is
/// reported against the Bonferroni threshold for the same family-wise level.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntryTest {
    pub entries: usize,
    pub exceedances: usize,
    pub expected_null: f64,
    pub allowed: f64,
    pub max_z: f64,
    pub bonferroni_z: f64,
    pub pass: bool,
}

/// Two-sided standard normal quantile for tail mass `alpha`.
fn normal_two_sided_quantile(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha / 2.0)
}

/// Tests `values` against zero with per-entry standard errors `stderr`.
/// Entries with zero error must be zero to `1e-12`.
pub fn entry_test(values: &[f64], stderr: &[f64]) -> EntryTest {
    let p3 = erfc(3.0 / std::f64::consts::SQRT_2);
    let mut exceed = 0;
    let mut max_z: f64 = 0.0;
    for (v, s) in values.iter().zip(stderr) {
        if *s > 0.0 {
            let z = v.abs() / s;
            max_z = max_z.max(z);
            if z > 3.0 {
                exceed += 1;
            }
        } else if v.abs() > 1e-12 {
            exceed += 1;
            max_z = f64::INFINITY;
        }
    }
    let m = values.len();
    let expected = p3 * m as f64;
    let allowed = expected + 3.0 * expected.sqrt();
    EntryTest {
        entries: m,
        exceedances: exceed,
        expected_null: expected,
        allowed,
        max_z,
        bonferroni_z: normal_two_sided_quantile(p3 / m.max(1) as f64),
        pass: exceed as f64 <= allowed,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloReport {
    #[serde(rename = "N")]
    pub n: usize,
    pub samples: usize,
    pub skipped: usize,
    pub seed: u64,
    pub threads: usize,
    pub toeplitz: EntryTest,
    pub antisymmetry: EntryTest,
    /// The same Toeplitz test applied to one grid (expected to fail).
    pub single_omega_toeplitz: EntryTest,
    pub single_omega_seed: u64,
}

/// Averages the fixed pattern over random grids and tests the average for
/// translation invariance and oddness; repeats the translation test on a
/// single grid with the averaged error bars.
pub fn petermichl_demo(n: usize, samples: usize, seed: u64) -> Result<MonteCarloReport> {
    let base = GridSpec::new(1, n)?;
    let cells = base.n_cells();
    let dense =
        |g: &GridSpec| -> Result<Vec<f64>> { Ok(LinearOperator::from_shift(&petermichl_shift(g)?).dense_matrix()) };
    let (dev_mean, dev_se, count, skipped) =
        average_vectors(&base, samples, seed, cells * cells, |g| Ok(toeplitz_deviation(&dense(g)?, cells)))?;
    let (anti_mean, anti_se, _, _) =
        average_vectors(&base, samples, seed, cells * cells, |g| Ok(antisymmetry_defect(&dense(g)?, cells)))?;
    // first sample whose grid is not the unshifted one, so the check is not vacuous by luck
    let single_seed = (0..)
        .map(|s| trial_seed(seed, s))
        .find(|&s| sample_omega(1, n, s).omega.iter().any(|w| w[0] == 1))
        .expect("some omega is nonzero");
    let single = dense(&shifted_grid(&base, &sample_omega(1, n, single_seed))?)?;
    Ok(MonteCarloReport {
        n,
        samples: count,
        skipped,
        seed,
        threads: rayon::current_num_threads(),
        toeplitz: entry_test(&dev_mean, &dev_se),
        antisymmetry: entry_test(&anti_mean, &anti_se),
        single_omega_toeplitz: entry_test(&toeplitz_deviation(&single, cells), &dev_se),
        single_omega_seed: single_seed,
    })
}
