//! One-parameter paraproducts.
//!
//! `B_k(b, f) = sum_I beta_I <b, h^eta_{I^(k)}> <f, h_I^{eps}> h_I^{eps'} |I^(k)|^{-1/2}`
//! and the trilinear
//! `P(b, a, f) = sum_I <b, h_I> <f, h_I> |I|^{-1} sum_{J strictly inside I} <a, h_J> h_J`
//! (matched cancellative signatures on `b` and `f`, cancellative ones on `a`).
//!
//! Both are bilinear in `(b, f)` once the symbol is fixed, and both are sums of
//! *atoms* `out[o] += w * b[p] * f[q]` over extended Haar slots. The atom form
//! is what lets the bi-parameter operators be evaluated as tensor products of
//! one-parameter ones. The direct functions below use tree recursions instead.

use serde::{Deserialize, Serialize};

use crate::error::{DyadicError, Result};
use crate::function::DyadicFunction;
use crate::grid::{CubeTree, GridSpec, Signature};
use crate::haar::{ext_analysis, ext_synthesis};

/// Marks an atom that does not read the symbol.
pub const NO_SYMBOL: u32 = u32::MAX;

/// `out[out] += w * symbol[sym] * b[b] * g[g]`, all indices in the extended frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub out: u32,
    pub b: u32,
    pub g: u32,
    pub sym: u32,
    pub w: f64,
}

impl Atom {
    pub fn transpose(self) -> Atom {
        Atom { out: self.g, g: self.out, ..self }
    }
}

/// Multiplies symbol coefficients into the weights.
pub fn resolve_symbol(atoms: &mut [Atom], sym_ext: Option<&[f64]>) -> Result<()> {
    for a in atoms.iter_mut() {
        if a.sym != NO_SYMBOL {
            let s = sym_ext.ok_or_else(|| DyadicError::Spec("operator needs a symbol".into()))?;
            a.w *= s[a.sym as usize];
            a.sym = NO_SYMBOL;
        }
    }
    Ok(())
}

/// Evaluates resolved atoms; `out` is accumulated into.
pub fn eval_atoms(atoms: &[Atom], b: &[f64], g: &[f64], out: &mut [f64]) {
    for a in atoms {
        out[a.out as usize] += a.w * b[a.b as usize] * g[a.g as usize];
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaRule {
    /// `beta_I = 1`.
    Ones,
    /// `beta_I = h^eta_{I^(k)}(x) |I^(k)|^{1/2}` for any `x` in `I`, read off a
    /// sampled Haar function (1 when `k = 0`).
    AncestorSign,
    /// Explicit values indexed by global cube number.
    Values(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BkOperator {
    pub k: usize,
    /// Signature `eta` of the Haar function paired with `b` on `I^(k)`.
    pub b_sig: Signature,
    pub in_sig: Signature,
    pub out_sig: Signature,
    pub beta: BetaRule,
}

impl BkOperator {
    /// All-cancellative `B_k` with `beta = 1` and the same signature everywhere.
    pub fn cancellative(k: usize, sig: Signature) -> Self {
        BkOperator { k, b_sig: sig, in_sig: sig, out_sig: sig, beta: BetaRule::Ones }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let d = grid.dim;
        let n_sig = 1u32 << d;
        for s in [self.b_sig, self.in_sig, self.out_sig] {
            if s.0 >= n_sig {
                return Err(DyadicError::Spec(format!("signature {} out of range", s.0)));
            }
        }
        if !self.b_sig.is_cancellative(d) {
            return Err(DyadicError::Spec("b must be paired with a cancellative Haar".into()));
        }
        let ci = self.in_sig.is_cancellative(d);
        let co = self.out_sig.is_cancellative(d);
        if !ci && !co {
            return Err(DyadicError::Spec("at most one of the f-side signatures may be noncancellative".into()));
        }
        if self.k > 0 && (!ci || !co) {
            return Err(DyadicError::Spec("k > 0 requires cancellative signatures".into()));
        }
        if let BetaRule::Values(v) = &self.beta {
            if v.len() != grid.tree().n_cubes() {
                return Err(DyadicError::Spec("beta needs one value per cube".into()));
            }
            if v.iter().any(|x| !(x.abs() <= 1.0)) {
                return Err(DyadicError::Spec("|beta| must not exceed 1".into()));
            }
        }
        Ok(())
    }

    pub fn is_cancellative(&self, dim: usize) -> bool {
        self.in_sig.is_cancellative(dim) && self.out_sig.is_cancellative(dim)
    }

    pub fn beta(&self, tree: &CubeTree, g: usize) -> f64 {
        match &self.beta {
            BetaRule::Ones => 1.0,
            BetaRule::Values(v) => v[g],
            BetaRule::AncestorSign => {
                if self.k == 0 {
                    return 1.0;
                }
                let q = tree.ancestor_of(g, self.k);
                tree.haar_value(q, self.b_sig, some_cell(tree, g)) * tree.sqrt_volume(q)
            }
        }
    }

    pub fn atoms(&self, tree: &CubeTree) -> Vec<Atom> {
        let mut out = Vec::new();
        for level in self.k..tree.depth {
            for g in tree.cubes_at(level) {
                let q = tree.ancestor_of(g, self.k);
                let w = self.beta(tree, g) / tree.sqrt_volume(q);
                if w == 0.0 {
                    continue;
                }
                out.push(Atom {
                    out: tree.ext(g, self.out_sig) as u32,
                    b: tree.ext(q, self.b_sig) as u32,
                    g: tree.ext(g, self.in_sig) as u32,
                    sym: NO_SYMBOL,
                    w,
                });
            }
        }
        out
    }
}

/// A finest cell inside cube `g`.
pub(crate) fn some_cell(tree: &CubeTree, mut g: usize) -> usize {
    while tree.level[g] < tree.depth {
        g = tree.child(g, 0);
    }
    g - tree.level_offset[tree.depth]
}

/// Atoms of `P(b, a, .)` with the symbol slot left unresolved.
pub fn p_atoms(tree: &CubeTree) -> Vec<Atom> {
    let n_canc = tree.n_sig as u32 - 1;
    let mut out = Vec::new();
    for q in 0..tree.n_inner() {
        let inv = 1.0 / tree.volume(q);
        let lq = tree.level[q];
        for k in 1..tree.depth - lq {
            for j in tree.descendants(q, k) {
                for eta in 0..n_canc {
                    let pq = tree.ext(q, Signature(eta)) as u32;
                    for e in 0..n_canc {
                        let sj = tree.ext(j, Signature(e)) as u32;
                        out.push(Atom { out: sj, b: pq, g: pq, sym: sj, w: inv });
                    }
                }
            }
        }
    }
    out
}

pub fn p_adjoint_atoms(tree: &CubeTree) -> Vec<Atom> {
    p_atoms(tree).into_iter().map(Atom::transpose).collect()
}

fn check3(b: &DyadicFunction, a: &DyadicFunction, f: &DyadicFunction) -> Result<()> {
    b.grid().ensure_same(f.grid())?;
    a.grid().ensure_same(f.grid())
}

pub fn apply_bk(op: &BkOperator, b: &DyadicFunction, f: &DyadicFunction) -> Result<DyadicFunction> {
    b.grid().ensure_same(f.grid())?;
    op.validate(f.grid())?;
    let tree = f.grid().tree();
    let be = ext_analysis(&tree, b.samples());
    let fe = ext_analysis(&tree, f.samples());
    let mut out = vec![0.0; tree.ext_len()];
    eval_atoms(&op.atoms(&tree), &be, &fe, &mut out);
    Ok(DyadicFunction::from_parts(f.grid().clone(), ext_synthesis(&tree, &out)))
}

/// `c_Q = sum_eta <b, h^eta_Q> <f, h^eta_Q>` for every cube below level `N`.
fn matched_pairs(tree: &CubeTree, be: &[f64], fe: &[f64]) -> Vec<f64> {
    (0..tree.n_inner())
        .map(|q| (0..tree.n_sig - 1).map(|e| be[q * tree.n_sig + e] * fe[q * tree.n_sig + e]).sum())
        .collect()
}

pub(crate) fn p_ext(tree: &CubeTree, be: &[f64], ae: &[f64], fe: &[f64]) -> Vec<f64> {
    let c = matched_pairs(tree, be, fe);
    // s[J] = sum over strict ancestors Q of c_Q / |Q|
    let mut s = vec![0.0; tree.n_cubes()];
    for g in 0..tree.n_inner() {
        let v = s[g] + c[g] / tree.volume(g);
        for ch in 0..tree.n_sig {
            s[tree.child(g, ch)] = v;
        }
    }
    let mut out = vec![0.0; tree.ext_len()];
    for g in 0..tree.n_inner() {
        for e in 0..tree.n_sig - 1 {
            let slot = g * tree.n_sig + e;
            out[slot] = ae[slot] * s[g];
        }
    }
    out
}

pub(crate) fn p_adjoint_ext(tree: &CubeTree, be: &[f64], ae: &[f64], ge: &[f64]) -> Vec<f64> {
    // t[Q] = sum over strict descendants J of sum_eps <a, h_J> <g, h_J>
    let own = matched_pairs(tree, ae, ge);
    let mut t = vec![0.0; tree.n_cubes()];
    for g in (0..tree.n_inner()).rev() {
        let mut acc = 0.0;
        for ch in 0..tree.n_sig {
            let c = tree.child(g, ch);
            acc += t[c] + own.get(c).copied().unwrap_or(0.0);
        }
        t[g] = acc;
    }
    let mut out = vec![0.0; tree.ext_len()];
    for g in 0..tree.n_inner() {
        let w = t[g] / tree.volume(g);
        for e in 0..tree.n_sig - 1 {
            let slot = g * tree.n_sig + e;
            out[slot] = be[slot] * w;
        }
    }
    out
}

pub fn apply_p(b: &DyadicFunction, a: &DyadicFunction, f: &DyadicFunction) -> Result<DyadicFunction> {
    check3(b, a, f)?;
    let tree = f.grid().tree();
    let out = p_ext(
        &tree,
        &ext_analysis(&tree, b.samples()),
        &ext_analysis(&tree, a.samples()),
        &ext_analysis(&tree, f.samples()),
    );
    Ok(DyadicFunction::from_parts(f.grid().clone(), ext_synthesis(&tree, &out)))
}

/// Adjoint of `f -> P(b, a, f)` with `b` and `a` fixed.
pub fn apply_p_adjoint(b: &DyadicFunction, a: &DyadicFunction, g: &DyadicFunction) -> Result<DyadicFunction> {
    check3(b, a, g)?;
    let tree = g.grid().tree();
    let out = p_adjoint_ext(
        &tree,
        &ext_analysis(&tree, b.samples()),
        &ext_analysis(&tree, a.samples()),
        &ext_analysis(&tree, g.samples()),
    );
    Ok(DyadicFunction::from_parts(g.grid().clone(), ext_synthesis(&tree, &out)))
}
