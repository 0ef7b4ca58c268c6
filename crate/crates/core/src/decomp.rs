//! Exact decompositions of `[M_b, S]` into paraproduct terms.
//!
//! Writing `b g = A(b,g) + B(b,g) + sum_{k>=1} C_k(b,g)` on the torus (mean of
//! `b` dropped, since it commutes with everything), where
//!
//! * `A = sum_eta B_0[eta; 1 -> eta]` collects the Haar functions of `g` on cubes
//!   containing the `b`-cube, telescoped into `<g, h_Q^1>` (this is where the
//!   root mean of `g` lives),
//! * `B = sum_{eta,eps} B_0[eta; eps -> eta*eps]` pairs equal cubes,
//! * `C_k = sum_{eta,eps} B_k[eta; eps -> eps]` pairs a `g`-cube with its `k`-th
//!   ancestor, `beta_J = h^eta_{J^(k)}(J) |J^(k)|^{1/2}`,
//!
//! the `C_k` pieces of `b (S f)` with `k > j` cancel exactly against those of
//! `S(b f)` with `k > i`: both only see `b` through cubes strictly containing
//! `K`, where `h_Q` is constant. What is left is
//!
//! `[b,S] f = (A + B + sum_{k<=j} C_k)(b, S f) - S((A + B + sum_{k<=i} C_k)(b, f))`.
//!
//! For a paraproduct shift `S f = sum <a, h_J> <f>_J h_J` the `C` pieces of
//! `b (S f)` cancel the part of `S(b f)` coming from `<b>_J`, and the local part
//! of `<b f>_J` splits into `S(sum_eps B_0[eps; eps -> 1](b, f))` minus
//! `P(b, a, f)`:
//!
//! `[b,S] f = (A + B)(b, S f) + P(b, a, f) - S(sum_eps B_0[eps; eps -> 1](b, f))`.
//!
//! The synthesis orientation uses `[b, S^T] = -([b, S])^T`, term by term.
//! Bi-parameter lists are tensor products of one-parameter lists: both sides of
//! each identity are bilinear in `(b, f)`, and the iterated commutator of
//! `b1 (x) b2` at `f1 (x) f2` is the tensor product of the two one-parameter
//! commutators.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DyadicError, Result};
use crate::function::DyadicFunction;
use crate::grid::{GridSpec, Signature};
use crate::haar::{ext_analysis, ext_synthesis};
use crate::norms::{dyadic_bmo_norm, rect_bmo_norm};
use crate::operator::{multiplication_commutator, LinearOperator};
use crate::paraproduct::{
    eval_atoms, p_adjoint_atoms, p_adjoint_ext, p_atoms, p_ext, resolve_symbol, Atom, BetaRule, BkOperator,
};
use crate::product::{
    apply_in_variable, ext_analysis_2d, ext_synthesis_2d, iterated_commutator, ProductFunction, ProductGrid, Var,
};
use crate::rng::{rng_for, trial_seed};
use crate::shift::{random_shift, Orientation, ShiftFamily, ShiftOperator};

/// Which shift, if any, sits on one side of a term's core.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftUse {
    None,
    Shift,
    Transpose,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Core {
    Bk(BkOperator),
    /// `P(b, a, .)` with `a` the shift's symbol.
    P,
    /// Adjoint of `P(b, a, .)` with `b`, `a` fixed.
    PAdjoint,
}

impl Core {
    pub fn transpose(&self) -> Core {
        match self {
            Core::Bk(op) => Core::Bk(BkOperator { in_sig: op.out_sig, out_sig: op.in_sig, ..op.clone() }),
            Core::P => Core::PAdjoint,
            Core::PAdjoint => Core::P,
        }
    }

    /// Atoms with symbol slots resolved against `sym_ext`.
    pub fn atoms(&self, tree: &crate::grid::CubeTree, sym_ext: Option<&[f64]>) -> Result<Vec<Atom>> {
        let mut atoms = match self {
            Core::Bk(op) => op.atoms(tree),
            Core::P => p_atoms(tree),
            Core::PAdjoint => p_adjoint_atoms(tree),
        };
        resolve_symbol(&mut atoms, sym_ext)?;
        Ok(atoms)
    }
}

/// `outer( core(b, inner(f)) )`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub core: Core,
    pub outer: ShiftUse,
    pub inner: ShiftUse,
}

impl Factor {
    fn transpose(&self) -> Factor {
        Factor { core: self.core.transpose(), outer: self.inner, inner: self.outer }
    }
}

#[allow(non_camel_case_types)]
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TermKind {
    Bk_of_Sf,
    S_of_Bk,
    S00_of_B0,
    B0_of_S00f,
    P_term,
    Pstar_term,
    Bkl_of_Sf,
    S_of_Bkl,
    BPk,
    PBl,
    PP_term,
    PP1_term,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub kind: TermKind,
    /// Set when the term is the adjoint of an operator of `kind`.
    pub adjoint: bool,
    pub weight: f64,
    pub factor: Factor,
    pub provenance: String,
}

/// Terms for one shift, independent of `b`, plus the constant `C` with
/// `len <= C (1 + max(i, j))`.
pub fn one_parameter_terms(shift: &ShiftOperator) -> (Vec<Term>, usize) {
    let d = shift.grid().dim;
    let c_d = (1usize << (d + 1)) * ((1usize << d) - 1);
    let terms = match shift.orientation() {
        None => cancellative_terms(shift.grid(), shift.i(), shift.j()),
        Some(Orientation::Analysis) => paraproduct_terms(d),
        Some(Orientation::Synthesis) => paraproduct_terms(d)
            .into_iter()
            .map(|t| Term {
                kind: if t.kind == TermKind::P_term { TermKind::Pstar_term } else { t.kind },
                adjoint: true,
                weight: -t.weight,
                factor: t.factor.transpose(),
                provenance: format!("{} (transposed)", t.provenance),
            })
            .collect(),
    };
    (terms, c_d)
}

fn bk(k: usize, b_sig: Signature, in_sig: Signature, out_sig: Signature) -> Core {
    let beta = if k == 0 { BetaRule::Ones } else { BetaRule::AncestorSign };
    Core::Bk(BkOperator { k, b_sig, in_sig, out_sig, beta })
}

fn expansion_of_product(d: usize, k_max: usize, side: &str, kind: TermKind, weight: f64, f: Factor) -> Vec<Term> {
    let full = Signature((1u32 << d) - 1);
    let mut out = Vec::new();
    let mut push = |core: Core, prov: String| {
        out.push(Term {
            kind,
            adjoint: false,
            weight,
            factor: Factor { core, ..f.clone() },
            provenance: format!("{side}: {prov}"),
        });
    };
    for eta in Signature::cancellative(d) {
        push(bk(0, eta, full, eta), "b-cube inside the f-cube, f telescoped to its average (k=0)".into());
    }
    for eta in Signature::cancellative(d) {
        for eps in Signature::cancellative(d) {
            push(bk(0, eta, eps, eta.product(eps, d)), "equal cubes (k=0)".into());
        }
    }
    for k in 1..=k_max {
        for eta in Signature::cancellative(d) {
            for eps in Signature::cancellative(d) {
                push(bk(k, eta, eps, eps), format!("b-cube is the {k}-th ancestor"));
            }
        }
    }
    out
}

fn cancellative_terms(grid: &GridSpec, i: usize, j: usize) -> Vec<Term> {
    let d = grid.dim;
    let top = grid.depth.saturating_sub(1);
    let mut t = expansion_of_product(
        d,
        j.min(top),
        "first term b(Sf)",
        TermKind::Bk_of_Sf,
        1.0,
        Factor { core: Core::P, outer: ShiftUse::None, inner: ShiftUse::Shift },
    );
    t.extend(expansion_of_product(
        d,
        i.min(top),
        "second term S(bf)",
        TermKind::S_of_Bk,
        -1.0,
        Factor { core: Core::P, outer: ShiftUse::Shift, inner: ShiftUse::None },
    ));
    t
}

fn paraproduct_terms(d: usize) -> Vec<Term> {
    let full = Signature((1u32 << d) - 1);
    let mut t: Vec<Term> = expansion_of_product(
        d,
        0,
        "first term b(Sf)",
        TermKind::B0_of_S00f,
        1.0,
        Factor { core: Core::P, outer: ShiftUse::None, inner: ShiftUse::Shift },
    );
    t.push(Term {
        kind: TermKind::P_term,
        adjoint: false,
        weight: 1.0,
        factor: Factor { core: Core::P, outer: ShiftUse::None, inner: ShiftUse::None },
        provenance: "second term S(bf): b-cube strictly inside the output cube".into(),
    });
    for eps in Signature::cancellative(d) {
        t.push(Term {
            kind: TermKind::S00_of_B0,
            adjoint: false,
            weight: -1.0,
            factor: Factor { core: bk(0, eps, eps, full), outer: ShiftUse::Shift, inner: ShiftUse::None },
            provenance: "second term S(bf): b-cube equals the f-cube".into(),
        });
    }
    t
}

/// A shift together with its transpose and symbol coefficients, as needed to
/// evaluate factors.
struct ShiftContext<'a> {
    shift: &'a ShiftOperator,
    transpose: ShiftOperator,
    sym_ext: Option<Vec<f64>>,
}

impl<'a> ShiftContext<'a> {
    fn new(shift: &'a ShiftOperator) -> Self {
        let tree = shift.grid().tree();
        ShiftContext {
            shift,
            transpose: shift.transpose(),
            sym_ext: shift.symbol().map(|a| ext_analysis(&tree, a.samples())),
        }
    }

    fn apply(&self, u: ShiftUse, x: &[f64]) -> Vec<f64> {
        match u {
            ShiftUse::None => x.to_vec(),
            ShiftUse::Shift => self.shift.apply_samples(x),
            ShiftUse::Transpose => self.transpose.apply_samples(x),
        }
    }

    fn apply_var(&self, u: ShiftUse, var: Var, f: ProductFunction) -> Result<ProductFunction> {
        match u {
            ShiftUse::None => Ok(f),
            ShiftUse::Shift => apply_in_variable(self.shift, var, &f),
            ShiftUse::Transpose => apply_in_variable(&self.transpose, var, &f),
        }
    }

    fn symbol(&self) -> Result<&[f64]> {
        self.sym_ext.as_deref().ok_or_else(|| DyadicError::Spec("paraproduct term on a shift without symbol".into()))
    }
}

fn eval_factor(ctx: &ShiftContext, factor: &Factor, bext: &[f64], f: &[f64]) -> Result<Vec<f64>> {
    let tree = ctx.shift.grid().tree();
    let g = ctx.apply(factor.inner, f);
    let gext = ext_analysis(&tree, &g);
    let out = match &factor.core {
        Core::Bk(op) => {
            op.validate(ctx.shift.grid())?;
            let mut out = vec![0.0; tree.ext_len()];
            eval_atoms(&op.atoms(&tree), bext, &gext, &mut out);
            out
        }
        Core::P => p_ext(&tree, bext, ctx.symbol()?, &gext),
        Core::PAdjoint => p_adjoint_ext(&tree, bext, ctx.symbol()?, &gext),
    };
    Ok(ctx.apply(factor.outer, &ext_synthesis(&tree, &out)))
}

#[derive(Clone, Debug)]
pub struct TermList {
    pub b: DyadicFunction,
    pub shift: ShiftOperator,
    pub terms: Vec<Term>,
    /// `C` in `len <= C (1 + max(i, j))`.
    pub count_constant: usize,
}

impl TermList {
    pub fn count_bound(&self) -> usize {
        self.count_constant * (1 + self.shift.i().max(self.shift.j()))
    }

    pub fn to_json(&self) -> Result<String> {
        let v = serde_json::json!({
            "b": self.b,
            "shift": serde_json::from_str::<serde_json::Value>(&self.shift.to_json()?)?,
            "terms": self.terms,
            "count_constant": self.count_constant,
        });
        Ok(serde_json::to_string(&v)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            b: DyadicFunction,
            shift: serde_json::Value,
            terms: Vec<Term>,
            count_constant: usize,
        }
        let raw: Raw = serde_json::from_str(s)?;
        let shift = ShiftOperator::from_json(&raw.shift.to_string())?;
        shift.grid().ensure_same(raw.b.grid())?;
        Ok(TermList { b: raw.b, shift, terms: raw.terms, count_constant: raw.count_constant })
    }
}

/// Term list of `[M_b, S]` for a cancellative shift.
pub fn decompose_cancellative(b: &DyadicFunction, s: &ShiftOperator) -> Result<TermList> {
    if !s.is_cancellative() {
        return Err(DyadicError::WrongKind("expected a cancellative shift".into()));
    }
    decompose(b, s)
}

/// Term list of `[M_b, S]` for a paraproduct shift of either orientation.
pub fn decompose_noncancellative(b: &DyadicFunction, s: &ShiftOperator) -> Result<TermList> {
    if s.is_cancellative() {
        return Err(DyadicError::WrongKind("expected a noncancellative shift".into()));
    }
    decompose(b, s)
}

pub fn decompose(b: &DyadicFunction, s: &ShiftOperator) -> Result<TermList> {
    s.grid().ensure_same(b.grid())?;
    let (terms, count_constant) = one_parameter_terms(s);
    Ok(TermList { b: b.clone(), shift: s.clone(), terms, count_constant })
}

/// Evaluates `sum_t weight_t * term_t(f)`; `mask` selects terms (all when `None`).
pub fn evaluate_terms_masked(list: &TermList, f: &DyadicFunction, mask: Option<&[bool]>) -> Result<DyadicFunction> {
    list.shift.grid().ensure_same(f.grid())?;
    let tree = f.grid().tree();
    let ctx = ShiftContext::new(&list.shift);
    let bext = ext_analysis(&tree, list.b.samples());
    let mut acc = vec![0.0; f.grid().n_cells()];
    for (n, t) in list.terms.iter().enumerate() {
        if mask.is_some_and(|m| !m[n]) {
            continue;
        }
        let v = eval_factor(&ctx, &t.factor, &bext, f.samples())?;
        for (a, x) in acc.iter_mut().zip(v) {
            *a += t.weight * x;
        }
    }
    Ok(DyadicFunction::from_parts(f.grid().clone(), acc))
}

pub fn evaluate_terms(list: &TermList, f: &DyadicFunction) -> Result<DyadicFunction> {
    evaluate_terms_masked(list, f, None)
}

/// Evaluates a single term (weight included).
pub fn evaluate_term(list: &TermList, n: usize, f: &DyadicFunction) -> Result<DyadicFunction> {
    let mut mask = vec![false; list.terms.len()];
    mask[n] = true;
    evaluate_terms_masked(list, f, Some(&mask))
}

/// `||b||_BMO`, or the sup norm for constants, as the scale of a commutator.
fn symbol_scale(bmo: f64, sup: f64) -> f64 {
    if bmo > 0.0 {
        bmo
    } else if sup > 0.0 {
        sup
    } else {
        1.0
    }
}

/// `||[M_b, S] f - sum terms(f)||_2 / (||b||_BMO ||f||_2)`.
pub fn relative_residual(list: &TermList, f: &DyadicFunction) -> Result<f64> {
    let direct = multiplication_commutator(&list.b, &LinearOperator::from_shift(&list.shift), f)?;
    let terms = evaluate_terms(list, f)?;
    let scale = symbol_scale(dyadic_bmo_norm(&list.b), list.b.max_abs()) * f.norm_l2();
    Ok(direct.sub(&terms)?.norm_l2() / if scale > 0.0 { scale } else { 1.0 })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub case: String,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub i: usize,
    pub j: usize,
    pub term_count: usize,
    pub count_bound: usize,
    pub trials: usize,
    pub max_residual: f64,
    pub tol: f64,
    pub pass: bool,
    /// Seed of the trial with the largest residual.
    pub worst_seed: u64,
}

/// Checks the identity for one fixed `(b, S)` over `trials` random `f`.
pub fn verify_identity(list: &TermList, trials: usize, seed: u64, tol: f64) -> Result<VerifyReport> {
    let mut worst = (0.0f64, trial_seed(seed, 0));
    for t in 0..trials as u64 {
        let mut rng = rng_for(seed, t);
        let f = DyadicFunction::random(list.b.grid(), &mut rng);
        let r = relative_residual(list, &f)?;
        if r > worst.0 || r.is_nan() {
            worst = (r, trial_seed(seed, t));
        }
    }
    let g = list.b.grid();
    Ok(VerifyReport {
        case: case_name(&list.shift),
        d: g.dim,
        n: g.depth,
        i: list.shift.i(),
        j: list.shift.j(),
        term_count: list.terms.len(),
        count_bound: list.count_bound(),
        trials,
        max_residual: worst.0,
        tol,
        pass: worst.0 < tol && list.terms.len() <= list.count_bound(),
        worst_seed: worst.1,
    })
}

fn case_name(s: &ShiftOperator) -> String {
    match s.orientation() {
        None => "cancellative".into(),
        Some(Orientation::Analysis) => "noncancellative_analysis".into(),
        Some(Orientation::Synthesis) => "noncancellative_synthesis".into(),
    }
}

/// One random `(b, S, f)` triple per trial; trial `t` is reproducible from
/// `trial_seed(seed, t)` alone.
pub fn random_case(
    grid: &GridSpec,
    i: usize,
    j: usize,
    family: ShiftFamily,
    seed: u64,
) -> Result<(TermList, DyadicFunction)> {
    let mut rng = rng_for(seed, 0);
    let b = DyadicFunction::random(grid, &mut rng);
    let s = random_shift(grid, i, j, rng.gen(), family)?;
    let f = DyadicFunction::random(grid, &mut rng);
    Ok((decompose(&b, &s)?, f))
}

/// Identity check over `trials` independent random triples.
pub fn verify_random_cases(
    grid: &GridSpec,
    i: usize,
    j: usize,
    family: ShiftFamily,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<VerifyReport> {
    use rayon::prelude::*;
    let results: Vec<(f64, usize, usize, String)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let (list, f) = random_case(grid, i, j, family, trial_seed(seed, t))?;
            Ok((relative_residual(&list, &f)?, list.terms.len(), list.count_bound(), case_name(&list.shift)))
        })
        .collect::<Result<_>>()?;
    let mut worst = (0.0f64, trial_seed(seed, 0));
    let (mut count, mut bound, mut case) = (0, usize::MAX, String::new());
    for (t, (r, c, b, name)) in results.into_iter().enumerate() {
        if r > worst.0 || r.is_nan() {
            worst = (r, trial_seed(seed, t as u64));
        }
        count = count.max(c);
        bound = bound.min(b);
        case = name;
    }
    Ok(VerifyReport {
        case,
        d: grid.dim,
        n: grid.depth,
        i,
        j,
        term_count: count,
        count_bound: bound,
        trials,
        max_residual: worst.0,
        tol,
        pass: worst.0 < tol && count <= bound,
        worst_seed: worst.1,
    })
}

// ---------------------------------------------------------------------------
// two parameters

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductTerm {
    pub kind: TermKind,
    pub adjoint: bool,
    pub weight: f64,
    pub factors: [Factor; 2],
    pub provenance: String,
}

#[derive(Clone, Debug)]
pub struct ProductTermList {
    pub b: ProductFunction,
    pub shift1: ShiftOperator,
    pub shift2: ShiftOperator,
    pub terms: Vec<ProductTerm>,
    /// `C` in `len <= C (1 + max(i1, j1)) (1 + max(i2, j2))`.
    pub count_constant: usize,
}

impl ProductTermList {
    pub fn count_bound(&self) -> usize {
        self.count_constant * (1 + self.shift1.i().max(self.shift1.j())) * (1 + self.shift2.i().max(self.shift2.j()))
    }

    pub fn to_json(&self) -> Result<String> {
        let v = serde_json::json!({
            "b": self.b,
            "shift1": serde_json::from_str::<serde_json::Value>(&self.shift1.to_json()?)?,
            "shift2": serde_json::from_str::<serde_json::Value>(&self.shift2.to_json()?)?,
            "terms": self.terms,
            "count_constant": self.count_constant,
        });
        Ok(serde_json::to_string(&v)?)
    }
}

/// Names the tensor product of two one-parameter factors.
pub fn classify(f1: &Factor, f2: &Factor) -> (TermKind, bool) {
    use Core::*;
    match (&f1.core, &f2.core) {
        (Bk(_), Bk(_)) => {
            let outer = f1.outer != ShiftUse::None || f2.outer != ShiftUse::None;
            (if outer { TermKind::S_of_Bkl } else { TermKind::Bkl_of_Sf }, false)
        }
        (Bk(_), P) => (TermKind::BPk, false),
        (Bk(_), PAdjoint) => (TermKind::BPk, true),
        (P, Bk(_)) => (TermKind::PBl, false),
        (PAdjoint, Bk(_)) => (TermKind::PBl, true),
        (P, P) => (TermKind::PP_term, false),
        (PAdjoint, P) => (TermKind::PP1_term, false),
        (P, PAdjoint) => (TermKind::PP1_term, true),
        (PAdjoint, PAdjoint) => (TermKind::PP_term, true),
    }
}

/// Term list of `[[M_b, S1], S2]` with `S1` acting in variable 1 and `S2` in variable 2.
pub fn decompose_biparam(b: &ProductFunction, s1: &ShiftOperator, s2: &ShiftOperator) -> Result<ProductTermList> {
    s1.grid().ensure_same(&b.grid().grid1).map_err(|e| DyadicError::GridMismatch(format!("variable 1: {e}")))?;
    s2.grid().ensure_same(&b.grid().grid2).map_err(|e| DyadicError::GridMismatch(format!("variable 2: {e}")))?;
    let (t1, c1) = one_parameter_terms(s1);
    let (t2, c2) = one_parameter_terms(s2);
    let mut terms = Vec::with_capacity(t1.len() * t2.len());
    for a in &t1 {
        for c in &t2 {
            let (kind, adjoint) = classify(&a.factor, &c.factor);
            terms.push(ProductTerm {
                kind,
                adjoint,
                weight: a.weight * c.weight,
                factors: [a.factor.clone(), c.factor.clone()],
                provenance: format!("[{}] x [{}]", a.provenance, c.provenance),
            });
        }
    }
    Ok(ProductTermList { b: b.clone(), shift1: s1.clone(), shift2: s2.clone(), terms, count_constant: c1 * c2 })
}

/// `out[o1, o2] += w1 w2 sym(s1, s2) b[b1, b2] g[g1, g2]` over all atom pairs.
/// Without a joint symbol the atom weights must already be resolved.
pub fn tensor_eval(
    atoms1: &[Atom],
    atoms2: &[Atom],
    e2: usize,
    b: &[f64],
    g: &[f64],
    joint: Option<&[f64]>,
    out: &mut [f64],
) {
    for x in atoms1 {
        let (ob, bb, gb) = (x.out as usize * e2, x.b as usize * e2, x.g as usize * e2);
        let sb = x.sym as usize * e2;
        for y in atoms2 {
            let mut w = x.w * y.w;
            if let Some(a) = joint {
                w *= a[sb + y.sym as usize];
            }
            out[ob + y.out as usize] += w * b[bb + y.b as usize] * g[gb + y.g as usize];
        }
    }
}

fn eval_product_term(
    ctx1: &ShiftContext,
    ctx2: &ShiftContext,
    grid: &ProductGrid,
    term: &ProductTerm,
    bext: &[f64],
    f: &ProductFunction,
) -> Result<ProductFunction> {
    let [f1, f2] = &term.factors;
    let g = ctx1.apply_var(f1.inner, Var::One, f.clone())?;
    let g = ctx2.apply_var(f2.inner, Var::Two, g)?;
    let gext = ext_analysis_2d(&g);
    let t1 = grid.grid1.tree();
    let t2 = grid.grid2.tree();
    let a1 = f1.core.atoms(&t1, ctx1.sym_ext.as_deref())?;
    let a2 = f2.core.atoms(&t2, ctx2.sym_ext.as_deref())?;
    let mut out = vec![0.0; t1.ext_len() * t2.ext_len()];
    tensor_eval(&a1, &a2, t2.ext_len(), bext, &gext, None, &mut out);
    let h = ext_synthesis_2d(grid, &out);
    let h = ctx1.apply_var(f1.outer, Var::One, h)?;
    ctx2.apply_var(f2.outer, Var::Two, h)
}

pub fn evaluate_product_terms_masked(
    list: &ProductTermList,
    f: &ProductFunction,
    mask: Option<&[bool]>,
) -> Result<ProductFunction> {
    list.b.grid().ensure_same(f.grid())?;
    let ctx1 = ShiftContext::new(&list.shift1);
    let ctx2 = ShiftContext::new(&list.shift2);
    let bext = ext_analysis_2d(&list.b);
    let mut acc = ProductFunction::zeros(f.grid());
    for (n, t) in list.terms.iter().enumerate() {
        if mask.is_some_and(|m| !m[n]) {
            continue;
        }
        let v = eval_product_term(&ctx1, &ctx2, f.grid(), t, &bext, f)?;
        acc.add_scaled(t.weight, &v)?;
    }
    Ok(acc)
}

pub fn evaluate_product_terms(list: &ProductTermList, f: &ProductFunction) -> Result<ProductFunction> {
    evaluate_product_terms_masked(list, f, None)
}

/// `||[[M_b,S1],S2] f - sum terms(f)||_2 / (||b||_rect ||f||_2)`.
pub fn product_relative_residual(list: &ProductTermList, f: &ProductFunction) -> Result<f64> {
    let direct = iterated_commutator(&list.b, &list.shift1, &list.shift2, f)?;
    let terms = evaluate_product_terms(list, f)?;
    let scale = symbol_scale(rect_bmo_norm(&list.b), list.b.max_abs()) * f.norm_l2();
    Ok(direct.sub(&terms)?.norm_l2() / if scale > 0.0 { scale } else { 1.0 })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProductVerifyReport {
    pub case: String,
    pub d1: usize,
    #[serde(rename = "N1")]
    pub n1: usize,
    pub d2: usize,
    #[serde(rename = "N2")]
    pub n2: usize,
    pub i1: usize,
    pub j1: usize,
    pub i2: usize,
    pub j2: usize,
    pub term_count: usize,
    pub count_constant: usize,
    pub count_bound: usize,
    pub trials: usize,
    pub max_residual: f64,
    pub tol: f64,
    pub pass: bool,
    pub worst_seed: u64,
}

pub fn random_product_case(
    grid: &ProductGrid,
    shape1: (usize, usize, ShiftFamily),
    shape2: (usize, usize, ShiftFamily),
    seed: u64,
) -> Result<(ProductTermList, ProductFunction)> {
    let mut rng = rng_for(seed, 0);
    let b = ProductFunction::random(grid, &mut rng);
    let s1 = random_shift(&grid.grid1, shape1.0, shape1.1, rng.gen(), shape1.2)?;
    let s2 = random_shift(&grid.grid2, shape2.0, shape2.1, rng.gen(), shape2.2)?;
    let f = ProductFunction::random(grid, &mut rng);
    Ok((decompose_biparam(&b, &s1, &s2)?, f))
}

pub fn verify_random_product_cases(
    grid: &ProductGrid,
    shape1: (usize, usize, ShiftFamily),
    shape2: (usize, usize, ShiftFamily),
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<ProductVerifyReport> {
    use rayon::prelude::*;
    let results: Vec<(f64, usize, usize, usize)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let (list, f) = random_product_case(grid, shape1, shape2, trial_seed(seed, t))?;
            Ok((product_relative_residual(&list, &f)?, list.terms.len(), list.count_constant, list.count_bound()))
        })
        .collect::<Result<_>>()?;
    let mut worst = (0.0f64, trial_seed(seed, 0));
    let (mut count, mut constant, mut bound) = (0, 0, usize::MAX);
    for (t, (r, c, k, b)) in results.into_iter().enumerate() {
        if r > worst.0 || r.is_nan() {
            worst = (r, trial_seed(seed, t as u64));
        }
        count = count.max(c);
        constant = k;
        bound = bound.min(b);
    }
    let name = |f: ShiftFamily| match f {
        ShiftFamily::Cancellative => "c",
        ShiftFamily::Noncancellative(Orientation::Analysis) => "na",
        ShiftFamily::Noncancellative(Orientation::Synthesis) => "ns",
    };
    Ok(ProductVerifyReport {
        case: format!("{}x{}", name(shape1.2), name(shape2.2)),
        d1: grid.grid1.dim,
        n1: grid.grid1.depth,
        d2: grid.grid2.dim,
        n2: grid.grid2.depth,
        i1: shape1.0,
        j1: shape1.1,
        i2: shape2.0,
        j2: shape2.1,
        term_count: count,
        count_constant: constant,
        count_bound: bound,
        trials,
        max_residual: worst.0,
        tol,
        pass: worst.0 < tol && count <= bound,
        worst_seed: worst.1,
    })
}
