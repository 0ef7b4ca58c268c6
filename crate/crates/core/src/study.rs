//! Empirical boundedness studies: ratios of output norms to the BMO factors
//! that bound them, maximized over seeded random trials.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biparam::{apply_biparam, BiparamOperatorSpec};
use crate::decomp::random_case;
use crate::error::{DyadicError, Result};
use crate::function::DyadicFunction;
use crate::grid::{DyadicCube, GridSpec, Signature};
use crate::haar::ext_synthesis;
use crate::norms::{
    dyadic_bmo_norm, fs_check, geometric_constant, geometric_constant_limit, geometric_truncation_bound, jn_check,
    rect_bmo_norm, square_function_k,
};
use crate::operator::{multiplication_commutator, LinearOperator};
use crate::paraproduct::{apply_bk, apply_p, BetaRule, BkOperator};
use crate::product::{ProductFunction, ProductGrid};
use crate::rng::{rng_for, trial_seed, TrialRng};
use crate::shift::ShiftFamily;

/// One study record; CSV columns follow the field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub kind: String,
    pub k: Option<usize>,
    pub l: Option<usize>,
    pub i: Option<usize>,
    pub j: Option<usize>,
    pub trials: usize,
    pub max_ratio: f64,
    pub seed: u64,
    /// Seed of the trial attaining `max_ratio`.
    pub worst_seed: u64,
}

impl NormReport {
    fn new(kind: &str, trials: usize, seed: u64) -> Self {
        NormReport {
            kind: kind.into(),
            k: None,
            l: None,
            i: None,
            j: None,
            trials,
            max_ratio: 0.0,
            seed,
            worst_seed: seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StudyKind {
    /// `||B_k(b, f)|| / (||b||_BMO ||f||)`, all-cancellative signatures.
    Bk,
    /// `||S^(k) f|| / ||f||`.
    Sk,
    /// `||P(b, a, f)|| / (||b|| ||a|| ||f||)`.
    P,
    Bkl,
    PP,
    PP1,
    BPk,
    PBl,
}

impl StudyKind {
    pub fn is_biparam(self) -> bool {
        matches!(self, StudyKind::Bkl | StudyKind::PP | StudyKind::PP1 | StudyKind::BPk | StudyKind::PBl)
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "Bk" | "bk" => StudyKind::Bk,
            "Sk" | "sk" => StudyKind::Sk,
            "P" | "p" => StudyKind::P,
            "Bkl" | "bkl" => StudyKind::Bkl,
            "PP" | "pp" => StudyKind::PP,
            "PP1" | "pp1" => StudyKind::PP1,
            "BPk" | "bpk" => StudyKind::BPk,
            "PBl" | "pbl" => StudyKind::PBl,
            _ => return Err(DyadicError::Spec(format!("unknown study kind {s}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Bk => "Bk",
            StudyKind::Sk => "Sk",
            StudyKind::P => "P",
            StudyKind::Bkl => "Bkl",
            StudyKind::PP => "PP",
            StudyKind::PP1 => "PP1",
            StudyKind::BPk => "BPk",
            StudyKind::PBl => "PBl",
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn random_cancellative_bk(rng: &mut TrialRng, d: usize, k: usize) -> BkOperator {
    let sigs: Vec<Signature> = Signature::cancellative(d).collect();
    let mut pick = || *sigs.choose(rng).expect("d >= 1");
    BkOperator { k, b_sig: pick(), in_sig: pick(), out_sig: pick(), beta: BetaRule::AncestorSign }
}

/// Haar packet on one level `>= k` plus small noise. `S^(k)` keeps every
/// coefficient of such a packet, so these probes approach the supremum.
fn sk_probe(grid: &GridSpec, k: usize, rng: &mut TrialRng) -> DyadicFunction {
    let tree = grid.tree();
    let level = rng.gen_range(k..grid.depth);
    let mut ext = vec![0.0; tree.ext_len()];
    for g in tree.cubes_at(level) {
        for s in Signature::cancellative(grid.dim) {
            ext[tree.ext(g, s)] = rng.gen_range(-1.0..=1.0);
        }
    }
    let mut samples = ext_synthesis(&tree, &ext);
    for v in &mut samples {
        *v += 1e-3 * rng.gen_range(-1.0..=1.0);
    }
    DyadicFunction::new(grid.clone(), samples).expect("sizes match")
}

fn one_param_trial(kind: StudyKind, grid: &GridSpec, k: usize, rng: &mut TrialRng) -> Result<f64> {
    match kind {
        StudyKind::Bk => {
            let b = DyadicFunction::random(grid, rng);
            let f = DyadicFunction::random(grid, rng);
            let op = random_cancellative_bk(rng, grid.dim, k);
            Ok(ratio(apply_bk(&op, &b, &f)?.norm_l2(), dyadic_bmo_norm(&b) * f.norm_l2()))
        }
        StudyKind::Sk => {
            let f = sk_probe(grid, k, rng);
            Ok(ratio(square_function_k(&f, k)?.norm_l2(), f.norm_l2()))
        }
        StudyKind::P => {
            let b = DyadicFunction::random(grid, rng);
            let a = DyadicFunction::random(grid, rng);
            let f = DyadicFunction::random(grid, rng);
            Ok(ratio(apply_p(&b, &a, &f)?.norm_l2(), dyadic_bmo_norm(&b) * dyadic_bmo_norm(&a) * f.norm_l2()))
        }
        _ => Err(DyadicError::WrongKind(format!("{} is bi-parameter", kind.name()))),
    }
}

fn biparam_trial(kind: StudyKind, grid: &ProductGrid, k: usize, l: usize, rng: &mut TrialRng) -> Result<f64> {
    let b = ProductFunction::random(grid, rng);
    let f = ProductFunction::random(grid, rng);
    let (spec, symbol_norm) = match kind {
        StudyKind::Bkl => {
            let op1 = random_cancellative_bk(rng, grid.grid1.dim, k);
            let op2 = random_cancellative_bk(rng, grid.grid2.dim, l);
            (BiparamOperatorSpec::Bkl { op1, op2 }, 1.0)
        }
        StudyKind::PP | StudyKind::PP1 => {
            let a = ProductFunction::random(grid, rng);
            let n = rect_bmo_norm(&a);
            (if kind == StudyKind::PP { BiparamOperatorSpec::PP { a } } else { BiparamOperatorSpec::PP1 { a } }, n)
        }
        StudyKind::BPk => {
            let op1 = random_cancellative_bk(rng, grid.grid1.dim, k);
            let a2 = DyadicFunction::random(&grid.grid2, rng);
            let n = dyadic_bmo_norm(&a2);
            (BiparamOperatorSpec::BPk { op1, a2 }, n)
        }
        StudyKind::PBl => {
            let op2 = random_cancellative_bk(rng, grid.grid2.dim, l);
            let a1 = DyadicFunction::random(&grid.grid1, rng);
            let n = dyadic_bmo_norm(&a1);
            (BiparamOperatorSpec::PBl { a1, op2 }, n)
        }
        _ => return Err(DyadicError::WrongKind(format!("{} is one-parameter", kind.name()))),
    };
    Ok(ratio(apply_biparam(&spec, &b, &f)?.norm_l2(), rect_bmo_norm(&b) * symbol_norm * f.norm_l2()))
}

/// Runs `trials` seeded trials of `trial` in parallel and keeps the maximum;
/// ties and ordering are resolved by trial index, so the result does not
/// depend on the thread count.
fn max_over_trials<F>(trials: usize, seed: u64, trial: F) -> Result<(f64, u64)>
where
    F: Fn(&mut TrialRng) -> Result<f64> + Sync,
{
    let values: Vec<f64> =
        (0..trials as u64).into_par_iter().map(|t| trial(&mut rng_for(seed, t))).collect::<Result<_>>()?;
    let mut best = (0.0, trial_seed(seed, 0));
    for (t, v) in values.into_iter().enumerate() {
        if v > best.0 || v.is_nan() {
            best = (v, trial_seed(seed, t as u64));
        }
    }
    Ok(best)
}

/// One report per `(k, l)` in `params` (`l` ignored for one-parameter kinds).
/// One-parameter kinds run on `(d, n)`, bi-parameter kinds on `(d, n) x (d, n)`.
pub fn uniformity_study(
    kind: StudyKind,
    d: usize,
    n: usize,
    params: &[(usize, usize)],
    trials: usize,
    seed: u64,
) -> Result<Vec<NormReport>> {
    let mut out = Vec::with_capacity(params.len());
    for &(k, l) in params {
        let mut rep = NormReport::new(kind.name(), trials, seed);
        rep.k = Some(k);
        let (max, worst) = if kind.is_biparam() {
            rep.l = Some(l);
            let grid = ProductGrid::unshifted(d, n, d, n)?;
            max_over_trials(trials, seed, |rng| biparam_trial(kind, &grid, k, l, rng))?
        } else {
            let grid = GridSpec::new(d, n)?;
            if k >= n {
                return Err(DyadicError::Depth { i: k, j: 0, depth: n });
            }
            max_over_trials(trials, seed, |rng| one_param_trial(kind, &grid, k, rng))?
        };
        rep.max_ratio = max;
        rep.worst_seed = worst;
        out.push(rep);
    }
    Ok(out)
}

/// John-Nirenberg ratios over random symbols on random cubes, one report per exponent.
pub fn jn_study(grid: &GridSpec, ps: &[f64], trials: usize, seed: u64) -> Result<Vec<NormReport>> {
    ps.iter()
        .map(|&p| {
            let (max, worst) = max_over_trials(trials, seed, |rng| {
                let a = DyadicFunction::random(grid, rng);
                let level = rng.gen_range(0..grid.depth);
                let pos = (0..grid.dim).map(|_| rng.gen_range(0..1u32 << level)).collect();
                jn_check(&a, &DyadicCube { level, pos }, p)
            })?;
            let mut rep = NormReport::new(&format!("jn_p{p}"), trials, seed);
            rep.max_ratio = max;
            rep.worst_seed = worst;
            Ok(rep)
        })
        .collect()
}

/// Fefferman-Stein ratios over random families of `family_size` functions.
pub fn fs_study(grid: &GridSpec, ps: &[f64], family_size: usize, trials: usize, seed: u64) -> Result<Vec<NormReport>> {
    ps.iter()
        .map(|&p| {
            let (max, worst) = max_over_trials(trials, seed, |rng| {
                let family: Vec<DyadicFunction> = (0..family_size)
                    .map(|_| {
                        // localized bumps make the maximal function work harder than noise
                        let tree = grid.tree();
                        let level = rng.gen_range(0..=grid.depth);
                        let cube = tree.cubes_at(level).start + rng.gen_range(0..tree.cubes_at(level).len());
                        let mut ext = vec![0.0; tree.ext_len()];
                        ext[tree.ext(cube, tree.full())] = 1.0;
                        DyadicFunction::new(grid.clone(), ext_synthesis(&tree, &ext)).expect("sizes match")
                    })
                    .collect();
                fs_check(&family, p)
            })?;
            let mut rep = NormReport::new(&format!("fs_p{p}"), trials, seed);
            rep.max_ratio = max;
            rep.worst_seed = worst;
            Ok(rep)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundStudy {
    pub delta: f64,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    /// Per `(i, j)`: `max ||[b,S]f|| / ((1 + max(i,j)) ||b||_BMO ||f||)`.
    pub reports: Vec<NormReport>,
    /// `max_{i,j}` of the ratios above.
    pub sup_ratio: f64,
    /// `sum_{i,j} 2^{-max(i,j) delta/2} max ||[b,S^{ij}]f||` with `||b||_BMO = ||f|| = 1`.
    pub weighted_total: f64,
    pub geometric_constant: f64,
    pub geometric_limit: f64,
    pub truncation_bound: f64,
}

/// Commutator norms over the same random `(b, S, f)` triples the identity
/// checks use, normalized by `(1 + max(i, j)) ||b||_BMO ||f||_2`.
pub fn commutator_bound_study(
    grid: &GridSpec,
    delta: f64,
    i_max: usize,
    j_max: usize,
    trials: usize,
    seed: u64,
) -> Result<BoundStudy> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(DyadicError::OutOfRange(format!("delta {delta} outside (0, 1]")));
    }
    let mut reports = Vec::new();
    let mut weighted = 0.0;
    let mut sup: f64 = 0.0;
    for i in 0..=i_max {
        for j in 0..=j_max {
            let m = i.max(j);
            let values: Vec<f64> = (0..trials as u64)
                .into_par_iter()
                .map(|t| {
                    let (list, f) = random_case(grid, i, j, ShiftFamily::Cancellative, trial_seed(seed, t))?;
                    let c = multiplication_commutator(&list.b, &LinearOperator::from_shift(&list.shift), &f)?;
                    Ok(ratio(c.norm_l2(), (1 + m) as f64 * dyadic_bmo_norm(&list.b) * f.norm_l2()))
                })
                .collect::<Result<_>>()?;
            let mut rep = NormReport::new("commutator", trials, seed);
            rep.i = Some(i);
            rep.j = Some(j);
            for (t, v) in values.into_iter().enumerate() {
                if v > rep.max_ratio || v.is_nan() {
                    rep.max_ratio = v;
                    rep.worst_seed = trial_seed(seed, t as u64);
                }
            }
            sup = sup.max(rep.max_ratio);
            weighted += (-(m as f64) * delta / 2.0).exp2() * (1 + m) as f64 * rep.max_ratio;
            reports.push(rep);
        }
    }
    let cap = i_max.max(j_max);
    Ok(BoundStudy {
        delta,
        d: grid.dim,
        n: grid.depth,
        reports,
        sup_ratio: sup,
        weighted_total: weighted,
        geometric_constant: geometric_constant(delta, cap),
        geometric_limit: geometric_constant_limit(delta),
        truncation_bound: geometric_truncation_bound(delta, cap),
    })
}

/// `||S f|| / ||f||` for cancellative shifts: at most 1.
pub fn contraction_ratio(grid: &GridSpec, i: usize, j: usize, shift_seed: u64, f_trials: usize) -> Result<f64> {
    let s = crate::shift::random_shift(grid, i, j, shift_seed, ShiftFamily::Cancellative)?;
    let mut worst: f64 = 0.0;
    for t in 0..f_trials as u64 {
        let f = DyadicFunction::random(grid, &mut rng_for(shift_seed ^ 0x5eed, t));
        worst = worst.max(ratio(crate::shift::apply_shift(&s, &f)?.norm_l2(), f.norm_l2()));
    }
    Ok(worst)
}
