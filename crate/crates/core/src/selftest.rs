//! Invariant suite: orthonormality, Parseval, roundtrips, adjoint duality,
//! mean invariance of commutators, and the `p = 2` John-Nirenberg bound.

use serde::Serialize;

use crate::biparam::{apply_biparam, BiparamOperatorSpec};
use crate::error::Result;
use crate::function::{inner_product, DyadicFunction};
use crate::grid::{GridSpec, HaarIndex, Signature};
use crate::haar::{haar_forward, haar_function, haar_inverse};
use crate::norms::jn_check;
use crate::operator::{multiplication_commutator, LinearOperator};
use crate::paraproduct::{apply_p, apply_p_adjoint};
use crate::product::{product_inner, ProductFunction, ProductGrid};
use crate::rng::rng_for;
use crate::shift::{apply_shift, random_shift, ShiftFamily};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Passes when `value <= tol`.
    pub tol: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelfTestReport {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// Grids above this many cells check orthonormality on a seeded subset.
const FULL_GRAM_LIMIT: usize = 256;

fn check(name: &str, value: f64, tol: f64) -> Check {
    Check { name: name.into(), value, tol, pass: value <= tol }
}

/// Every Haar function of the basis: the root's noncancellative one plus all
/// cancellative ones on non-leaf cubes.
fn basis(grid: &GridSpec) -> Vec<HaarIndex> {
    let tree = grid.tree();
    let mut out = vec![HaarIndex::new(tree.cube(0), grid.full_signature())];
    for g in 0..tree.n_inner() {
        for s in Signature::cancellative(grid.dim) {
            out.push(HaarIndex::new(tree.cube(g), s));
        }
    }
    out
}

pub fn run_selftest(d: usize, n: usize, seed: u64, tol: f64) -> Result<SelfTestReport> {
    let grid = GridSpec::new(d, n)?;
    let mut rng = rng_for(seed, 0);
    let mut checks = Vec::new();

    let idx = basis(&grid);
    let fns: Vec<DyadicFunction> = if grid.n_cells() <= FULL_GRAM_LIMIT {
        idx.iter().map(|h| haar_function(&grid, h)).collect::<Result<_>>()?
    } else {
        use rand::seq::SliceRandom;
        idx.choose_multiple(&mut rng, FULL_GRAM_LIMIT).map(|h| haar_function(&grid, h)).collect::<Result<_>>()?
    };
    let mut gram: f64 = 0.0;
    for (a, fa) in fns.iter().enumerate() {
        for (b, fb) in fns.iter().enumerate() {
            let target = if a == b { 1.0 } else { 0.0 };
            gram = gram.max((inner_product(fa, fb)? - target).abs());
        }
    }
    checks.push(check("orthonormality", gram, tol));
    checks.push(check("basis_size", (idx.len() as f64 - grid.n_cells() as f64).abs(), 0.0));

    let f = DyadicFunction::random(&grid, &mut rng);
    let g = DyadicFunction::random(&grid, &mut rng);
    let b = DyadicFunction::random(&grid, &mut rng);
    let a = DyadicFunction::random(&grid, &mut rng);
    let c = haar_forward(&f);
    let e = f.norm_l2().powi(2);
    checks.push(check("parseval", (c.energy() - e).abs() / e, tol));
    checks.push(check("roundtrip", haar_inverse(&c).sub(&f)?.max_abs(), tol));
    checks.push(check("json_roundtrip", DyadicFunction::from_json(&f.to_json()?)?.sub(&f)?.max_abs(), 0.0));
    checks.push(check("binary_roundtrip", DyadicFunction::from_bytes(&f.to_bytes()?)?.sub(&f)?.max_abs(), 0.0));

    let (i, j) = (1.min(n - 1), (n - 1).min(2));
    let s = random_shift(&grid, i, j, seed, ShiftFamily::Cancellative)?;
    let st = s.transpose();
    let duality = (inner_product(&apply_shift(&s, &f)?, &g)? - inner_product(&f, &apply_shift(&st, &g)?)?).abs();
    checks.push(check("shift_adjoint", duality, tol));
    let p_dual = (inner_product(&apply_p(&b, &a, &f)?, &g)? - inner_product(&f, &apply_p_adjoint(&b, &a, &g)?)?).abs();
    checks.push(check("p_adjoint", p_dual, tol));

    let pg = ProductGrid::unshifted(d, n.min(3), d, n.min(3))?;
    let r1 = |rng: &mut _| DyadicFunction::random(&pg.grid1, rng);
    let r2 = |rng: &mut _| DyadicFunction::random(&pg.grid2, rng);
    let (f1, g1, f2, g2) = (r1(&mut rng), r1(&mut rng), r2(&mut rng), r2(&mut rng));
    let pb = ProductFunction::random(&pg, &mut rng);
    let pa = ProductFunction::random(&pg, &mut rng);
    let t = ProductFunction::tensor;
    let lhs =
        product_inner(&apply_biparam(&BiparamOperatorSpec::PP { a: pa.clone() }, &pb, &t(&f1, &f2)?)?, &t(&g1, &g2)?)?;
    let rhs = product_inner(&apply_biparam(&BiparamOperatorSpec::PP1 { a: pa }, &pb, &t(&g1, &f2)?)?, &t(&f1, &g2)?)?;
    checks.push(check("pp_partial_adjoint", (lhs - rhs).abs(), tol));

    let op = LinearOperator::from_shift(&s);
    let shifted_b = b.map(|x| x + 2.5);
    let mean_inv =
        multiplication_commutator(&shifted_b, &op, &f)?.sub(&multiplication_commutator(&b, &op, &f)?)?.max_abs();
    checks.push(check("commutator_mean_invariance", mean_inv, tol));

    let jn = jn_check(&a, &grid.tree().cube(0), 2.0)?;
    checks.push(check("jn_p2_at_most_one", jn, 1.0 + 1e-12));

    let pass = checks.iter().all(|c| c.pass);
    Ok(SelfTestReport { d, n, seed, checks, pass })
}
