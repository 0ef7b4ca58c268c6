use dyadic_core::decomp::{evaluate_terms, relative_residual, Core, Factor, ShiftUse, Term, TermKind, TermList};
use dyadic_core::norms::dyadic_bmo_norm;
use dyadic_core::rng::rng_for;
use dyadic_core::shift::ShiftFamily;
use dyadic_core::{
    apply_p, apply_p_adjoint, apply_shift, decompose, haar_forward, haar_inverse, inner_product, random_shift,
    BetaRule, BkOperator, DyadicFunction, GridSpec, Orientation, Signature,
};
use proptest::prelude::*;

fn family() -> impl Strategy<Value = ShiftFamily> {
    prop_oneof![
        Just(ShiftFamily::Cancellative),
        Just(ShiftFamily::Noncancellative(Orientation::Analysis)),
        Just(ShiftFamily::Noncancellative(Orientation::Synthesis)),
    ]
}

fn grid_shape() -> impl Strategy<Value = (usize, usize)> {
    prop_oneof![(Just(1usize), 2usize..=6), (Just(2usize), 1usize..=3)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parseval_and_roundtrip((d, n) in grid_shape(), seed in any::<u64>()) {
        let grid = GridSpec::new(d, n).unwrap();
        let f = DyadicFunction::random(&grid, &mut rng_for(seed, 0));
        let c = haar_forward(&f);
        prop_assert!((c.energy() - f.norm_l2().powi(2)).abs() < 1e-11);
        let back = haar_inverse(&c);
        prop_assert!(back.sub(&f).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn bmo_is_a_seminorm_modulo_constants((d, n) in grid_shape(), seed in any::<u64>(), c in -5.0f64..5.0, lambda in -3.0f64..3.0) {
        let grid = GridSpec::new(d, n).unwrap();
        let b = DyadicFunction::random(&grid, &mut rng_for(seed, 0));
        let base = dyadic_bmo_norm(&b);
        prop_assert!((dyadic_bmo_norm(&b.map(|x| x + c)) - base).abs() < 1e-12 * (1.0 + base));
        prop_assert!((dyadic_bmo_norm(&b.scale(lambda)) - lambda.abs() * base).abs() < 1e-12 * (1.0 + base));
    }

    #[test]
    fn shift_duality_and_contraction((d, n) in grid_shape(), seed in any::<u64>(), i in 0usize..3, j in 0usize..3) {
        let grid = GridSpec::new(d, n).unwrap();
        prop_assume!(i.max(j) < n);
        let s = random_shift(&grid, i, j, seed, ShiftFamily::Cancellative).unwrap();
        let mut rng = rng_for(seed, 1);
        let f = DyadicFunction::random(&grid, &mut rng);
        let g = DyadicFunction::random(&grid, &mut rng);
        let sf = apply_shift(&s, &f).unwrap();
        prop_assert!(sf.norm_l2() <= f.norm_l2() * (1.0 + 1e-12));
        let lhs = inner_product(&sf, &g).unwrap();
        let rhs = inner_product(&f, &apply_shift(&s.transpose(), &g).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn p_duality((d, n) in grid_shape(), seed in any::<u64>()) {
        let grid = GridSpec::new(d, n).unwrap();
        let mut rng = rng_for(seed, 0);
        let r = |rng: &mut _| DyadicFunction::random(&grid, rng);
        let (b, a, f, g) = (r(&mut rng), r(&mut rng), r(&mut rng), r(&mut rng));
        let lhs = inner_product(&apply_p(&b, &a, &f).unwrap(), &g).unwrap();
        let rhs = inner_product(&f, &apply_p_adjoint(&b, &a, &g).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-11);
    }

    #[test]
    fn decomposition_is_exact((d, n) in grid_shape(), seed in any::<u64>(), i in 0usize..3, j in 0usize..3, fam in family()) {
        let grid = GridSpec::new(d, n).unwrap();
        let (i, j) = if fam == ShiftFamily::Cancellative { (i, j) } else { (0, 0) };
        prop_assume!(i.max(j) < n);
        let (list, f) = dyadic_core::decomp::random_case(&grid, i, j, fam, seed).unwrap();
        prop_assert!(relative_residual(&list, &f).unwrap() < 1e-10);
        prop_assert!(list.terms.len() <= list.count_bound());
    }

    #[test]
    fn adding_a_constant_to_b_changes_nothing((d, n) in grid_shape(), seed in any::<u64>(), c in -10.0f64..10.0, fam in family()) {
        let grid = GridSpec::new(d, n).unwrap();
        let (list, f) = dyadic_core::decomp::random_case(&grid, 0, n.min(2) - 1, ShiftFamily::Cancellative, seed).unwrap();
        let list = if fam == ShiftFamily::Cancellative { list } else {
            decompose(&list.b, &random_shift(&grid, 0, 0, seed, fam).unwrap()).unwrap()
        };
        let shifted = decompose(&list.b.map(|x| x + c), &list.shift).unwrap();
        let a = evaluate_terms(&list, &f).unwrap();
        let b = evaluate_terms(&shifted, &f).unwrap();
        prop_assert!(a.sub(&b).unwrap().norm_l2() < 1e-11 * (1.0 + c.abs()) * (1.0 + f.norm_l2()));
    }

    /// Pairs whose `b`-cube lies strictly above `K = J^(i)` contribute nothing:
    /// the ancestor terms past the shift's reach cancel between `b(Sf)` and `S(bf)`.
    #[test]
    fn contributions_above_k_vanish((d, n) in grid_shape(), seed in any::<u64>(), i in 0usize..3, j in 0usize..3) {
        let grid = GridSpec::new(d, n).unwrap();
        prop_assume!(i.max(j) < n);
        let (list, f) = dyadic_core::decomp::random_case(&grid, i, j, ShiftFamily::Cancellative, seed).unwrap();
        let mut terms = Vec::new();
        let mut push = |k: usize, weight: f64, outer: ShiftUse, inner: ShiftUse| {
            for eta in Signature::cancellative(d) {
                for eps in Signature::cancellative(d) {
                    let core = Core::Bk(BkOperator { k, b_sig: eta, in_sig: eps, out_sig: eps, beta: BetaRule::AncestorSign });
                    terms.push(Term { kind: TermKind::Bk_of_Sf, adjoint: false, weight, factor: Factor { core, outer, inner }, provenance: String::new() });
                }
            }
        };
        for k in j + 1..n {
            push(k, 1.0, ShiftUse::None, ShiftUse::Shift);
        }
        for k in i + 1..n {
            push(k, -1.0, ShiftUse::Shift, ShiftUse::None);
        }
        let tail = TermList { terms, ..list.clone() };
        let v = evaluate_terms(&tail, &f).unwrap();
        prop_assert!(v.norm_l2() < 1e-12 * (1.0 + f.norm_l2()));
    }
}

#[test]
fn dropping_any_term_breaks_the_identity() {
    let grid = GridSpec::new(1, 5).unwrap();
    for fam in [ShiftFamily::Cancellative, ShiftFamily::Noncancellative(Orientation::Synthesis)] {
        let (i, j) = if fam == ShiftFamily::Cancellative { (2, 1) } else { (0, 0) };
        let (list, f) = dyadic_core::decomp::random_case(&grid, i, j, fam, 17).unwrap();
        for drop in 0..list.terms.len() {
            let mut terms = list.terms.clone();
            terms.remove(drop);
            let mutated = TermList { terms, ..list.clone() };
            let r = relative_residual(&mutated, &f).unwrap();
            assert!(r > 1e-6, "term {drop} ({:?}) is redundant: {r:e}", list.terms[drop].kind);
        }
    }
}

#[test]
fn constant_b_terms_vanish() {
    let grid = GridSpec::new(1, 3).unwrap();
    let b = DyadicFunction::constant(&grid, 3.0);
    let f = DyadicFunction::random(&grid, &mut rng_for(2, 0));
    let s = random_shift(&grid, 1, 1, 4, ShiftFamily::Cancellative).unwrap();
    let list = decompose(&b, &s).unwrap();
    for n in 0..list.terms.len() {
        assert!(dyadic_core::decomp::evaluate_term(&list, n, &f).unwrap().max_abs() < 1e-13);
    }
}

#[test]
fn empty_list_against_zero_commutator() {
    let grid = GridSpec::new(1, 3).unwrap();
    let b = DyadicFunction::zeros(&grid);
    let s = random_shift(&grid, 0, 0, 1, ShiftFamily::Cancellative).unwrap();
    let list = TermList { terms: Vec::new(), ..decompose(&b, &s).unwrap() };
    let f = DyadicFunction::random(&grid, &mut rng_for(1, 0));
    assert_eq!(relative_residual(&list, &f).unwrap(), 0.0);
}

#[test]
fn zero_symbol_gives_zero_shift_and_terms() {
    let grid = GridSpec::new(1, 4).unwrap();
    let zero = DyadicFunction::zeros(&grid);
    let s = dyadic_core::ShiftOperator::noncancellative(&zero, Orientation::Analysis).unwrap();
    let b = DyadicFunction::random(&grid, &mut rng_for(3, 0));
    let f = DyadicFunction::random(&grid, &mut rng_for(3, 1));
    assert_eq!(apply_shift(&s, &f).unwrap().max_abs(), 0.0);
    let list = decompose(&b, &s).unwrap();
    assert!(evaluate_terms(&list, &f).unwrap().max_abs() < 1e-13);
}
