//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

mod common;

use std::time::Instant;

use common::*;
use dyadic_core::calibration::COMMUTATOR_RATIO;
use dyadic_core::decomp::{verify_random_cases, verify_random_product_cases};
use dyadic_core::montecarlo::petermichl_demo;
use dyadic_core::norms::{geometric_constant, geometric_truncation_bound};
use dyadic_core::study::{commutator_bound_study, contraction_ratio, jn_study, uniformity_study};
use dyadic_core::{
    multiplication_commutator, random_shift, run_selftest, GridSpec, LinearOperator, Orientation, ProductGrid,
    ShiftFamily, StudyKind,
};

const SEED: u64 = 7;
const NC_A: ShiftFamily = ShiftFamily::Noncancellative(Orientation::Analysis);
const NC_S: ShiftFamily = ShiftFamily::Noncancellative(Orientation::Synthesis);

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn c1_identity_one_parameter() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut fails = Vec::new();
    for (d, n, imax) in [(1usize, 6usize, 4usize), (2, 3, 2)] {
        let grid = GridSpec::new(d, n).unwrap();
        for i in 0..=imax {
            for j in 0..=imax {
                let r = verify_random_cases(&grid, i, j, ShiftFamily::Cancellative, 100, SEED, 1e-9).unwrap();
                worst = worst.max(r.max_residual);
                if !r.pass || r.term_count > r.count_bound {
                    fails.push(format!("d={d} N={n} i={i} j={j} seed={}", r.worst_seed));
                }
            }
        }
    }
    (fails.is_empty(), format!("max residual {worst:.2e} (tol 1e-9) {}", fails.join("; ")))
}

fn c2_identity_noncancellative() -> Outcome {
    let grid = GridSpec::new(1, 5).unwrap();
    let mut worst: f64 = 0.0;
    let mut ok = true;
    let mut counts = Vec::new();
    for fam in [NC_A, NC_S] {
        let r = verify_random_cases(&grid, 0, 0, fam, 100, SEED, 1e-9).unwrap();
        worst = worst.max(r.max_residual);
        ok &= r.pass && r.term_count <= r.count_bound;
        counts.push(r.term_count);
    }
    let (d, n) = (2usize, 3usize);
    let grid = GridSpec::new(d, n).unwrap();
    // The vanishing holds for S f = sum a_I <f, h_I^1> h_I; its transpose does not
    // have it, so the synthesis value is only reported.
    let same_cube = |fam| {
        let op = LinearOperator::from_shift(&random_shift(&grid, 0, 0, SEED, fam).unwrap());
        let mut worst: f64 = 0.0;
        for c in inner_cubes(d, n) {
            for e in canc(d) {
                for e2 in canc(d).into_iter().filter(|&x| x != e) {
                    let b = dyadic(&grid, h(d, n, &c, e));
                    let f = dyadic(&grid, h(d, n, &c, e2));
                    worst = worst.max(multiplication_commutator(&b, &op, &f).unwrap().norm_l2());
                }
            }
        }
        worst
    };
    let (analysis, synthesis) = (same_cube(NC_A), same_cube(NC_S));
    ok &= analysis < 1e-12;
    (
        ok,
        format!(
            "max residual {worst:.2e} (tol 1e-9), terms {counts:?}, same-cube {analysis:.2e} (tol 1e-12; transpose {synthesis:.2e})"
        ),
    )
}

fn c3_identity_biparameter() -> Outcome {
    let grid = ProductGrid::unshifted(1, 4, 1, 4).unwrap();
    let canc_shapes: Vec<_> = (0..=2).flat_map(|i| (0..=2).map(move |j| (i, j, ShiftFamily::Cancellative))).collect();
    let nc_shapes = vec![(0, 0, NC_A), (0, 0, NC_S)];
    let mut worst: f64 = 0.0;
    let mut fails = Vec::new();
    let mut summary = Vec::new();
    for (label, s1, s2) in [
        ("cxc", &canc_shapes, &canc_shapes),
        ("cxn", &canc_shapes, &nc_shapes),
        ("nxc", &nc_shapes, &canc_shapes),
        ("nxn", &nc_shapes, &nc_shapes),
    ] {
        let (mut max_count, mut constant) = (0, 0);
        for &a in s1 {
            for &b in s2 {
                let r = verify_random_product_cases(&grid, a, b, 50, SEED, 1e-9).unwrap();
                worst = worst.max(r.max_residual);
                max_count = max_count.max(r.term_count);
                constant = r.count_constant;
                if !r.pass || r.term_count > r.count_bound {
                    fails.push(format!("{label} {a:?} {b:?} seed={}", r.worst_seed));
                }
            }
        }
        summary.push(format!("{label}: terms<={max_count} C={constant}"));
    }
    (fails.is_empty(), format!("max residual {worst:.2e} (tol 1e-9), {} {}", summary.join(", "), fails.join("; ")))
}

fn c4_contraction() -> Outcome {
    let shapes = [(1usize, 3usize), (1, 5), (1, 7), (2, 2), (2, 3), (3, 2)];
    let mut worst: f64 = 0.0;
    let mut shifts = 0;
    while shifts < 1000 {
        for &(d, n) in &shapes {
            let grid = GridSpec::new(d, n).unwrap();
            let top = (n - 1).min(3);
            let (i, j) = (shifts % (top + 1), (shifts / 7) % (top + 1));
            worst = worst.max(contraction_ratio(&grid, i, j, SEED ^ shifts as u64, 10).unwrap());
            shifts += 1;
        }
    }
    (worst <= 1.0 + 1e-12, format!("{shifts} shifts x 10 functions, max ||Sf||/||f|| = {worst:.15}"))
}

fn c5_bk_uniform() -> Outcome {
    let params: Vec<_> = (0..=8).map(|k| (k, 0)).collect();
    let reps = uniformity_study(StudyKind::Bk, 1, 10, &params, 100, SEED).unwrap();
    let worst = reps.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
    (worst <= 1.0 + 1e-12, format!("k=0..8 on d=1 N=10, max ratio {worst:.15}"))
}

fn c6_oracles() -> Outcome {
    let res = oracle_suite(20, SEED);
    let worst = res.iter().map(|r| r.1).fold(0.0, f64::max);
    (worst < 1e-10, format!("{} operators, max relative difference {worst:.2e} (tol 1e-10)", res.len()))
}

fn c7_geometric_constant() -> Outcome {
    let g = geometric_constant(2.0, 60);
    let tail = geometric_truncation_bound(2.0, 60);
    (
        (g - 20.0).abs() <= 1e-10,
        format!("G(2, 60) = {g:.12}, |G - 20| = {:.2e}, truncation bound {tail:.2e}", (g - 20.0).abs()),
    )
}

fn c8_commutator_bound() -> Outcome {
    let grid = GridSpec::new(1, 6).unwrap();
    let st = commutator_bound_study(&grid, 1.0, 4, 4, 100, SEED).unwrap();
    (
        COMMUTATOR_RATIO.holds(st.sup_ratio),
        format!(
            "sup ratio {:.4} <= {:.4}, weighted total {:.3} vs geometric constant {:.3}",
            st.sup_ratio,
            COMMUTATOR_RATIO.limit(),
            st.weighted_total,
            st.geometric_constant
        ),
    )
}

fn c9_monte_carlo() -> Outcome {
    let r = petermichl_demo(6, 10_000, SEED).unwrap();
    let ok = r.toeplitz.pass && r.antisymmetry.pass && !r.single_omega_toeplitz.pass;
    let line = |t: &dyadic_core::montecarlo::EntryTest| {
        format!("{}/{:.1} exceed, max z {:.2}", t.exceedances, t.allowed, t.max_z)
    };
    (
        ok,
        format!(
            "averaged toeplitz {}, antisymmetry {}, single grid toeplitz {} (must fail)",
            line(&r.toeplitz),
            line(&r.antisymmetry),
            line(&r.single_omega_toeplitz)
        ),
    )
}

fn c10_core_algebra() -> Outcome {
    let mut ok = true;
    let mut failed = Vec::new();
    for (d, n) in [(1usize, 6usize), (2, 3), (3, 2)] {
        let r = run_selftest(d, n, SEED, 1e-11).unwrap();
        for c in r.checks.iter().filter(|c| !c.pass) {
            failed.push(format!("d={d} N={n} {} = {:.2e}", c.name, c.value));
        }
        ok &= r.pass;
    }
    // test-side orthonormality from the geometric construction
    let (d, n) = (2usize, 2usize);
    let vol = cell_vol(d, n);
    let mut fns = vec![h(d, n, &cubes(d, 0)[0], full(d))];
    for c in inner_cubes(d, n) {
        for e in canc(d) {
            fns.push(h(d, n, &c, e));
        }
    }
    let mut gram: f64 = 0.0;
    for (a, x) in fns.iter().enumerate() {
        for (b, y) in fns.iter().enumerate() {
            gram = gram.max((ip(x, y, vol) - if a == b { 1.0 } else { 0.0 }).abs());
        }
    }
    ok &= gram < 1e-11 && fns.len() == 1 << (d * n);
    let jn = jn_study(&GridSpec::new(1, 6).unwrap(), &[2.0], 200, SEED).unwrap()[0].max_ratio;
    ok &= jn <= 1.0 + 1e-12;
    (ok, format!("selftest on 3 grids, oracle Gram defect {gram:.2e}, jn(p=2) max {jn:.15} {}", failed.join("; ")))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("identity, one parameter", c1_identity_one_parameter),
        ("identity, noncancellative", c2_identity_noncancellative),
        ("identity, bi-parameter", c3_identity_biparameter),
        ("shift contraction", c4_contraction),
        ("B_k uniform bound", c5_bk_uniform),
        ("literal-sum oracles", c6_oracles),
        ("geometric constant", c7_geometric_constant),
        ("commutator bound", c8_commutator_bound),
        ("Monte Carlo average", c9_monte_carlo),
        ("core algebra", c10_core_algebra),
    ];
    let mut all = true;
    for (n, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (pass, detail) = run();
        all &= pass;
        println!(
            "criterion {:>2} {} [{name}] {detail} ({:.1}s)",
            n + 1,
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    if !all {
        std::process::exit(1);
    }
}
