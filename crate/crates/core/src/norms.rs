//! BMO norms, square functions, maximal functions and the John–Nirenberg /
//! Fefferman–Stein ratio checks.

use crate::error::{DyadicError, Result};
use crate::function::DyadicFunction;
use crate::grid::{CubeTree, DyadicCube};
use crate::haar::{averages, ext_analysis};
use crate::product::{ext_analysis_2d, map_axis, partial_ext_analysis, ProductFunction, Var};

/// `sum_{eps cancellative} c[g, eps]^2` for every cube.
fn cancellative_energy(tree: &CubeTree, ext: &[f64]) -> Vec<f64> {
    (0..tree.n_cubes())
        .map(|g| {
            if tree.level[g] == tree.depth {
                0.0
            } else {
                (0..tree.n_sig - 1).map(|e| ext[g * tree.n_sig + e].powi(2)).sum()
            }
        })
        .collect()
}

/// `S[g] = sum over cubes inside g (including g)` of a per-cube quantity.
fn subtree_sums(tree: &CubeTree, own: &[f64]) -> Vec<f64> {
    let mut s = own.to_vec();
    for g in (0..tree.n_inner()).rev() {
        for c in 0..tree.n_sig {
            s[g] += s[tree.child(g, c)];
        }
    }
    s
}

/// `sup_I (|I|^{-1} sum_{J in I} sum_eps <b, h_J^eps>^2)^{1/2}` over cancellative
/// coefficients; constants have norm zero.
pub fn dyadic_bmo_norm(b: &DyadicFunction) -> f64 {
    let tree = b.grid().tree();
    let s = subtree_sums(&tree, &cancellative_energy(&tree, &ext_analysis(&tree, b.samples())));
    (0..tree.n_inner()).map(|g| s[g] / tree.volume(g)).fold(0.0, f64::max).sqrt()
}

/// Per-rectangle cancellative energy `e[g1 * n2 + g2]`.
fn rect_energy(b: &ProductFunction) -> (Vec<f64>, usize, usize) {
    let t1 = b.grid().grid1.tree();
    let t2 = b.grid().grid2.tree();
    let ext = ext_analysis_2d(b);
    let (n1, n2) = (t1.n_cubes(), t2.n_cubes());
    let e2 = t2.ext_len();
    let mut e = vec![0.0; n1 * n2];
    for g1 in 0..t1.n_inner() {
        for g2 in 0..t2.n_inner() {
            let mut acc = 0.0;
            for s1 in 0..t1.n_sig - 1 {
                let row = (g1 * t1.n_sig + s1) * e2;
                for s2 in 0..t2.n_sig - 1 {
                    acc += ext[row + g2 * t2.n_sig + s2].powi(2);
                }
            }
            e[g1 * n2 + g2] = acc;
        }
    }
    (e, n1, n2)
}

/// Sup over dyadic rectangles `R0` of `(|R0|^{-1} sum_{R in R0} <b, h_R>^2)^{1/2}`,
/// coefficients cancellative in both variables.
pub fn rect_bmo_norm(b: &ProductFunction) -> f64 {
    let t1 = b.grid().grid1.tree();
    let t2 = b.grid().grid2.tree();
    let (e, n1, n2) = rect_energy(b);
    let s = map_axis(&e, n1, n2, Var::Two, n2, |row| subtree_sums(&t2, row));
    let s = map_axis(&s, n1, n2, Var::One, n1, |col| subtree_sums(&t1, col));
    let mut best = 0.0f64;
    for g1 in 0..t1.n_inner() {
        for g2 in 0..t2.n_inner() {
            best = best.max(s[g1 * n2 + g2] / (t1.volume(g1) * t2.volume(g2)));
        }
    }
    best.sqrt()
}

/// Product BMO over open sets, by exhaustion: the sup over every nonempty union
/// `Omega` of dyadic rectangles of `(|Omega|^{-1} sum_{R in Omega} <b, h_R>^2)^{1/2}`.
/// Only feasible for tiny grids (at most 20 cells in total).
pub fn open_set_bmo_norm(b: &ProductFunction) -> Result<f64> {
    let (r, c) = b.grid().shape();
    let cells = r * c;
    if cells > 20 {
        return Err(DyadicError::OutOfRange(format!("{cells} cells is too many for exhaustive search")));
    }
    let t1 = b.grid().grid1.tree();
    let t2 = b.grid().grid2.tree();
    let (e, _, n2) = rect_energy(b);
    // cell mask of each rectangle carrying energy
    let mut rects = Vec::new();
    for g1 in 0..t1.n_inner() {
        let l1 = t1.leaves(g1);
        for g2 in 0..t2.n_inner() {
            let en = e[g1 * n2 + g2];
            if en == 0.0 {
                continue;
            }
            let mut mask = 0u32;
            for &x in &l1 {
                for y in t2.leaves(g2) {
                    mask |= 1 << (x * c + y);
                }
            }
            rects.push((mask, en));
        }
    }
    let cell_vol = b.grid().cell_volume();
    let mut best = 0.0f64;
    for omega in 1u32..(1u32 << cells) {
        let mass: f64 = rects.iter().filter(|(m, _)| m & !omega == 0).map(|(_, en)| en).sum();
        best = best.max(mass / (omega.count_ones() as f64 * cell_vol));
    }
    Ok(best.sqrt())
}

/// `(sum_{I containing x} sum_eps <f, h_I^eps>^2 / |I|)^{1/2}`.
pub fn square_function(f: &DyadicFunction) -> DyadicFunction {
    let tree = f.grid().tree();
    let e = cancellative_energy(&tree, &ext_analysis(&tree, f.samples()));
    let w: Vec<f64> = (0..tree.n_cubes()).map(|g| e[g] / tree.volume(g)).collect();
    DyadicFunction::from_parts(f.grid().clone(), pointwise_sqrt(accumulate_down(&tree, &w)))
}

/// `S^(k) f = (sum_J sum_{I: I^(k) = J} <f, h_I>^2 |J|^{-1} chi_J)^{1/2}`.
pub fn square_function_k(f: &DyadicFunction, k: usize) -> Result<DyadicFunction> {
    let tree = f.grid().tree();
    if k >= tree.depth {
        return Err(DyadicError::OutOfRange(format!("k = {k} needs depth > {k}, grid has {}", tree.depth)));
    }
    let e = cancellative_energy(&tree, &ext_analysis(&tree, f.samples()));
    let mut w = vec![0.0; tree.n_cubes()];
    for level in k..tree.depth {
        for g in tree.cubes_at(level) {
            let j = tree.ancestor_of(g, k);
            w[j] += e[g];
        }
    }
    for (g, x) in w.iter_mut().enumerate() {
        *x /= tree.volume(g);
    }
    Ok(DyadicFunction::from_parts(f.grid().clone(), pointwise_sqrt(accumulate_down(&tree, &w))))
}

/// Finest-cell values of `sum_{I containing x} w[I]`.
fn accumulate_down(tree: &CubeTree, w: &[f64]) -> Vec<f64> {
    let mut acc = w.to_vec();
    for g in 0..tree.n_inner() {
        for c in 0..tree.n_sig {
            acc[tree.child(g, c)] += acc[g];
        }
    }
    acc[tree.level_offset[tree.depth]..].to_vec()
}

fn pointwise_sqrt(mut v: Vec<f64>) -> Vec<f64> {
    for x in v.iter_mut() {
        *x = x.max(0.0).sqrt();
    }
    v
}

/// Dyadic double square function over rectangles cancellative in both variables.
pub fn double_square_function(f: &ProductFunction) -> ProductFunction {
    let t1 = f.grid().grid1.tree();
    let t2 = f.grid().grid2.tree();
    let (e, n1, n2) = rect_energy(f);
    let mut w = e;
    for g1 in 0..n1 {
        for g2 in 0..n2 {
            w[g1 * n2 + g2] /= t1.volume(g1) * t2.volume(g2);
        }
    }
    let (r, c) = f.grid().shape();
    let s = map_axis(&w, n1, n2, Var::Two, c, |row| accumulate_down(&t2, row));
    let s = map_axis(&s, n1, c, Var::One, r, |col| accumulate_down(&t1, col));
    ProductFunction::from_parts(f.grid().clone(), pointwise_sqrt(s))
}

/// Hybrid maximal-square function: dyadic maximal function in `max_var` of the
/// Haar coefficients taken in the other variable, square-summed there:
/// `(sum_{I, eps} (M <f, h_I^eps>)^2 chi_I / |I|)^{1/2}`.
pub fn hybrid_max_square(f: &ProductFunction, max_var: Var) -> ProductFunction {
    let sq_var = match max_var {
        Var::One => Var::Two,
        Var::Two => Var::One,
    };
    let tm = f.grid().grid(max_var).tree();
    let ts = f.grid().grid(sq_var).tree();
    let (r, c) = f.grid().shape();
    let (rows_m, cols_s) = match max_var {
        Var::One => (r, c),
        Var::Two => (c, r),
    };
    let ext = partial_ext_analysis(f, sq_var);
    // bring to (max-variable cell) x (square-variable ext slot) layout
    let ext = match max_var {
        Var::One => ext,
        Var::Two => crate::product::transpose(&ext, ts.ext_len(), rows_m),
    };
    let es = ts.ext_len();
    let maxed = map_axis(&ext, rows_m, es, Var::One, rows_m, |col| dyadic_maximal_samples(&tm, col));
    let s = map_axis(&maxed, rows_m, es, Var::Two, cols_s, |row| {
        let w: Vec<f64> = (0..ts.n_cubes())
            .map(|g| {
                if ts.level[g] == ts.depth {
                    0.0
                } else {
                    (0..ts.n_sig - 1).map(|e| row[g * ts.n_sig + e].powi(2)).sum::<f64>() / ts.volume(g)
                }
            })
            .collect();
        accumulate_down(&ts, &w)
    });
    let s = match max_var {
        Var::One => s,
        Var::Two => crate::product::transpose(&s, rows_m, cols_s),
    };
    ProductFunction::from_parts(f.grid().clone(), pointwise_sqrt(s))
}

fn dyadic_maximal_samples(tree: &CubeTree, samples: &[f64]) -> Vec<f64> {
    let abs: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    let mut m = averages(tree, &abs);
    for g in 0..tree.n_inner() {
        for c in 0..tree.n_sig {
            let ch = tree.child(g, c);
            m[ch] = m[ch].max(m[g]);
        }
    }
    m[tree.level_offset[tree.depth]..].to_vec()
}

/// `Mf(x) = sup over dyadic cubes Q containing x of the average of |f| on Q`.
pub fn dyadic_maximal(f: &DyadicFunction) -> DyadicFunction {
    let tree = f.grid().tree();
    DyadicFunction::from_parts(f.grid().clone(), dyadic_maximal_samples(&tree, f.samples()))
}

/// Strong maximal function over dyadic rectangles.
pub fn strong_maximal(f: &ProductFunction) -> ProductFunction {
    let t1 = f.grid().grid1.tree();
    let t2 = f.grid().grid2.tree();
    let (r, c) = f.grid().shape();
    let abs: Vec<f64> = f.samples().iter().map(|x| x.abs()).collect();
    let (n1, n2) = (t1.n_cubes(), t2.n_cubes());
    let avg = map_axis(&abs, r, c, Var::Two, n2, |row| averages(&t2, row));
    let avg = map_axis(&avg, r, n2, Var::One, n1, |col| averages(&t1, col));
    // running max down the second tree, then down the first
    let m = map_axis(&avg, n1, n2, Var::Two, n2, |row| {
        let mut v = row.to_vec();
        for g in 0..t2.n_inner() {
            for ch in 0..t2.n_sig {
                let h = t2.child(g, ch);
                v[h] = v[h].max(v[g]);
            }
        }
        v
    });
    let m = map_axis(&m, n1, n2, Var::One, n1, |col| {
        let mut v = col.to_vec();
        for g in 0..t1.n_inner() {
            for ch in 0..t1.n_sig {
                let h = t1.child(g, ch);
                v[h] = v[h].max(v[g]);
            }
        }
        v
    });
    let (o1, o2) = (t1.level_offset[t1.depth], t2.level_offset[t2.depth]);
    let mut out = vec![0.0; r * c];
    for x in 0..r {
        for y in 0..c {
            out[x * c + y] = m[(o1 + x) * n2 + o2 + y];
        }
    }
    ProductFunction::from_parts(f.grid().clone(), out)
}

/// `(sum_n (M f_n)^2)^{1/2}` for a family on one grid.
pub fn vector_maximal(family: &[DyadicFunction]) -> Result<DyadicFunction> {
    let first = family.first().ok_or_else(|| DyadicError::Spec("empty family".into()))?;
    let mut acc = vec![0.0; first.grid().n_cells()];
    for f in family {
        first.grid().ensure_same(f.grid())?;
        for (a, m) in acc.iter_mut().zip(dyadic_maximal(f).samples()) {
            *a += m * m;
        }
    }
    Ok(DyadicFunction::from_parts(first.grid().clone(), pointwise_sqrt(acc)))
}

pub fn lp_norm(samples: &[f64], cell_volume: f64, p: f64) -> f64 {
    (samples.iter().map(|x| x.abs().powf(p)).sum::<f64>() * cell_volume).powf(1.0 / p)
}

/// `||(sum_n (M f_n)^2)^{1/2}||_p / ||(sum_n f_n^2)^{1/2}||_p`.
pub fn fs_check(family: &[DyadicFunction], p: f64) -> Result<f64> {
    check_exponent(p)?;
    let vm = vector_maximal(family)?;
    let mut plain = vec![0.0; vm.grid().n_cells()];
    for f in family {
        for (a, x) in plain.iter_mut().zip(f.samples()) {
            *a += x * x;
        }
    }
    let vol = vm.grid().cell_volume();
    let den = lp_norm(&pointwise_sqrt(plain), vol, p);
    Ok(if den == 0.0 { 0.0 } else { lp_norm(vm.samples(), vol, p) / den })
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(DyadicError::OutOfRange(format!("exponent {p} outside (1, inf)")));
    }
    Ok(())
}

/// `||(sum_{J in I} <a, h_J>^2 chi_J / |J|)^{1/2}||_p / (||a||_BMO |I|^{1/p})`;
/// zero when `a` has zero BMO norm.
pub fn jn_check(a: &DyadicFunction, cube: &DyadicCube, p: f64) -> Result<f64> {
    check_exponent(p)?;
    cube.validate(a.grid())?;
    let bmo = dyadic_bmo_norm(a);
    if bmo == 0.0 {
        return Ok(0.0);
    }
    let tree = a.grid().tree();
    let root = tree.global(cube);
    let e = cancellative_energy(&tree, &ext_analysis(&tree, a.samples()));
    let w: Vec<f64> =
        (0..tree.n_cubes()).map(|g| if tree.is_ancestor(root, g) { e[g] / tree.volume(g) } else { 0.0 }).collect();
    let s = pointwise_sqrt(accumulate_down(&tree, &w));
    let num = lp_norm(&s, a.grid().cell_volume(), p);
    Ok(num / (bmo * tree.volume(root).powf(1.0 / p)))
}

/// Rectangle analogue of [`jn_check`], normalized by [`rect_bmo_norm`].
pub fn jn_check_rect(a: &ProductFunction, r1: &DyadicCube, r2: &DyadicCube, p: f64) -> Result<f64> {
    check_exponent(p)?;
    r1.validate(&a.grid().grid1)?;
    r2.validate(&a.grid().grid2)?;
    let bmo = rect_bmo_norm(a);
    if bmo == 0.0 {
        return Ok(0.0);
    }
    let t1 = a.grid().grid1.tree();
    let t2 = a.grid().grid2.tree();
    let (q1, q2) = (t1.global(r1), t2.global(r2));
    let (mut e, n1, n2) = rect_energy(a);
    for g1 in 0..n1 {
        for g2 in 0..n2 {
            let inside = t1.is_ancestor(q1, g1) && t2.is_ancestor(q2, g2);
            let v = &mut e[g1 * n2 + g2];
            *v = if inside { *v / (t1.volume(g1) * t2.volume(g2)) } else { 0.0 };
        }
    }
    let (r, c) = a.grid().shape();
    let s = map_axis(&e, n1, n2, Var::Two, c, |row| accumulate_down(&t2, row));
    let s = pointwise_sqrt(map_axis(&s, n1, c, Var::One, r, |col| accumulate_down(&t1, col)));
    let num = lp_norm(&s, a.grid().cell_volume(), p);
    Ok(num / (bmo * (t1.volume(q1) * t2.volume(q2)).powf(1.0 / p)))
}

/// Literal `sum_{i,j=0}^{cap} 2^{-max(i,j) delta/2} (1 + max(i,j))`.
pub fn geometric_constant(delta: f64, cap: usize) -> f64 {
    let r = (-delta / 2.0).exp2();
    let mut total = 0.0;
    for i in 0..=cap {
        for j in 0..=cap {
            let m = i.max(j);
            total += r.powi(m as i32) * (1 + m) as f64;
        }
    }
    total
}

/// The `cap -> infinity` limit `sum_m (2m+1)(m+1) r^m = 4r/(1-r)^3 + 1/(1-r)^2`
/// with `r = 2^{-delta/2}`.
pub fn geometric_constant_limit(delta: f64) -> f64 {
    let r = (-delta / 2.0).exp2();
    4.0 * r / (1.0 - r).powi(3) + 1.0 / (1.0 - r).powi(2)
}

/// Upper bound on `limit - geometric_constant(delta, cap)`: the tail terms
/// `t_m = (2m+1)(m+1) r^m` have ratios decreasing in `m`, so the tail is at most
/// `t_{cap+1} / (1 - q)` with `q = t_{cap+2} / t_{cap+1}` once `q < 1`.
pub fn geometric_truncation_bound(delta: f64, cap: usize) -> f64 {
    let r = (-delta / 2.0).exp2();
    let t = |m: usize| (2 * m + 1) as f64 * (m + 1) as f64 * r.powi(m as i32);
    let q = t(cap + 2) / t(cap + 1);
    if q >= 1.0 {
        f64::INFINITY
    } else {
        t(cap + 1) / (1.0 - q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, HaarIndex, Signature};
    use crate::haar::haar_function;
    use crate::product::ProductGrid;
    use crate::rng::rng_for;

    #[test]
    fn bmo_examples() {
        let grid = GridSpec::new(1, 3).unwrap();
        assert_eq!(dyadic_bmo_norm(&DyadicFunction::constant(&grid, 5.0)), 0.0);
        let h = haar_function(&grid, &HaarIndex::new(DyadicCube::root(1), Signature(0))).unwrap();
        assert!((dyadic_bmo_norm(&h) - 1.0).abs() < 1e-14);
        let mut rng = rng_for(1, 0);
        let b = DyadicFunction::random(&grid, &mut rng);
        let n = dyadic_bmo_norm(&b);
        assert!((dyadic_bmo_norm(&b.map(|x| x + 3.0)) - n).abs() < 1e-13);
        assert!((dyadic_bmo_norm(&b.scale(-2.5)) - 2.5 * n).abs() < 1e-13);
    }

    #[test]
    fn rect_bmo_examples() {
        let pg = ProductGrid::unshifted(1, 2, 1, 2).unwrap();
        let h = haar_function(&pg.grid1, &HaarIndex::new(DyadicCube::root(1), Signature(0))).unwrap();
        let b = ProductFunction::tensor(&h, &h).unwrap();
        assert!((rect_bmo_norm(&b) - 1.0).abs() < 1e-14);
        let one = DyadicFunction::constant(&pg.grid2, 1.0);
        assert_eq!(rect_bmo_norm(&ProductFunction::tensor(&h, &one).unwrap()), 0.0);
    }

    #[test]
    fn open_set_norm_dominates_rectangles() {
        let pg = ProductGrid::unshifted(1, 2, 1, 2).unwrap();
        let mut rng = rng_for(3, 0);
        for _ in 0..5 {
            let b = ProductFunction::random(&pg, &mut rng);
            assert!(rect_bmo_norm(&b) <= open_set_bmo_norm(&b).unwrap() + 1e-13);
        }
    }

    #[test]
    fn square_function_of_haar() {
        let grid = GridSpec::new(1, 3).unwrap();
        let cube = DyadicCube { level: 1, pos: vec![0] };
        let h = haar_function(&grid, &HaarIndex::new(cube, Signature(0))).unwrap();
        let s = square_function(&h);
        let expect = 2f64.sqrt();
        for (i, v) in s.samples().iter().enumerate() {
            let e = if i < 4 { expect } else { 0.0 };
            assert!((v - e).abs() < 1e-14);
        }
    }

    #[test]
    fn square_function_parseval() {
        let grid = GridSpec::new(2, 3).unwrap();
        let mut rng = rng_for(4, 0);
        let f = DyadicFunction::random(&grid, &mut rng);
        let s = square_function(&f);
        let lhs = s.norm_l2().powi(2) + f.mean().powi(2);
        assert!((lhs - f.norm_l2().powi(2)).abs() < 1e-12);
        assert!(square_function_k(&f, 3).is_err());
        assert!((square_function_k(&f, 0).unwrap().sub(&s).unwrap()).max_abs() < 1e-13);
    }

    #[test]
    fn maximal_function_examples() {
        let grid = GridSpec::new(1, 2).unwrap();
        let f = DyadicFunction::new(grid.clone(), vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(dyadic_maximal(&f).samples(), &[1.0, 1.0, 0.5, 0.5]);
        let c = DyadicFunction::constant(&grid, 2.0);
        assert_eq!(dyadic_maximal(&c).samples(), &[2.0; 4]);
    }

    #[test]
    fn strong_maximal_of_tensor_is_product() {
        let pg = ProductGrid::unshifted(1, 2, 1, 2).unwrap();
        let f1 = DyadicFunction::new(pg.grid1.clone(), vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        let f2 = DyadicFunction::new(pg.grid2.clone(), vec![0.0, 3.0, 1.0, 1.0]).unwrap();
        let m = strong_maximal(&ProductFunction::tensor(&f1, &f2).unwrap());
        let expect = ProductFunction::tensor(&dyadic_maximal(&f1), &dyadic_maximal(&f2)).unwrap();
        assert!(m.sub(&expect).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn jn_at_two_is_at_most_one() {
        let grid = GridSpec::new(1, 5).unwrap();
        let mut rng = rng_for(5, 0);
        let a = DyadicFunction::random(&grid, &mut rng);
        let tree = grid.tree();
        for g in 0..tree.n_inner() {
            assert!(jn_check(&a, &tree.cube(g), 2.0).unwrap() <= 1.0 + 1e-12);
        }
        assert_eq!(jn_check(&DyadicFunction::zeros(&grid), &DyadicCube::root(1), 2.0).unwrap(), 0.0);
        assert!(jn_check(&a, &DyadicCube::root(1), 1.0).is_err());
    }

    #[test]
    fn geometric_series() {
        assert!((geometric_constant_limit(2.0) - 20.0).abs() < 1e-12);
        let partial = geometric_constant(2.0, 60);
        assert!((partial - 20.0).abs() < 1e-10);
        let bound = geometric_truncation_bound(2.0, 60);
        assert!(20.0 - partial <= bound + 1e-12);
        let d1 = geometric_constant(1.0, 400);
        assert!((d1 - geometric_constant_limit(1.0)).abs() < 1e-9);
    }
}
