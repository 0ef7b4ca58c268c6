//! Literal-sum oracles on unshifted grids. Haar functions are built from
//! geometry here, independently of the library's tree and atom code.
#![allow(dead_code)]

use dyadic_core::{DyadicFunction, GridSpec, ProductFunction, ProductGrid, Signature};

/// Haar function on the cube at `level` with per-axis position `pos`.
/// Bit `a` of `sig` set means constant along axis `a`; clear means `+` on the
/// lower half and `-` on the upper half.
pub fn haar(d: usize, n: usize, level: usize, pos: &[usize], sig: u32) -> Vec<f64> {
    let side = 1usize << n;
    let norm = (2f64).powf((level * d) as f64 / 2.0);
    (0..side.pow(d as u32))
        .map(|cell| {
            let mut rest = cell;
            let mut coords = vec![0; d];
            for a in (0..d).rev() {
                coords[a] = rest % side;
                rest /= side;
            }
            let mut v = norm;
            for a in 0..d {
                if coords[a] >> (n - level) != pos[a] {
                    return 0.0;
                }
                if sig >> a & 1 == 0 && level < n && (coords[a] >> (n - level - 1)) & 1 == 1 {
                    v = -v;
                }
            }
            v
        })
        .collect()
}

/// A cube: level and per-axis position.
#[derive(Clone, Debug, PartialEq)]
pub struct Cube {
    pub level: usize,
    pub pos: Vec<usize>,
}

impl Cube {
    pub fn volume(&self, d: usize) -> f64 {
        (2f64).powi(-((self.level * d) as i32))
    }

    pub fn ancestor(&self, k: usize) -> Cube {
        Cube { level: self.level - k, pos: self.pos.iter().map(|p| p >> k).collect() }
    }

    /// Strictly contains `other`.
    pub fn strictly_contains(&self, other: &Cube) -> bool {
        other.level > self.level && other.ancestor(other.level - self.level) == *self
    }
}

pub fn cubes(d: usize, level: usize) -> Vec<Cube> {
    let side = 1usize << level;
    (0..side.pow(d as u32))
        .map(|mut lin| {
            let mut pos = vec![0; d];
            for a in (0..d).rev() {
                pos[a] = lin % side;
                lin /= side;
            }
            Cube { level, pos }
        })
        .collect()
}

/// Cubes at levels `0..n` (those carrying cancellative Haar functions).
pub fn inner_cubes(d: usize, n: usize) -> Vec<Cube> {
    (0..n).flat_map(|l| cubes(d, l)).collect()
}

pub fn h(d: usize, n: usize, c: &Cube, sig: u32) -> Vec<f64> {
    haar(d, n, c.level, &c.pos, sig)
}

pub fn canc(d: usize) -> Vec<u32> {
    (0..(1u32 << d) - 1).collect()
}

pub fn full(d: usize) -> u32 {
    (1u32 << d) - 1
}

pub fn ip(f: &[f64], g: &[f64], vol: f64) -> f64 {
    f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() * vol
}

pub fn axpy(out: &mut [f64], s: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += s * v;
    }
}

pub fn cell_vol(d: usize, n: usize) -> f64 {
    (2f64).powi(-((n * d) as i32))
}

pub fn l2(x: &[f64], vol: f64) -> f64 {
    ip(x, x, vol).sqrt()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-300);
    num / den.max(1.0)
}

/// `beta_I = h^eta_{I^(k)}(x) |I^(k)|^{1/2}` at the first cell of `I` (1 for k = 0).
pub fn ancestor_sign(d: usize, n: usize, i: &Cube, k: usize, eta: u32) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let q = i.ancestor(k);
    let hq = h(d, n, &q, eta);
    let first = first_cell(n, i);
    hq[first] * q.volume(d).sqrt()
}

fn first_cell(n: usize, c: &Cube) -> usize {
    let side = 1usize << n;
    c.pos.iter().fold(0, |acc, &p| acc * side + (p << (n - c.level)))
}

/// `B_k(b, f)` with signatures `(eta; eps -> eps_out)` and ancestor-sign beta.
pub fn bk(d: usize, n: usize, k: usize, eta: u32, eps: u32, eps_out: u32, b: &[f64], f: &[f64]) -> Vec<f64> {
    let vol = cell_vol(d, n);
    let mut out = vec![0.0; b.len()];
    for i in inner_cubes(d, n).into_iter().filter(|c| c.level >= k) {
        let q = i.ancestor(k);
        let w = ancestor_sign(d, n, &i, k, eta) * ip(b, &h(d, n, &q, eta), vol) * ip(f, &h(d, n, &i, eps), vol)
            / q.volume(d).sqrt();
        axpy(&mut out, w, &h(d, n, &i, eps_out));
    }
    out
}

/// `sum_{J strictly inside Q, eps} <a, h_J> h_J`.
fn strict_part(d: usize, n: usize, q: &Cube, a: &[f64]) -> Vec<f64> {
    let vol = cell_vol(d, n);
    let mut out = vec![0.0; a.len()];
    for j in inner_cubes(d, n).into_iter().filter(|j| q.strictly_contains(j)) {
        for e in canc(d) {
            let hj = h(d, n, &j, e);
            axpy(&mut out, ip(a, &hj, vol), &hj);
        }
    }
    out
}

pub fn p(d: usize, n: usize, b: &[f64], a: &[f64], f: &[f64]) -> Vec<f64> {
    let vol = cell_vol(d, n);
    let mut out = vec![0.0; b.len()];
    for q in inner_cubes(d, n) {
        let sp = strict_part(d, n, &q, a);
        for eta in canc(d) {
            let hq = h(d, n, &q, eta);
            axpy(&mut out, ip(b, &hq, vol) * ip(f, &hq, vol) / q.volume(d), &sp);
        }
    }
    out
}

pub fn p_adjoint(d: usize, n: usize, b: &[f64], a: &[f64], g: &[f64]) -> Vec<f64> {
    let vol = cell_vol(d, n);
    let mut out = vec![0.0; b.len()];
    for q in inner_cubes(d, n) {
        let c = ip(g, &strict_part(d, n, &q, a), vol) / q.volume(d);
        for eta in canc(d) {
            let hq = h(d, n, &q, eta);
            axpy(&mut out, ip(b, &hq, vol) * c, &hq);
        }
    }
    out
}

/// `sum_{J, eps} <a, h_J^eps> <f>_J h_J^eps`.
pub fn paraproduct_shift(d: usize, n: usize, a: &[f64], f: &[f64]) -> Vec<f64> {
    let vol = cell_vol(d, n);
    let mut out = vec![0.0; a.len()];
    for j in inner_cubes(d, n) {
        let avg = ip(f, &h(d, n, &j, full(d)), vol) / j.volume(d).sqrt();
        for e in canc(d) {
            let hj = h(d, n, &j, e);
            axpy(&mut out, ip(a, &hj, vol) * avg, &hj);
        }
    }
    out
}

/// Dense transpose of an operator given as a closure on sample vectors.
pub fn transpose_apply(len: usize, op: impl Fn(&[f64]) -> Vec<f64>, g: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; len];
    (0..len)
        .map(|c| {
            e[c] = 1.0;
            let col = op(&e);
            e[c] = 0.0;
            col.iter().zip(g).map(|(x, y)| x * y).sum()
        })
        .collect()
}

// ---- two parameters (d = 1 per variable) ----

pub struct Grid2 {
    pub n1: usize,
    pub n2: usize,
}

impl Grid2 {
    pub fn vol(&self) -> f64 {
        cell_vol(1, self.n1) * cell_vol(1, self.n2)
    }

    pub fn cols(&self) -> usize {
        1 << self.n2
    }

    pub fn tensor(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        x.iter().flat_map(|a| y.iter().map(move |b| a * b)).collect()
    }

    pub fn h(&self, c1: &Cube, s1: u32, c2: &Cube, s2: u32) -> Vec<f64> {
        self.tensor(&h(1, self.n1, c1, s1), &h(1, self.n2, c2, s2))
    }

    pub fn ip(&self, f: &[f64], g: &[f64]) -> f64 {
        ip(f, g, self.vol())
    }
}

/// `sum_{J1 in I1, J2 in I2 strictly} <a, h_J1 x h_J2> h_J1 x h_J2`.
fn strict_part2(g: &Grid2, q1: &Cube, q2: &Cube, a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for j1 in inner_cubes(1, g.n1).into_iter().filter(|j| q1.strictly_contains(j)) {
        for j2 in inner_cubes(1, g.n2).into_iter().filter(|j| q2.strictly_contains(j)) {
            let hh = g.h(&j1, 0, &j2, 0);
            axpy(&mut out, g.ip(a, &hh), &hh);
        }
    }
    out
}

pub fn pp(g: &Grid2, b: &[f64], a: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; b.len()];
    for i1 in inner_cubes(1, g.n1) {
        for i2 in inner_cubes(1, g.n2) {
            let hh = g.h(&i1, 0, &i2, 0);
            let w = g.ip(b, &hh) * g.ip(f, &hh) / (i1.volume(1) * i2.volume(1));
            if w != 0.0 {
                axpy(&mut out, w, &strict_part2(g, &i1, &i2, a));
            }
        }
    }
    out
}

/// Partial adjoint of `PP` in variable 1.
pub fn pp1(g: &Grid2, b: &[f64], a: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; b.len()];
    for i1 in inner_cubes(1, g.n1) {
        for i2 in inner_cubes(1, g.n2) {
            let bw = g.ip(b, &g.h(&i1, 0, &i2, 0)) / (i1.volume(1) * i2.volume(1));
            for j1 in inner_cubes(1, g.n1).into_iter().filter(|j| i1.strictly_contains(j)) {
                for j2 in inner_cubes(1, g.n2).into_iter().filter(|j| i2.strictly_contains(j)) {
                    let w = bw * g.ip(f, &g.h(&j1, 0, &i2, 0)) * g.ip(a, &g.h(&j1, 0, &j2, 0));
                    axpy(&mut out, w, &g.h(&i1, 0, &j2, 0));
                }
            }
        }
    }
    out
}

pub fn bkl(g: &Grid2, k: usize, l: usize, b: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; b.len()];
    for i1 in inner_cubes(1, g.n1).into_iter().filter(|c| c.level >= k) {
        for i2 in inner_cubes(1, g.n2).into_iter().filter(|c| c.level >= l) {
            let (q1, q2) = (i1.ancestor(k), i2.ancestor(l));
            let beta = ancestor_sign(1, g.n1, &i1, k, 0) * ancestor_sign(1, g.n2, &i2, l, 0);
            let hi = g.h(&i1, 0, &i2, 0);
            let w = beta * g.ip(b, &g.h(&q1, 0, &q2, 0)) * g.ip(f, &hi) / (q1.volume(1) * q2.volume(1)).sqrt();
            axpy(&mut out, w, &hi);
        }
    }
    out
}

/// `BP_k(b, a2, f)`: `B_k` in variable 1, `P` with symbol `a2` in variable 2.
pub fn bpk(g: &Grid2, k: usize, b: &[f64], a2: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; b.len()];
    for i1 in inner_cubes(1, g.n1).into_iter().filter(|c| c.level >= k) {
        let q1 = i1.ancestor(k);
        let beta = ancestor_sign(1, g.n1, &i1, k, 0);
        for i2 in inner_cubes(1, g.n2) {
            let w = beta * g.ip(b, &g.h(&q1, 0, &i2, 0)) * g.ip(f, &g.h(&i1, 0, &i2, 0))
                / (q1.volume(1).sqrt() * i2.volume(1));
            if w == 0.0 {
                continue;
            }
            let sp = strict_part(1, g.n2, &i2, a2);
            axpy(&mut out, w, &g.tensor(&h(1, g.n1, &i1, 0), &sp));
        }
    }
    out
}

/// `PB_l(b, a1, f)`: `P` with symbol `a1` in variable 1, `B_l` in variable 2.
pub fn pbl(g: &Grid2, l: usize, b: &[f64], a1: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; b.len()];
    for i2 in inner_cubes(1, g.n2).into_iter().filter(|c| c.level >= l) {
        let q2 = i2.ancestor(l);
        let beta = ancestor_sign(1, g.n2, &i2, l, 0);
        for i1 in inner_cubes(1, g.n1) {
            let w = beta * g.ip(b, &g.h(&i1, 0, &q2, 0)) * g.ip(f, &g.h(&i1, 0, &i2, 0))
                / (q2.volume(1).sqrt() * i1.volume(1));
            if w == 0.0 {
                continue;
            }
            let sp = strict_part(1, g.n1, &i1, a1);
            axpy(&mut out, w, &g.tensor(&sp, &h(1, g.n2, &i2, 0)));
        }
    }
    out
}

pub fn dyadic(grid: &GridSpec, v: Vec<f64>) -> DyadicFunction {
    DyadicFunction::new(grid.clone(), v).unwrap()
}

pub fn product(grid: &ProductGrid, v: Vec<f64>) -> ProductFunction {
    ProductFunction::new(grid.clone(), v).unwrap()
}

pub fn sig(s: u32) -> Signature {
    Signature(s)
}

// ---- oracle suite: library operators against the literal sums above ----

use dyadic_core::rng::rng_for;
use dyadic_core::{
    apply_biparam, apply_bk, apply_p, apply_p_adjoint, apply_shift, random_shift, BetaRule, BiparamOperatorSpec,
    BkOperator, Orientation, ShiftFamily, ShiftOperator,
};
use rand::Rng;

pub fn to_cube(c: &dyadic_core::DyadicCube) -> Cube {
    Cube { level: c.level, pos: c.pos.iter().map(|&p| p as usize).collect() }
}

/// `sum_entries a <f, h_I> h_J` for a cancellative shift.
pub fn shift_literal(d: usize, n: usize, s: &ShiftOperator, f: &[f64]) -> Vec<f64> {
    let vol = cell_vol(d, n);
    let mut out = vec![0.0; f.len()];
    for e in s.entries() {
        let hi = h(d, n, &to_cube(&e.i.cube), e.i.sig.0);
        let hj = h(d, n, &to_cube(&e.j.cube), e.j.sig.0);
        axpy(&mut out, e.a * ip(f, &hi, vol), &hj);
    }
    out
}

fn random_bk(rng: &mut impl Rng, d: usize, n: usize) -> BkOperator {
    let k = rng.gen_range(0..n);
    let nc = (1u32 << d) - 1;
    let eta = rng.gen_range(0..nc);
    let (mut e_in, mut e_out) = (rng.gen_range(0..nc), rng.gen_range(0..nc));
    if k == 0 {
        match rng.gen_range(0..3) {
            0 => e_in = nc,
            1 => e_out = nc,
            _ => {}
        }
    }
    BkOperator {
        k,
        b_sig: Signature(eta),
        in_sig: Signature(e_in),
        out_sig: Signature(e_out),
        beta: BetaRule::AncestorSign,
    }
}

/// Worst relative difference per operator over `trials` random triples.
pub fn oracle_suite(trials: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut worst: Vec<(&'static str, f64)> = Vec::new();
    let mut record = |name: &'static str, r: f64| match worst.iter_mut().find(|w| w.0 == name) {
        Some(w) => w.1 = w.1.max(r),
        None => worst.push((name, r)),
    };
    for t in 0..trials as u64 {
        let mut rng = rng_for(seed, t);
        for (d, n) in [(1usize, 3usize), (2, 2)] {
            let grid = GridSpec::new(d, n).unwrap();
            let rnd = |rng: &mut dyadic_core::rng::TrialRng| DyadicFunction::random(&grid, rng);
            let (b, a, f) = (rnd(&mut rng), rnd(&mut rng), rnd(&mut rng));
            let op = random_bk(&mut rng, d, n);
            let lib = apply_bk(&op, &b, &f).unwrap();
            let lit = bk(d, n, op.k, op.b_sig.0, op.in_sig.0, op.out_sig.0, b.samples(), f.samples());
            record("B_k", rel_diff(lib.samples(), &lit));
            record(
                "P",
                rel_diff(apply_p(&b, &a, &f).unwrap().samples(), &p(d, n, b.samples(), a.samples(), f.samples())),
            );
            record(
                "P*",
                rel_diff(
                    apply_p_adjoint(&b, &a, &f).unwrap().samples(),
                    &p_adjoint(d, n, b.samples(), a.samples(), f.samples()),
                ),
            );
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            let s = random_shift(&grid, i, j, rng.gen(), ShiftFamily::Cancellative).unwrap();
            record("shift", rel_diff(apply_shift(&s, &f).unwrap().samples(), &shift_literal(d, n, &s, f.samples())));
            let sa = random_shift(&grid, 0, 0, rng.gen(), ShiftFamily::Noncancellative(Orientation::Analysis)).unwrap();
            let sym = sa.symbol().unwrap().samples().to_vec();
            record(
                "shift_nc",
                rel_diff(apply_shift(&sa, &f).unwrap().samples(), &paraproduct_shift(d, n, &sym, f.samples())),
            );
            let ss = sa.transpose();
            let lit_t = transpose_apply(f.samples().len(), |x| paraproduct_shift(d, n, &sym, x), f.samples());
            record("shift_nc_T", rel_diff(apply_shift(&ss, &f).unwrap().samples(), &lit_t));
        }
        let (n1, n2) = (3usize, 2usize);
        let pg = ProductGrid::unshifted(1, n1, 1, n2).unwrap();
        let g2 = Grid2 { n1, n2 };
        let rp = |rng: &mut dyadic_core::rng::TrialRng| ProductFunction::random(&pg, rng);
        let (b, a, f) = (rp(&mut rng), rp(&mut rng), rp(&mut rng));
        let a1 = DyadicFunction::random(&pg.grid1, &mut rng);
        let a2 = DyadicFunction::random(&pg.grid2, &mut rng);
        let k = rng.gen_range(0..n1);
        let l = rng.gen_range(0..n2);
        let bko = |k| BkOperator { beta: BetaRule::AncestorSign, ..BkOperator::cancellative(k, Signature(0)) };
        let run = |spec: BiparamOperatorSpec| apply_biparam(&spec, &b, &f).unwrap().samples().to_vec();
        let (bs, fs) = (b.samples(), f.samples());
        record("B_kl", rel_diff(&run(BiparamOperatorSpec::Bkl { op1: bko(k), op2: bko(l) }), &bkl(&g2, k, l, bs, fs)));
        record("PP", rel_diff(&run(BiparamOperatorSpec::PP { a: a.clone() }), &pp(&g2, bs, a.samples(), fs)));
        record("PP1", rel_diff(&run(BiparamOperatorSpec::PP1 { a: a.clone() }), &pp1(&g2, bs, a.samples(), fs)));
        record(
            "BP_k",
            rel_diff(
                &run(BiparamOperatorSpec::BPk { op1: bko(k), a2: a2.clone() }),
                &bpk(&g2, k, bs, a2.samples(), fs),
            ),
        );
        record(
            "PB_l",
            rel_diff(
                &run(BiparamOperatorSpec::PBl { a1: a1.clone(), op2: bko(l) }),
                &pbl(&g2, l, bs, a1.samples(), fs),
            ),
        );
    }
    worst
}
