//! Opaque linear operators on the sample space of one grid, commutators with
//! multiplication operators, and operator-norm estimation.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::function::{pointwise_multiply, DyadicFunction};
use crate::grid::GridSpec;
use crate::rng::rng_for;
use crate::shift::ShiftOperator;

type Apply = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Largest sample count for which a dense matrix is ever assembled.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Clone)]
pub struct LinearOperator {
    grid: GridSpec,
    pub kind: String,
    pub params: serde_json::Value,
    apply: Apply,
    adjoint: Option<Apply>,
}

impl fmt::Debug for LinearOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearOperator")
            .field("grid", &self.grid)
            .field("kind", &self.kind)
            .field("params", &self.params)
            .field("has_adjoint", &self.adjoint.is_some())
            .finish()
    }
}

impl LinearOperator {
    pub fn new<F>(grid: &GridSpec, kind: &str, params: serde_json::Value, apply: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        LinearOperator { grid: grid.clone(), kind: kind.into(), params, apply: Arc::new(apply), adjoint: None }
    }

    pub fn with_adjoint<F>(mut self, adjoint: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.adjoint = Some(Arc::new(adjoint));
        self
    }

    pub fn identity(grid: &GridSpec) -> Self {
        Self::new(grid, "identity", serde_json::Value::Null, |x| x.to_vec()).with_adjoint(|x| x.to_vec())
    }

    pub fn zero(grid: &GridSpec) -> Self {
        Self::new(grid, "zero", serde_json::Value::Null, |x| vec![0.0; x.len()]).with_adjoint(|x| vec![0.0; x.len()])
    }

    /// Operator given by a row-major `n x n` matrix acting on sample vectors.
    pub fn from_matrix(grid: &GridSpec, kind: &str, matrix: Vec<f64>) -> Self {
        let n = grid.n_cells();
        assert_eq!(matrix.len(), n * n, "matrix does not match grid");
        let m = Arc::new(matrix);
        let mt = Arc::clone(&m);
        Self::new(grid, kind, serde_json::Value::Null, move |x| {
            (0..n).map(|r| (0..n).map(|c| m[r * n + c] * x[c]).sum()).collect()
        })
        .with_adjoint(move |x| {
            let mut out = vec![0.0; n];
            for r in 0..n {
                for c in 0..n {
                    out[c] += mt[r * n + c] * x[r];
                }
            }
            out
        })
    }

    pub fn from_shift(s: &ShiftOperator) -> Self {
        let fwd = s.clone();
        let back = s.transpose();
        let params = serde_json::json!({ "i": s.i(), "j": s.j(), "cancellative": s.is_cancellative() });
        Self::new(s.grid(), "shift", params, move |x| fwd.apply_samples(x)).with_adjoint(move |x| back.apply_samples(x))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn apply_samples(&self, x: &[f64]) -> Vec<f64> {
        (self.apply)(x)
    }

    pub fn apply(&self, f: &DyadicFunction) -> Result<DyadicFunction> {
        self.grid.ensure_same(f.grid())?;
        Ok(DyadicFunction::from_parts(self.grid.clone(), (self.apply)(f.samples())))
    }

    pub fn has_adjoint(&self) -> bool {
        self.adjoint.is_some()
    }

    pub fn adjoint(&self) -> Option<LinearOperator> {
        let adj = self.adjoint.clone()?;
        Some(LinearOperator {
            grid: self.grid.clone(),
            kind: format!("{}^T", self.kind),
            params: self.params.clone(),
            apply: adj,
            adjoint: Some(Arc::clone(&self.apply)),
        })
    }

    /// Column-by-column assembly; only for grids with at most [`DENSE_LIMIT`] cells.
    pub fn dense_matrix(&self) -> Vec<f64> {
        let n = self.grid.n_cells();
        assert!(n <= DENSE_LIMIT, "dense assembly of {n} samples refused");
        let mut m = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for c in 0..n {
            e[c] = 1.0;
            let col = (self.apply)(&e);
            e[c] = 0.0;
            for r in 0..n {
                m[r * n + c] = col[r];
            }
        }
        m
    }

    /// `f -> b T f - T(b f)` as an operator.
    pub fn commutator_with(&self, b: &DyadicFunction) -> Result<LinearOperator> {
        self.grid.ensure_same(b.grid())?;
        let bs: Arc<Vec<f64>> = Arc::new(b.samples().to_vec());
        let t = Arc::clone(&self.apply);
        let (b1, t1) = (Arc::clone(&bs), Arc::clone(&t));
        let mut op = LinearOperator::new(&self.grid, &format!("[b,{}]", self.kind), self.params.clone(), move |x| {
            commutator_samples(&b1, &*t1, x)
        });
        if let Some(adj) = self.adjoint.clone() {
            // [b, T]^T = -[b, T^T]
            op = op.with_adjoint(move |x| commutator_samples(&bs, &*adj, x).into_iter().map(|v| -v).collect());
        }
        Ok(op)
    }
}

fn commutator_samples(b: &[f64], t: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> Vec<f64> {
    let tx = t(x);
    let bx: Vec<f64> = b.iter().zip(x).map(|(p, q)| p * q).collect();
    let tbx = t(&bx);
    b.iter().zip(&tx).zip(&tbx).map(|((p, q), r)| p * q - r).collect()
}

/// `[M_b, T] f = b (T f) - T(b f)`, exact on samples.
pub fn multiplication_commutator(b: &DyadicFunction, t: &LinearOperator, f: &DyadicFunction) -> Result<DyadicFunction> {
    b.grid().ensure_same(f.grid())?;
    let left = pointwise_multiply(b, &t.apply(f)?)?;
    let right = t.apply(&pointwise_multiply(b, f)?)?;
    left.sub(&right)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct PowerIteration {
    pub max_iters: usize,
    /// Relative change of successive estimates at which iteration stops.
    pub tol: f64,
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        PowerIteration { max_iters: 500, tol: 1e-6, seed: 0 }
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Largest singular value by power iteration on `T^T T`.
///
/// Uses the operator's adjoint when it has one, otherwise a dense transpose
/// (grids up to [`DENSE_LIMIT`] cells). The quadrature weight is the same on
/// every cell, so sample-space Euclidean norms give the `L^2` ratio directly.
pub fn operator_norm(t: &LinearOperator, cfg: PowerIteration) -> NormEstimate {
    let n = t.grid.n_cells();
    let owned_adjoint;
    let adj: &dyn Fn(&[f64]) -> Vec<f64> = match &t.adjoint {
        Some(a) => &**a,
        None => {
            let m = t.dense_matrix();
            owned_adjoint = move |x: &[f64]| {
                let mut out = vec![0.0; n];
                for r in 0..n {
                    for c in 0..n {
                        out[c] += m[r * n + c] * x[r];
                    }
                }
                out
            };
            &owned_adjoint
        }
    };
    let mut rng = rng_for(cfg.seed, 0);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut prev = 0.0;
    for it in 1..=cfg.max_iters {
        let y = (t.apply)(&x);
        let sigma = norm2(&y);
        if sigma == 0.0 {
            return NormEstimate { value: 0.0, iterations: it, converged: true };
        }
        let z = adj(&y);
        let nz = norm2(&z);
        if nz == 0.0 {
            return NormEstimate { value: sigma, iterations: it, converged: true };
        }
        x = z.into_iter().map(|v| v / nz).collect();
        if it > 1 && (sigma - prev).abs() <= cfg.tol * sigma {
            return NormEstimate { value: sigma, iterations: it, converged: true };
        }
        prev = sigma;
    }
    NormEstimate { value: norm2(&(t.apply)(&x)), iterations: cfg.max_iters, converged: false }
}
