//! Bi-parameter operators `B_{k,l}`, `PP`, `PP_1`, `BP_k`, `PB_l`.
//!
//! Each one is a tensor product of one-parameter atom lists. `PP` and `PP_1`
//! read a (not necessarily tensor) symbol `a` on the product grid through the
//! joint symbol slots; `BP_k` and `PB_l` carry a one-variable symbol.

use serde::{Deserialize, Serialize};

use crate::decomp::tensor_eval;
use crate::error::Result;
use crate::function::DyadicFunction;
use crate::haar::ext_analysis;
use crate::paraproduct::{p_adjoint_atoms, p_atoms, resolve_symbol, Atom, BkOperator};
use crate::product::{ext_analysis_2d, ext_synthesis_2d, ProductFunction, ProductGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum BiparamOperatorSpec {
    /// `beta_{I1 I2} = beta_{I1} beta_{I2}` from the two one-variable operators.
    Bkl {
        op1: BkOperator,
        op2: BkOperator,
    },
    PP {
        a: ProductFunction,
    },
    /// Partial adjoint of `PP` in variable 1.
    PP1 {
        a: ProductFunction,
    },
    BPk {
        op1: BkOperator,
        a2: DyadicFunction,
    },
    PBl {
        a1: DyadicFunction,
        op2: BkOperator,
    },
}

impl BiparamOperatorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            BiparamOperatorSpec::Bkl { .. } => "Bkl",
            BiparamOperatorSpec::PP { .. } => "PP",
            BiparamOperatorSpec::PP1 { .. } => "PP1",
            BiparamOperatorSpec::BPk { .. } => "BPk",
            BiparamOperatorSpec::PBl { .. } => "PBl",
        }
    }

    pub fn validate(&self, grid: &ProductGrid) -> Result<()> {
        match self {
            BiparamOperatorSpec::Bkl { op1, op2 } => {
                op1.validate(&grid.grid1)?;
                op2.validate(&grid.grid2)
            }
            BiparamOperatorSpec::PP { a } | BiparamOperatorSpec::PP1 { a } => a.grid().ensure_same(grid),
            BiparamOperatorSpec::BPk { op1, a2 } => {
                op1.validate(&grid.grid1)?;
                a2.grid().ensure_same(&grid.grid2)
            }
            BiparamOperatorSpec::PBl { a1, op2 } => {
                a1.grid().ensure_same(&grid.grid1)?;
                op2.validate(&grid.grid2)
            }
        }
    }

    /// Atom lists per variable plus the joint symbol, if any.
    fn atoms(&self, grid: &ProductGrid) -> Result<(Vec<Atom>, Vec<Atom>, Option<Vec<f64>>)> {
        self.validate(grid)?;
        let t1 = grid.grid1.tree();
        let t2 = grid.grid2.tree();
        Ok(match self {
            BiparamOperatorSpec::Bkl { op1, op2 } => (op1.atoms(&t1), op2.atoms(&t2), None),
            BiparamOperatorSpec::PP { a } => (p_atoms(&t1), p_atoms(&t2), Some(ext_analysis_2d(a))),
            BiparamOperatorSpec::PP1 { a } => (p_adjoint_atoms(&t1), p_atoms(&t2), Some(ext_analysis_2d(a))),
            BiparamOperatorSpec::BPk { op1, a2 } => {
                let mut a = p_atoms(&t2);
                resolve_symbol(&mut a, Some(&ext_analysis(&t2, a2.samples())))?;
                (op1.atoms(&t1), a, None)
            }
            BiparamOperatorSpec::PBl { a1, op2 } => {
                let mut a = p_atoms(&t1);
                resolve_symbol(&mut a, Some(&ext_analysis(&t1, a1.samples())))?;
                (a, op2.atoms(&t2), None)
            }
        })
    }
}

fn run(
    grid: &ProductGrid,
    a1: &[Atom],
    a2: &[Atom],
    joint: Option<&[f64]>,
    b: &ProductFunction,
    f: &ProductFunction,
) -> ProductFunction {
    let e2 = grid.grid2.tree().ext_len();
    let mut out = vec![0.0; grid.grid1.tree().ext_len() * e2];
    tensor_eval(a1, a2, e2, &ext_analysis_2d(b), &ext_analysis_2d(f), joint, &mut out);
    ext_synthesis_2d(grid, &out)
}

pub fn apply_biparam(spec: &BiparamOperatorSpec, b: &ProductFunction, f: &ProductFunction) -> Result<ProductFunction> {
    b.grid().ensure_same(f.grid())?;
    let (a1, a2, joint) = spec.atoms(f.grid())?;
    Ok(run(f.grid(), &a1, &a2, joint.as_deref(), b, f))
}

/// Adjoint in `f` with `b` and the symbols fixed.
pub fn apply_biparam_adjoint(
    spec: &BiparamOperatorSpec,
    b: &ProductFunction,
    g: &ProductFunction,
) -> Result<ProductFunction> {
    b.grid().ensure_same(g.grid())?;
    let (a1, a2, joint) = spec.atoms(g.grid())?;
    let t1: Vec<Atom> = a1.into_iter().map(Atom::transpose).collect();
    let t2: Vec<Atom> = a2.into_iter().map(Atom::transpose).collect();
    Ok(run(g.grid(), &t1, &t2, joint.as_deref(), b, g))
}

/// Partial adjoint in variable 1: `<T(f1 x f2), g1 x g2> = <T_1(g1 x f2), f1 x g2>`.
pub fn apply_biparam_partial_adjoint(
    spec: &BiparamOperatorSpec,
    b: &ProductFunction,
    f: &ProductFunction,
) -> Result<ProductFunction> {
    b.grid().ensure_same(f.grid())?;
    let (a1, a2, joint) = spec.atoms(f.grid())?;
    let t1: Vec<Atom> = a1.into_iter().map(Atom::transpose).collect();
    Ok(run(f.grid(), &t1, &a2, joint.as_deref(), b, f))
}
