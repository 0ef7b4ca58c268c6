//! Dyadic harmonic analysis on the finite torus: Haar systems, dyadic shifts,
//! paraproducts, multiplication commutators and their exact decompositions
//! into paraproduct-type terms, in one and two parameters.

pub mod biparam;
pub mod calibration;
pub mod decomp;
pub mod error;
pub mod function;
pub mod grid;
pub mod haar;
pub mod montecarlo;
pub mod norms;
pub mod operator;
pub mod paraproduct;
pub mod product;
pub mod rng;
pub mod selftest;
pub mod shift;
pub mod study;

pub use biparam::{apply_biparam, apply_biparam_adjoint, apply_biparam_partial_adjoint, BiparamOperatorSpec};
pub use decomp::{
    decompose, decompose_biparam, decompose_cancellative, decompose_noncancellative, evaluate_product_terms,
    evaluate_terms, verify_identity, ProductTermList, Term, TermKind, TermList, VerifyReport,
};
pub use error::{DyadicError, Result};
pub use function::{inner_product, pointwise_multiply, DyadicFunction};
pub use grid::{ancestor, CubeTree, DyadicCube, GridSpec, HaarIndex, Signature};
pub use haar::{haar_forward, haar_function, haar_inverse, HaarCoefficients};
pub use montecarlo::{average_operator, sample_omega, shifted_grid, MatrixEstimate, OmegaSample};
pub use norms::{dyadic_bmo_norm, rect_bmo_norm};
pub use operator::{multiplication_commutator, operator_norm, LinearOperator, NormEstimate, PowerIteration};
pub use paraproduct::{apply_bk, apply_p, apply_p_adjoint, BetaRule, BkOperator};
pub use product::{apply_in_variable, iterated_commutator, ProductFunction, ProductGrid, Var};
pub use selftest::{run_selftest, Check, SelfTestReport};
pub use shift::{apply_shift, random_shift, Orientation, ShiftFamily, ShiftOperator};
pub use study::{NormReport, StudyKind};
