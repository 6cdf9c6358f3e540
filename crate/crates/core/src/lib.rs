//! Intrinsic Taylor expansions for Kolmogorov-type diffusions.
//!
//! The crate covers the homogeneous group attached to a nilpotent drift,
//! intrinsic Taylor jets, a normal-ordered operator algebra for the expansion
//! operators, Gaussian kernel evaluation, the pricer built on top of those, and
//! a Monte Carlo reference.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Symmetric-matrix loops read better with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod fit;
pub mod geometry;
pub mod index;
pub mod kernel;
pub mod mc;
pub mod model;
pub mod payoff;
pub mod poly;
pub mod pricer;
pub mod quadrature;
pub mod taylor;
pub mod algebra;
pub mod expansion;

pub use error::{Error, Result};
pub use geometry::{BlockStructure, GroupPoint, MatrixPolynomial};
pub use index::MultiIndex;
pub use model::{CoefficientModel, ClosureModel, PolynomialModel};
pub use poly::{Differentiable, ExpPoly, Poly};
pub use taylor::IntrinsicJet;
