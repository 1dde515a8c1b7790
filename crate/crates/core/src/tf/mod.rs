//! Transfer-function substrate: polynomials in the Laplace variable `s`,
//! rational functions, delay models and root finding.

mod delay;
mod poly;
mod rational;
mod roots;

pub use delay::{exact_delay, pade_delay};
pub use poly::Polynomial;
pub use rational::{rf_arith, ArithOp, RationalFunction};
pub use roots::{poly_roots, PoleSet, DEFAULT_POLISH_ITERS};
pub(crate) use roots::eigenvalues;
