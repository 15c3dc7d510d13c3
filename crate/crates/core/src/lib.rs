//! Critical-point analysis of equality-constrained sets of alternatives.
//!
//! The set of alternatives is the common zero set of `m` smooth equations
//! `g_i(p) = c_i` in ℝⁿ. The first `m - 1` define a manifold Y; the last
//! one, `g_m = c_m`, is studied as a function on Y. Whether an anonymous,
//! unanimous, continuous aggregation rule can exist on the alternatives is
//! decided by where c_m sits relative to the critical values of `g_m|_Y`
//! and whether `g_m|_Y` is a Morse function.
//!
//! Modules, bottom-up:
//! - [`expr`]: parsing and second-order forward-mode differentiation.
//! - [`manifold`]: constraint problems, Jacobians, projection onto Y.
//! - [`critical`]: multistart Newton on the Lagrange system, bordered Hessians.
//! - [`verdict`]: classification of c_m and the max-label choice rule.
//! - [`flow`]: the modulated gradient flow that retracts a band onto a level set.
//! - [`perturb`]: random linear perturbations that restore the Morse property.
//! - [`cli`]: the `scfdesign` command-line front end.

pub mod cli;
pub mod critical;
pub mod expr;
pub mod flow;
pub mod manifold;
pub mod perturb;
pub mod tolerances;
pub mod verdict;


pub use expr::Expression;
pub use manifold::ConstraintProblem;
pub use critical::{CriticalCatalog, CriticalConfig, LagrangianPoint};
pub use verdict::{AnalysisReport, Classification, VerdictKind};
pub use tolerances::Tolerances;

