//! Compiles every `rust` listing in the guide as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/expressions.md")]
pub mod expressions {}

#[doc = include_str!("../../../book/src/problems.md")]
pub mod problems {}

#[doc = include_str!("../../../book/src/critical_points.md")]
pub mod critical_points {}

#[doc = include_str!("../../../book/src/verdicts.md")]
pub mod verdicts {}

#[doc = include_str!("../../../book/src/flow.md")]
pub mod flow {}

#[doc = include_str!("../../../book/src/perturbation.md")]
pub mod perturbation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
