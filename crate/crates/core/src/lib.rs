//! Numerical laboratory for second-order monotone mean-field games on the
//! periodic torus.
//!
//! The crate solves the σ-regularized quadratic–logarithmic system by Newton
//! continuation, evaluates the monotone operators of the stationary and
//! time-dependent problems, provides the mollification toolkit used to test
//! the variational inequalities, and audits the a priori estimates along a
//! σ-sweep. The `mfglab` binary drives the experiments from a TOML config.

pub mod error;
pub mod estimates;
pub mod experiment;
pub mod grid;
pub mod model;
pub mod mollify;
pub mod operators;
pub mod solver;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/fields.md")]
    pub struct Fields;
    #[doc = include_str!("../../../book/src/hamiltonians.md")]
    pub struct Hamiltonians;
    #[doc = include_str!("../../../book/src/operators.md")]
    pub struct Operators;
    #[doc = include_str!("../../../book/src/mollifiers.md")]
    pub struct Mollifiers;
    #[doc = include_str!("../../../book/src/solver.md")]
    pub struct Solver;
    #[doc = include_str!("../../../book/src/estimates.md")]
    pub struct Estimates;
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub struct Experiments;
    #[doc = include_str!("../../../README.md")]
    pub struct Readme;
}
