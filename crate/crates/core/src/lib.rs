//! Numerical laboratory for time changes of transient Markov processes by
//! positive continuous additive functionals.
//!
//! Two exactly evaluable backends ([`kernel::ChainModel`], a finite chain, and
//! [`kernel::DiffusionModel`], Brownian motion killed on leaving `(0, 1)`) carry
//! smooth measures ([`measures`]), their potential and hitting operators
//! ([`potential`]), the time-changed semigroups ([`timechange`]), a path-level
//! Monte Carlo simulator ([`pathsim`]) and convergence experiments over measure
//! sequences ([`lab`]).

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod kernel;
pub mod lab;
pub mod linalg;
pub mod measures;
pub mod model;
pub mod pathsim;
pub mod potential;
pub mod report;
pub mod timechange;

pub use error::{Error, Result};
pub use kernel::{ChainModel, DiffusionModel, FunctionClass, FunctionOnX};
pub use measures::{FineSupport, SmoothMeasure};
pub use model::Model;
pub use timechange::TimeChangedOperators;
