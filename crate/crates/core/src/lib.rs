//! Picard fixed-point solver for first-order Cauchy problems `u' = H(u)`,
//! `u(0) = u0`, whose right-hand side may lose up to (strictly less than)
//! one derivative.
//!
//! The crate ships
//!
//! - uniform-grid signals with zero and Q-type extensions to the line ([`grid`]),
//! - a discrete Littlewood-Paley analysis with Besov norms, Bony paraproducts
//!   and the near-diagonal pairing ([`littlewood_paley`]),
//! - weakly singular Abel integrals and Caputo / Riemann-Liouville
//!   derivatives ([`fractional`]),
//! - right-hand-side operator families with causality and Lipschitz
//!   metadata ([`rhs`]),
//! - the windowed Picard solver ([`solver`]),
//! - a numerical harness for the functional inequalities behind the
//!   construction ([`lab`]),
//! - a config-driven command line front end ([`cli`]).

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod fractional;
pub mod grid;
pub mod lab;
pub mod littlewood_paley;
pub mod random;
pub mod rhs;
pub mod solver;
pub mod special;

pub use error::{Error, Result};
pub use grid::{ExtendedSignal, Grid, Signal, ValueShape};
pub use littlewood_paley::{BesovIndex, DyadicAnalysis};
