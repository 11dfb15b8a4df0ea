//! Random feature collocation for 1D second-order boundary value problems.
//!
//! A solution is sought as a random trigonometric expansion, either global
//! ([`features::RandomFeatureModel`]) or glued from local expansions by a
//! partition of unity ([`features::PumModel`]). Coefficients come from a
//! truncated-SVD least-squares fit at collocation points ([`solver`]). The
//! [`spectra`] and [`oracle`] modules evaluate the singular-value, condition
//! number, coefficient and probability bounds that accompany the method.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod error;
pub mod expr;
pub mod features;
pub mod oracle;
pub mod problem;
pub mod quadrature;
pub mod rng;
pub mod solver;
pub mod spectra;

pub use error::{Result, RfmError};
