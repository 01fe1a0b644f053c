//! Step graphexes: sampling, norms, kernel distances, weak regularity,
//! homomorphism densities, diagnostics and canonical forms.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod canonical;
pub mod cli;
pub mod densities;
pub mod diagnostics;
pub mod distances;
pub mod error;
pub mod estimation;
pub mod fixtures;
pub mod graphex;
pub mod norms;
pub mod regularity;
pub mod rng;
pub mod sampling;

pub use error::{GraphexError, Result};
pub use graphex::{IsolatedMass, MarginalProfile, RawGraphex, StepGraphex, ValidationReport};
