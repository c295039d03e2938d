//! Evaluation of human-alone, human-with-AI and AI-alone decision systems
//! from single-blinded randomized (or unconfounded observational) trials.
//!
//! The crate is `no_std` (it needs `alloc`). Parsing, configuration and
//! report serialization live in the companion `aidecide` crate.
//!
//! Layout:
//!
//! - [`model`]: records, schema validation, loss specification, confusion
//!   matrices and agreement tables.
//! - [`nuisance`]: cross-fitted propensity, decision and outcome models.
//! - [`frame`]: per-record influence-function building blocks.
//! - [`estimate`]: AIPW risk differences with Wald intervals.
//! - [`bounds`]: sharp bounds on unidentified risks and their estimators.
//! - [`preference`]: test inversion over a grid of false-positive losses.
//! - [`policy`]: exact monotone policy learning over the risk-score lattice.
//! - [`oracle`]: synthetic populations, exact functionals and an LP oracle.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bounds;
pub mod error;
pub mod estimate;
pub mod frame;
pub mod math;
pub mod model;
pub mod nuisance;
pub mod oracle;
pub mod policy;
pub mod preference;

pub use error::{Error, ErrorKind, Result};
