//! Trotter products of quantum stochastic cocycles on symmetric Fock space,
//! computed through their associated semigroups, with a truncated Fock-space
//! simulator as an independent check.

pub mod brownian;
pub mod coefficients;
pub mod corpus;
pub mod error;
pub mod focksim;
pub mod json;
pub mod numkit;
pub mod semigroups;
pub mod signals;
pub mod trotter;

pub use coefficients::{CoefficientMatrix, Kind};
pub use error::{Error, Result};
pub use numkit::CMatrix;
pub use signals::{Dyadic, StepFunction};
