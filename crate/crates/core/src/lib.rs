//! Numerical verification of traces, integration by parts and jump sets for
//! fields of bounded deformation on Lipschitz graph domains.

pub mod error;
pub mod expr;
pub mod fields;
pub mod geometry;
pub mod quadrature;
pub mod symcalc;
pub mod trace;
pub mod verify;

pub use error::{Error, Result};
