//! Active appearance model training and fitting.
//!
//! The fitting family covers the inverse compositional (ICA), project-out
//! (PO) and simultaneous inverse compositional (SIC) algorithms together with
//! their bidirectional variants, which solve the local shape update on the
//! template side and the global transform update on the image side in the
//! same iteration. Each variant takes an optional affine global basis and an
//! optional 3-sigma shape constraint.

pub mod cli;
pub mod error;
pub mod eval;
pub mod fitting;
pub mod geometry;
pub mod model;

pub use error::{AamError, Result};
