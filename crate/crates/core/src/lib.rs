//! Information-optimal input design for discrete-time linear state-space
//! models with uncertain parameters.
//!
//! The pipeline: build a [`ssmodel::ParameterizedModel`], express the weighted
//! Fisher information `tr(K·I(θ))` as a quadratic in the stacked input
//! ([`infomatrix`]), pose a constrained quadratic program and lift it to a
//! semidefinite relaxation ([`relax`]), solve with the embedded interior-point
//! solver ([`sdp`]), then recover a globally optimal input or certify a
//! candidate against the relaxation bound. [`mri`] contains the hyperpolarized
//! pyruvate injection-design case.

extern crate self as inforelax;

pub mod cli;
pub mod error;
pub mod sdp;
pub mod infomatrix;
pub mod linalg;
pub mod mri;
pub mod relax;
pub mod ssmodel;

pub use error::{Error, Result};

#[cfg(test)]
#[path = "testutil.rs"]
mod testutil;
