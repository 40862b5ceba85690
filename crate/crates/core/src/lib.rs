//! Continuous and discrete loop-erased random walk from an interior point.
//!
//! The continuous process is a whole-plane Loewner chain whose driving function solves
//! `ξ(t) = B(t) + λ∫X^ξ(s)ds`; the discrete process is the loop erasure of a simple random walk
//! on a lattice approximation conditioned to reach the target.

pub mod domain;
pub mod error;
pub mod harmonic;
pub mod harness;
pub mod lerw_continuous;
pub mod lerw_discrete;
pub mod loewner;
#[cfg(test)]
mod testutil;

pub use domain::{build_grid, DomainSpec, GridGraph, Outer};
pub use error::{Error, Result};
pub use harmonic::TargetSpec;
pub use num_complex::Complex64 as C64;
