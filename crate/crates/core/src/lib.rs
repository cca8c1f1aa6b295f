//! Dimension-theoretic computations for affine iterated function systems.
//!
//! The crate provides the computational kernel behind the `affine-interior`
//! tool: singular value functions and affinity-dimension brackets, the
//! critical-exponent certificate that drives the non-empty-interior
//! criteria, block Bernoulli measures with cylinder-bound certificates,
//! attractor rendering and interior-evidence detection, the commuting-case
//! sumset split, and Monte-Carlo Fourier/Sobolev-energy estimators together
//! with numerical oracles for the supporting integral inequalities.
//!
//! The crate is `no_std` (with `alloc`); IO, file formats and the CLI live in
//! the companion `affine-interior` crate.

#![cfg_attr(not(test), no_std)]
// Indexed loops and `!(x >= 0)` NaN-rejecting guards are used deliberately
// throughout the numeric kernels.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod dimension;
pub mod error;
pub mod fourier;
pub mod geometry;
pub mod linalg;
mod math;
pub mod measure;
pub mod quad;
pub mod rng;
pub mod splitting;

pub use error::{CoreError, Result};
pub use linalg::{MapTuple, Matrix, Word};
