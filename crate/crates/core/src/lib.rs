//! Chord length distributions (CLD) of spheroid particle populations.
//!
//! The crate maps particle size distributions (PSD) of spheroids to the
//! cumulative CLD seen by a chord-measuring probe, inverts that map for a
//! single shape with nonnegative Tikhonov regularization, and estimates
//! several coexisting shapes from time-resolved CLD data with a
//! back-and-forth nudging observer built on a population balance model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bfn;
pub mod cli;
pub mod config;
pub mod error;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod kernel;
pub mod measurement;
pub mod operator;
pub mod oracle;
pub mod quadrature;
pub mod recipes;
pub mod tikhonov;
pub mod transport;

pub use error::{Error, Result};
pub use geometry::{ShapeClass, ShapeParam};
pub use grid::Grid1D;
pub use quadrature::AngularQuadSpec;
