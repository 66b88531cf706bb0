//! Battery-pack fault diagnosis by multiscale entropy fusion.
//!
//! The crate contains a coupled electro-thermal simulator of a 24-cell pack
//! ([`sim`]), the three entropy measures ([`lumped`], [`spatiotemporal`]),
//! their fusion and thresholding ([`fusion`], [`pipeline`]), parameter tuning
//! ([`optimizer`]), fault localization ([`localization`]) and the file
//! formats and benchmark used by the `mif` command-line tool.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod error;
pub mod fusion;
pub mod io;
pub mod localization;
pub mod lumped;
pub mod optimizer;
pub mod pipeline;
pub mod sim;
pub mod spatiotemporal;

pub use error::{Error, Result};
