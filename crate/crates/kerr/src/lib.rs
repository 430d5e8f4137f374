//! Command-line pipeline around `kerr-core`: configuration, file formats and
//! the `simulate`, `measure`, `reconstruct` and `analyze` commands.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod io;
pub mod pipeline;
