//! Kerr-cavity collapse/revival simulation and generalized Q-function tomography.
//!
//! The crate is `no_std` (it needs `alloc`) and carries only the numerical
//! core: truncated Fock-space algebra, Kerr and Lindblad time evolution, the
//! displaced-projection measurement model, and density-matrix reconstruction.
//! File formats, configuration and the command-line pipeline live in the
//! companion `kerr` crate.
//!
//! Conventions used throughout:
//!
//! * all frequencies are angular (rad/s) and all times are in seconds;
//! * `Q_n(α) = ⟨n|D(−α) ρ D(α)|n⟩ / π`, so datasets are 1/π-normalized;
//! * Kerr evolution multiplies `|n⟩` by `exp(+i K n² t / 2)`.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod dynamics;
pub mod error;
pub mod fockspace;
pub mod linalg;
pub mod measurement;
pub mod tomography;

mod fit;

pub use error::{Error, Result};
pub use linalg::C64;
