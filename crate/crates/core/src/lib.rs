#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod asym;
pub mod error;
pub mod greens;
pub mod linalg;
mod math;
pub mod oracle;
pub mod solver;
pub mod space;
pub mod wave;

pub use error::{Error, Result};
