//! Configuration, file formats and subcommands of the `detsum` binary.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod verify;

pub use config::RunConfig;
