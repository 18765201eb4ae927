//! Configuration, dataset I/O, grid search and the benchmark harness behind
//! the `fgboost` command-line tool.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod commands;
pub mod config;
pub mod grid;
pub mod io;
