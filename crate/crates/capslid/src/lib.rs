//! File formats, corpus handling, training, evaluation and the command-line
//! front end around `capslid-core`.

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod train;

pub use error::{CapslidError, Result};
