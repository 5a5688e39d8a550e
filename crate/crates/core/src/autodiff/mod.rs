//! Minimal reverse-mode differentiation over [`Tensor`](crate::Tensor)s.
//!
//! A [`Graph`] is an eagerly evaluated tape: every op computes its value on
//! insertion and records how to push gradients back to its inputs. There is
//! no broadcasting; every shape agreement is explicit and violations return
//! [`Error::ShapeMismatch`](crate::Error::ShapeMismatch).

mod backward;
mod conv;
mod gradcheck;
mod graph;

pub use backward::Gradients;
pub use conv::ConvGeometry;
pub use gradcheck::{finite_diff_check, Evaluation, FdEntry, FdReport, ProbePoint};
pub use graph::{Graph, NodeId};

#[cfg(test)]
mod tests;
