//! Capsule encoder (conv stem → primary capsules → MidCaps → LangCaps with
//! dynamic routing), the fully connected reconstruction decoder and the
//! margin + reconstruction training objective.
//!
//! Tensor layout conventions:
//! - the input image is `[rows, cols, 1]`;
//! - primary capsules come from one strided convolution with
//!   `banks · dim` output channels, reshaped to `[positions · banks, dim]`
//!   so that capsule `(y·W + x)·banks + b` holds channels `b·dim..(b+1)·dim`;
//! - routing transforms are `[children, parents, parent_dim, child_dim]`.

mod config;
mod loss;
mod model;
mod params;
mod routing;

pub use config::CapsNetConfig;
pub use loss::{loss_and_gradients, margin_loss, total_loss, LossBreakdown, MarginLossConfig};
pub use model::{
    build_encoder, build_training_loss, forward, predict, reconstruct, CapsuleOutputs, EncoderNodes, LossNodes,
    Prediction,
};
pub use params::{ModelParams, ParamSlot};
pub use routing::{dynamic_routing, route, squash, Routing, RoutingState};
