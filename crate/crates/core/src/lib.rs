//! Exact Gauss-Newton training for reversible coupling-layer networks.
//!
//! The network ([`revnet::RevMlp`]) is a stack of additive coupling blocks
//! with frozen inverted-bottleneck projections. Because the map is invertible,
//! the Jacobian of any intermediate activation with respect to the output can
//! be obtained by differentiating the inverse map, and the per-block weight
//! Jacobians have a closed-form right inverse. [`optim::gn_step`] uses that
//! right inverse to take an exact Gauss-Newton step at the cost of a few
//! small pseudoinverses per block.

pub mod analysis;
pub mod data;
pub mod linalg;
pub mod losses;
pub mod optim;
pub mod oracle;
pub mod revnet;
pub mod train;

pub use linalg::{LinalgError, Mat, PinvPolicy};
