//! Risk-aware traversability navigation.
//!
//! Per-region traversability samples from an oracle are fused into a sparse
//! voxel map of Normal-Inverse-Gamma beliefs, compressed into a 2D grid of
//! lower-tail expected-shortfall (CVaR) scores, and consumed by an RRT*
//! planner and an MPPI controller. A deterministic 2D simulator drives the
//! whole loop with a ground-truth-backed mock oracle.

pub mod controller;
pub mod error;
pub mod geometry;
pub mod map;
pub mod oracle;
pub mod planner;
pub mod risk;
pub mod segmentation;
pub mod sim;

pub use error::{Error, Result};
pub use geometry::PoseSE2;
