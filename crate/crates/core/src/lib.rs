//! Cycle-based pose graph optimization.
//!
//! The unknowns are the edge transforms of a pose graph rather than its
//! vertex poses; consistency is enforced by requiring the oriented product
//! of transforms around every cycle of a cycle basis to be the identity.
//! This crate builds those cycle bases (exact minimum, incremental, and
//! multi-agent), solves the constrained problem, and provides the
//! simulations and benchmarks used to compare the bases.

pub mod basis;
pub mod graph;
pub mod lie;
pub mod sim;
pub mod solver;

pub use basis::{density, gf2_rank, icb_update, is_independent, ma_icb, mcb, Cycle, CycleBasis};
pub use graph::{Edge, EdgeId, EdgeKind, PoseGraph, VertexId};
pub use lie::{Information, Pose, Tangent};
