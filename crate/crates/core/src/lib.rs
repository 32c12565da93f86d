//! Link-sign prediction on signed bipartite graphs.
//!
//! Two parameter-free encoders propagate learnable node features across
//! the positive and negative edges of a bipartite graph: one on the
//! row-normalized graph itself, one on a rank-k truncated SVD of it. Their
//! layer-aggregated outputs feed a two-layer MLP that scores each edge's
//! sign. See [`pipeline`] for the end-to-end experiment drivers.
//!
//! With the default `parallel` feature, sparse products, encoder branches
//! and per-edge MLP work run on the rayon pool. All kernels write disjoint
//! outputs or reduce in a fixed order, so results do not depend on the
//! thread count.

pub mod data;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod lowrank;
pub mod metrics;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod sparse;

pub use error::{Error, Result};
