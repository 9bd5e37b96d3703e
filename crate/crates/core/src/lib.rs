//! Network-controllability features for graph anomaly detection.
//!
//! The crate scores every node by its average controllability, writes those
//! scores into the graph as edge weights or one-hot edge attributes, and
//! trains small message-passing networks that flag anomalous nodes.

pub mod augment;
pub mod controllability;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod inject;
pub mod linalg;
pub mod metrics;
pub mod pipeline;

pub use error::{Error, Result};
pub use graph::{DenseAdjacency, Graph};
