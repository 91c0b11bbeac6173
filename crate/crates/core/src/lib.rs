//! Random k-regular bipartite expanders, their spectral and combinatorial
//! certification, and higher-order expander message passing.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: simple undirected graphs, bipartite expanders, hypergraphs
//!   and their file formats.
//! * [`spectral`]: adjacency spectra (cyclic Jacobi) and the spectral
//!   bounds relating eigenvalues to diameter and expansion.
//! * [`oracle`]: exhaustive vertex/edge expansion on small graphs and a
//!   bound-verification report.
//! * [`construct`]: seeded generation of k-regular bipartite graphs as a
//!   union of disjoint perfect matchings, with Ramanujan rejection sampling.
//! * [`rewire`]: augmentation of an input graph with hyperedge nodes and the
//!   interleaved layer schedule.
//! * [`gnn`]: a small GIN engine with hand-written reverse-mode gradients,
//!   two-phase expander layers and the Tree-NeighborsMatch task.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used by the command-line tool.

pub mod construct;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod json;
pub mod oracle;
pub mod rewire;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use graph::{BipartiteExpander, Graph, Hypergraph};
pub use scalar::Scalar;

/// Spectral report in double precision.
pub type SpectralReport64 = spectral::SpectralReport<f64>;
/// Spectral report in single precision.
pub type SpectralReport32 = spectral::SpectralReport<f32>;
/// Bound-verification report in double precision.
pub type BoundReport64 = oracle::BoundReport<f64>;
/// GIN model in double precision (the precision used for training).
pub type GinModel64 = gnn::GinModel<f64>;
/// GIN model in single precision.
pub type GinModel32 = gnn::GinModel<f32>;
/// Dense feature matrix in double precision.
pub type FeatureMatrix64 = gnn::FeatureMatrix<f64>;
/// Training configuration in double precision.
pub type TrainConfig64 = gnn::TrainConfig<f64>;
