//! Spectral graph coarsening with oriented coarse message passing.
//!
//! The crate covers graph and Laplacian construction, the `L`-seminorm
//! toolkit, coarsening matrices and their spectral approximation constant,
//! a greedy subspace-preserving coarsener, coarse propagation operators with
//! error bounds, and small SGC/GCN models trained on full or coarse graphs.

pub mod coarsening;
pub mod data;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod linalg;
pub mod loukas;
pub mod mp;
pub mod seminorm;
pub mod sparse;
pub mod toy;

pub use coarsening::{coarse_laplacian_check, coarsen_adjacency, rsa_constant, Coarsening, CoarseningDoc, RsaReport};
pub use error::{Error, Result};
pub use graph::{Graph, LaplacianKind, PropagationKind, SplitMasks};
pub use loukas::{loukas_coarsen, LoukasConfig, LoukasOutput};
pub use seminorm::{SemiNormContext, SpectralBasis};
pub use sparse::{Csr, LinearOperator, SparseSym};
pub use mp::{coarse_operator, mp_error, BoundCertificate, BoundConstants, CoarseOperatorKind};
pub use gnn::{train_coarse, train_full, Model, ModelSpec, TrainConfig, TrainReport};
