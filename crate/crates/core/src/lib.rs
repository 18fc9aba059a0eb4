//! Graph injection attacks on graph neural networks.
//!
//! The crate provides a compact attributed-graph representation, a small GNN
//! engine with exact reverse-mode gradients, the TDGIA attack (topological
//! defective edge selection followed by smooth adversarial feature
//! optimization), FGSM/AFGSM-style baselines and edge-policy ablations, and
//! an evaluation harness for transfer attacks across defense models.
//!
//! Row-parallel kernels use rayon when the `parallel` feature (on by
//! default) is enabled and fall back to sequential loops otherwise; results
//! are identical either way.

pub mod attack;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gnn;
pub mod graph;
pub mod injection;
pub mod lemma;
pub mod matrix;
pub mod optim;
pub mod par;
pub mod sbm;

pub use dataset::{Dataset, Splits};
pub use error::{Error, Result};
pub use graph::{Graph, Normalization, Propagation};
pub use injection::{apply_injection, validate_injection, Budget, Injection, InjectionArtifact, Violation};
pub use matrix::Matrix;
