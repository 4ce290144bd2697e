//! Maximum-entropy random walks on directed hypergraphs.
//!
//! The crate infers transition tensors for two kinds of higher-order walks:
//!
//! * **broadcasting**, where one pivot node activates a set of receivers
//!   (linear node dynamics after projection), see [`broadcast`];
//! * **merging**, where a set of tail nodes jointly resolves to a single
//!   receiver (polynomial node dynamics), see [`merge`].
//!
//! In both cases the kernel is the KL projection of a reference tensor onto
//! the set of tensors that are stochastic and keep a prescribed distribution
//! `p` stationary. Projections are computed by Sinkhorn-type scaling of
//! per-node potentials. [`analysis`] simulates the induced dynamics and
//! certifies ergodicity, [`oracle`] is a slow dense solver used to check the
//! fast paths, and [`movielens`] runs a next-item evaluation on rating logs.
//!
//! Node indices are 0-based in the API and 1-based in every file format.
//!
//! ```
//! use hypermerw::hypergraph::{DirectedHypergraph, DegreeMode};
//! use hypermerw::broadcast::{infer_broadcast, BroadcastOptions};
//! use hypermerw::analysis::projected_kernel;
//!
//! let graph = DirectedHypergraph::from_json(
//!     r#"{"n":3,"edges":[{"tail":[1],"head":[2,3]},
//!                        {"tail":[2],"head":[1,3]},
//!                        {"tail":[3],"head":[1,2]}]}"#,
//! )?;
//! let layers = graph.adjacency_layers(DegreeMode::Global);
//! let p = vec![1.0 / 3.0; 3];
//! let kernel = infer_broadcast(&layers, &p, &[(3, 1.0)].into(), &BroadcastOptions::default())?;
//! let proj = projected_kernel(&kernel);
//! assert!((proj.matrix()[(0, 1)] - 0.5).abs() < 1e-12);
//! # Ok::<(), hypermerw::Error>(())
//! ```

pub mod analysis;
pub mod broadcast;
mod error;
pub mod hypergraph;
pub mod merge;
pub mod movielens;
pub mod oracle;
pub mod tensor;
mod util;

pub use util::{l1_distance, linf_distance, Weights};

pub use error::{Error, Infeasibility, InfeasibilityReason, Result};
