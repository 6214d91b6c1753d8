//! Locality-sensitive hashing with dynamically encoded trees for approximate
//! nearest-neighbor search in Euclidean space.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod chi2;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod params;
pub mod projection;
pub mod query;
pub mod tree;

pub use dataset::{distance, squared_distance, Dataset};
pub use encoder::{encode_dataset, locate_region, select_breakpoints, BreakpointTable, EncodedDataset};
pub use error::{Error, Result};
pub use params::{derive_params, DerivedParams, LshParams};
pub use projection::{HashFamily, ProjectedDataset, Projector};
pub use query::{det_only_ck_ann, magic_radius, CandidateSet, DetIndex, Hit, QueryOptions, QueryResult};
pub use tree::{build_tree, CandidateSink, DeTree, NodeId, QueryBounds};
