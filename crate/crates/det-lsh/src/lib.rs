//! File formats, ground truth, metrics, index persistence and benchmarking
//! around [`det_lsh_core`].

pub mod bench;
pub mod error;
pub mod fingerprint;
pub mod ground_truth;
pub mod metrics;
pub mod persist;
pub mod synthetic;
pub mod vecs;

pub use bench::{run_benchmark, BenchConfig, BenchReport, BenchRow, Method};
pub use error::{HarnessError, Result};
pub use fingerprint::dataset_fingerprint;
pub use ground_truth::{brute_force_knn, GroundTruth};
pub use persist::{load_index, save_index};

pub use det_lsh_core as core;
