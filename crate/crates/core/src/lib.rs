//! Patch-level visual anomaly detection for memory- and compute-constrained targets.
//!
//! Two detectors operate on pre-extracted patch descriptors:
//!
//! * a per-position Gaussian model ([`gaussian`]), with a full-covariance
//!   baseline and a diagonal variant that scores in `O(d)` per patch;
//! * a nearest-neighbour memory bank ([`bank`]) compressed with product
//!   quantization ([`pq`]) and searched in two stages ([`search`]).
//!
//! The crate is `no_std` and only needs an allocator. File formats, dataset
//! manifests and the command-line tool live in the `vadlite` crate.
#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod anomaly_map;
pub mod bank;
pub mod counter;
pub mod distance;
pub mod error;
pub mod eval;
pub mod gaussian;
pub mod grid;
pub mod kmeans;
pub mod pq;
pub mod search;

pub use anomaly_map::{ScoreGrid, ScoreMap};
pub use bank::{CoresetConfig, CoresetTarget, MemoryBank, Provenance};
pub use error::{Error, Result};
pub use eval::{Label, Mask};
pub use gaussian::{DiagGaussianGrid, FullGaussianGrid, GaussianModel};
pub use grid::{FeatureGrid, LayerMap};
pub use pq::{Codebooks, CompressedBank, PqCode, StorageReport};
pub use search::{SearchConfig, SearchMode};
