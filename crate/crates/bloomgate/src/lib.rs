//! bloomgate: approximate nearest neighbor retrieval over compact binary
//! codes, with Bloom filters as per-shard gatekeepers.
//!
//! Dense feature vectors are hashed to fixed-width binary codes by a
//! multi-assignment k-means scheme (one bit per centroid, MEAN or MINx
//! binarization) and stored in a sharded inverted-file index. Each shard is
//! guarded by a Bloom filter over the posted codes: a query whose code no
//! gate admits is rejected without touching any shard, which is where the
//! speedup on distractor-heavy workloads comes from. Admitted queries run
//! the usual two-step search — Hamming-threshold scan over the shard's
//! distinct codes, then cosine re-ranking on the full vectors.
//!
//! Modules:
//! - [`vectors`]: feature vectors, distances, fvecs/ivecs I/O, synthetic data
//! - [`quantizer`]: codebook training, MEAN/MINx binarization, Hamming
//! - [`bloom`]: the gatekeeper filter and its sizing formulas
//! - [`index`]: sharded inverted files and the query pipeline
//! - [`eval`]: AP/MAP, the experiment harness, CSV reporting

pub mod bloom;
pub mod error;
pub mod eval;
pub mod index;
pub mod quantizer;
pub mod vectors;

pub use error::{Error, Result};
