//! Core of the tupli offline-RL data service: the persisted domain model,
//! the metadata filter algebra, the storage backend, access control and
//! client-side dataset assembly.

pub mod auth;
pub mod clock;
pub mod dataset;
pub mod filter;
pub mod model;
pub mod storage;

pub use dataset::{ColumnarBatch, Dataset, EpisodeSource, LocalSource, TupleFilter};
pub use filter::{eval_filter, CompareOp, FilterError, FilterNode};
pub use model::{
    hash_artifact, hash_benchmark, validate_episode, Artifact, Benchmark, BenchmarkHeader,
    BenchmarkQuery, Episode, EpisodeHeader, EpisodeRecord, EpisodeViolation, Metadata, RlTuple,
};
pub use storage::{Locator, ObjectKind, OnDiskStore, StorageBackend, StoreError};
