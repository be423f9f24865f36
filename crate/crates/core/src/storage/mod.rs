//! Storage of benchmarks, artifacts, episodes and accounts.
//!
//! [`StorageBackend`] is the contract the HTTP service and the local dataset
//! source program against. It owns the creation checks (benchmark
//! deduplication, artifact upsert, episode references) and the visibility
//! rules, so every backend enforces them identically. [`OnDiskStore`] is the
//! embedded implementation.

mod disk;

use std::io;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auth::{Requester, ServerAccessConfig, UserRecord};
use crate::filter::{FilterError, FilterNode};
use crate::model::{
    Artifact, Benchmark, BenchmarkHeader, BenchmarkQuery, Episode, EpisodeHeader, EpisodeRecord,
    EpisodeViolation, Metadata,
};

pub use disk::{FaultPoint, OnDiskStore};

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{0}")]
    Validation(String),
    #[error("invalid episode: {0}")]
    InvalidEpisode(#[from] EpisodeViolation),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("a benchmark with hash {0} already exists")]
    DuplicateBenchmark(String),
    #[error("user `{0}` already exists")]
    DuplicateUser(String),
    #[error("{kind} `{id}` not found")]
    NotFound { kind: &'static str, id: String },
    #[error("{0}")]
    Forbidden(String),
    #[error("{0}")]
    Conflict(String),
    #[error("corrupt record {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("storage I/O error: {0}")]
    Io(#[from] io::Error),
}

impl StoreError {
    pub(crate) fn not_found(kind: ObjectKind, id: &str) -> Self {
        StoreError::NotFound {
            kind: kind.as_str(),
            id: id.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Benchmark,
    Artifact,
    Episode,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 3] = [Self::Benchmark, Self::Artifact, Self::Episode];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Benchmark => "benchmark",
            Self::Artifact => "artifact",
            Self::Episode => "episode",
        }
    }
}

/// Addresses one stored object.
///
/// Benchmark ids are content hashes, and two users may hold private copies
/// of the same environment. `owner` picks a specific copy; without it the
/// requester's own copy wins, then the public one, then the oldest readable.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Locator {
    pub id: String,
    pub owner: Option<String>,
}

impl Locator {
    pub fn owned_by(id: impl Into<String>, owner: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            owner: Some(owner.into()),
        }
    }
}

impl From<&str> for Locator {
    fn from(id: &str) -> Self {
        Self { id: id.to_string(), owner: None }
    }
}

impl From<String> for Locator {
    fn from(id: String) -> Self {
        Self { id, owner: None }
    }
}

/// Object returned by publish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObjectHeader {
    Benchmark(BenchmarkHeader),
    Episode(EpisodeHeader),
    Artifact(Artifact),
}

impl ObjectHeader {
    pub fn is_public(&self) -> bool {
        match self {
            Self::Benchmark(b) => b.is_public,
            Self::Episode(e) => e.is_public,
            Self::Artifact(a) => a.is_public,
        }
    }
}

/// Result of an artifact upload.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactPut {
    pub artifact: Artifact,
    /// False when an identical artifact already existed.
    pub created: bool,
}

pub trait StorageBackend: Send + Sync {
    fn access_config(&self) -> ServerAccessConfig;

    /// Creates a private benchmark. Rejected when a copy with the same hash
    /// is owned by `owner` or public.
    fn put_benchmark(&self, query: BenchmarkQuery, owner: &str) -> Result<Benchmark>;
    fn load_benchmark(&self, at: &Locator, requester: &Requester) -> Result<Benchmark>;
    fn list_benchmarks(
        &self,
        requester: &Requester,
        filter: Option<&FilterNode>,
    ) -> Result<Vec<Benchmark>>;

    /// Idempotent upsert keyed by `hash_artifact(content, owner)`.
    fn put_artifact(&self, content: &[u8], metadata: Metadata, owner: &str) -> Result<ArtifactPut>;
    fn artifact_info(&self, id: &str, requester: &Requester) -> Result<Artifact>;
    fn read_artifact(&self, id: &str, requester: &Requester) -> Result<(Artifact, Vec<u8>)>;
    fn list_artifacts(
        &self,
        requester: &Requester,
        filter: Option<&FilterNode>,
    ) -> Result<Vec<Artifact>>;

    /// Stores a private episode referencing a benchmark owned by `owner` or
    /// public.
    fn put_episode(&self, record: EpisodeRecord, owner: &str) -> Result<Episode>;
    fn get_episode(&self, id: &str, requester: &Requester) -> Result<Episode>;
    /// Visible benchmarks passing `benchmark_filter`, then visible episodes
    /// of those benchmarks passing `episode_filter`.
    fn list_episodes(
        &self,
        requester: &Requester,
        benchmark_filter: Option<&FilterNode>,
        episode_filter: Option<&FilterNode>,
    ) -> Result<Vec<Episode>>;

    fn publish(&self, kind: ObjectKind, at: &Locator, requester: &Requester) -> Result<ObjectHeader>;
    fn delete(&self, kind: ObjectKind, at: &Locator, requester: &Requester) -> Result<()>;

    fn create_user(&self, record: UserRecord) -> Result<()>;
    fn get_user(&self, username: &str) -> Result<Option<UserRecord>>;
    fn update_user(&self, record: UserRecord) -> Result<()>;
    fn list_users(&self) -> Result<Vec<UserRecord>>;
    /// Removes the account and every private object it owns. Public objects
    /// keep their `created_by` label.
    fn delete_user(&self, username: &str) -> Result<()>;
}
