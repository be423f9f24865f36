//! Embedded document + blob store.
//!
//! Layout under the root directory:
//!
//! ```text
//! benchmarks/<hash>/<owner>.json
//! episodes/<id>.json
//! artifacts/<hash>.bin
//! artifacts/<hash>.meta.json
//! users/<username>.json
//! tmp/                      staging area for atomic writes
//! ```
//!
//! Every file is written to `tmp/` and renamed into place. Artifact blobs are
//! renamed before their metadata, so a crash can leave an orphaned blob but
//! never metadata without content; only `.meta.json` files make an artifact
//! exist. All records are mirrored in an in-memory index loaded at open.
//! Writers are serialized by the index lock, which also makes the benchmark
//! duplicate check atomic with its insert.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use super::{
    ArtifactPut, Locator, ObjectHeader, ObjectKind, Result, StorageBackend, StoreError,
};
use crate::auth::{authorize, validate_username, Action, Requester, ServerAccessConfig, Target, UserRecord};
use crate::clock::{Clock, SystemClock};
use crate::filter::{passes, FilterNode};
use crate::model::{
    hash_artifact, validate_episode, Artifact, Benchmark, BenchmarkQuery, Episode, EpisodeRecord,
    Metadata, COMPLETE_KEY,
};

/// Places where a write can be made to fail, simulating a crash.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    /// After an artifact blob is in place, before its metadata is written.
    AfterArtifactBlob,
}

#[derive(Default)]
struct Index {
    /// Keyed by (hash, owner).
    benchmarks: BTreeMap<(String, String), Benchmark>,
    artifacts: BTreeMap<String, Artifact>,
    episodes: BTreeMap<String, Episode>,
    users: BTreeMap<String, UserRecord>,
}

impl Index {
    fn copies<'a>(&'a self, hash: &'a str) -> impl Iterator<Item = &'a Benchmark> + 'a {
        self.benchmarks
            .range((hash.to_string(), String::new())..)
            .take_while(move |((h, _), _)| h == hash)
            .map(|(_, b)| b)
    }

    /// A copy of `hash` that `user` may reference: their own or a public one.
    fn referenceable(&self, hash: &str, user: &str) -> bool {
        self.copies(hash).any(|b| b.created_by == user || b.is_public)
    }
}

pub struct OnDiskStore {
    root: PathBuf,
    access: ServerAccessConfig,
    clock: Arc<dyn Clock>,
    index: RwLock<Index>,
    fault: Mutex<Option<FaultPoint>>,
}

impl OnDiskStore {
    /// Opens (creating if needed) a store at `root` using the system clock.
    pub fn open(root: impl Into<PathBuf>, access: ServerAccessConfig) -> Result<Self> {
        Self::open_with_clock(root, access, Arc::new(SystemClock))
    }

    pub fn open_with_clock(
        root: impl Into<PathBuf>,
        access: ServerAccessConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Self> {
        let root = root.into();
        for dir in ["benchmarks", "episodes", "artifacts", "users", "tmp"] {
            fs::create_dir_all(root.join(dir))?;
        }
        // leftovers of interrupted writes
        for entry in fs::read_dir(root.join("tmp"))? {
            let _ = fs::remove_file(entry?.path());
        }

        let mut index = Index::default();
        for dir in subdirs(&root.join("benchmarks"))? {
            for path in json_files(&dir, ".json")? {
                let b: Benchmark = read_json(&path)?;
                index.benchmarks.insert((b.id.clone(), b.created_by.clone()), b);
            }
        }
        for path in json_files(&root.join("episodes"), ".json")? {
            let e: Episode = read_json(&path)?;
            index.episodes.insert(e.id.clone(), e);
        }
        for path in json_files(&root.join("artifacts"), ".meta.json")? {
            let a: Artifact = read_json(&path)?;
            if !root.join("artifacts").join(format!("{}.bin", a.id)).is_file() {
                return Err(StoreError::Corrupt {
                    path,
                    message: "artifact metadata without blob".into(),
                });
            }
            index.artifacts.insert(a.id.clone(), a);
        }
        for path in json_files(&root.join("users"), ".json")? {
            let u: UserRecord = read_json(&path)?;
            index.users.insert(u.username.clone(), u);
        }
        tracing::debug!(
            root = %root.display(),
            benchmarks = index.benchmarks.len(),
            episodes = index.episodes.len(),
            artifacts = index.artifacts.len(),
            users = index.users.len(),
            "opened store"
        );

        Ok(Self {
            root,
            access,
            clock,
            index: RwLock::new(index),
            fault: Mutex::new(None),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Arms a one-shot failure at `point`.
    pub fn inject_fault(&self, point: FaultPoint) {
        *self.fault.lock().unwrap() = Some(point);
    }

    /// Number of blob files on disk, including orphans.
    pub fn blob_count(&self) -> Result<usize> {
        Ok(json_files(&self.root.join("artifacts"), ".bin")?.len())
    }

    fn trip(&self, point: FaultPoint) -> io::Result<()> {
        let mut armed = self.fault.lock().unwrap();
        if *armed == Some(point) {
            *armed = None;
            return Err(io::Error::other(format!("injected fault at {point:?}")));
        }
        Ok(())
    }

    fn allowed(&self, action: Action, requester: &Requester, owner: &str, public: bool) -> bool {
        authorize(action, Target::new(owner, public), requester, &self.access).is_allowed()
    }

    fn readable(&self, requester: &Requester, owner: &str, public: bool) -> bool {
        self.allowed(Action::Read, requester, owner, public)
    }

    fn benchmark_path(&self, b: &Benchmark) -> PathBuf {
        self.root
            .join("benchmarks")
            .join(&b.id)
            .join(format!("{}.json", b.created_by))
    }

    fn episode_path(&self, id: &str) -> PathBuf {
        self.root.join("episodes").join(format!("{id}.json"))
    }

    fn blob_path(&self, id: &str) -> PathBuf {
        self.root.join("artifacts").join(format!("{id}.bin"))
    }

    fn artifact_meta_path(&self, id: &str) -> PathBuf {
        self.root.join("artifacts").join(format!("{id}.meta.json"))
    }

    fn user_path(&self, username: &str) -> PathBuf {
        self.root.join("users").join(format!("{username}.json"))
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> io::Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let tmp = self.root.join("tmp").join(uuid::Uuid::new_v4().to_string());
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        drop(file);
        fs::rename(&tmp, path).inspect_err(|_| {
            let _ = fs::remove_file(&tmp);
        })
    }

    fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> io::Result<()> {
        let bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
        self.write_atomic(path, &bytes)
    }

    /// Picks the benchmark copy `at` refers to among those `requester` can read.
    fn resolve_benchmark(&self, idx: &Index, at: &Locator, requester: &Requester) -> Result<Benchmark> {
        let candidates: Vec<&Benchmark> = idx
            .copies(&at.id)
            .filter(|b| at.owner.as_deref().is_none_or(|o| o == b.created_by))
            .filter(|b| self.readable(requester, &b.created_by, b.is_public))
            .collect();
        candidates
            .iter()
            .find(|b| requester.owns(&b.created_by))
            .or_else(|| candidates.iter().find(|b| b.is_public))
            .or_else(|| candidates.iter().min_by_key(|b| (b.created_at, &b.created_by)))
            .map(|b| (*b).clone())
            .ok_or_else(|| StoreError::not_found(ObjectKind::Benchmark, &at.id))
    }

    fn check(&self, action: Action, requester: &Requester, owner: &str, public: bool, what: &str) -> Result<()> {
        if self.allowed(action, requester, owner, public) {
            Ok(())
        } else {
            let verb = match action {
                Action::Write => "modify",
                Action::Delete => "delete",
                _ => "access",
            };
            Err(StoreError::Forbidden(format!("not permitted to {verb} {what}")))
        }
    }

    fn remove_benchmark(&self, idx: &mut Index, target: &Benchmark) -> Result<()> {
        // episodes that lose their last referenceable copy
        let orphaned: Vec<String> = {
            let remaining: Vec<&Benchmark> = idx
                .copies(&target.id)
                .filter(|b| b.created_by != target.created_by)
                .collect();
            idx.episodes
                .values()
                .filter(|e| e.benchmark_id == target.id)
                .filter(|e| !remaining.iter().any(|b| b.created_by == e.created_by || b.is_public))
                .map(|e| e.id.clone())
                .collect()
        };
        if let Some(foreign) = orphaned
            .iter()
            .filter_map(|id| idx.episodes.get(id))
            .find(|e| e.created_by != target.created_by)
        {
            return Err(StoreError::Conflict(format!(
                "benchmark {} is referenced by episodes of user `{}`",
                target.id, foreign.created_by
            )));
        }
        for id in orphaned {
            remove_if_exists(&self.episode_path(&id))?;
            idx.episodes.remove(&id);
        }
        let path = self.benchmark_path(target);
        remove_if_exists(&path)?;
        if let Some(dir) = path.parent() {
            // only succeeds once the last copy is gone
            let _ = fs::remove_dir(dir);
        }
        idx.benchmarks.remove(&(target.id.clone(), target.created_by.clone()));
        Ok(())
    }

    fn remove_artifact(&self, idx: &mut Index, id: &str) -> Result<()> {
        remove_if_exists(&self.artifact_meta_path(id))?;
        remove_if_exists(&self.blob_path(id))?;
        idx.artifacts.remove(id);
        Ok(())
    }
}

impl StorageBackend for OnDiskStore {
    fn access_config(&self) -> ServerAccessConfig {
        self.access
    }

    fn put_benchmark(&self, query: BenchmarkQuery, owner: &str) -> Result<Benchmark> {
        query.validate().map_err(StoreError::Validation)?;
        let mut idx = self.index.write().unwrap();
        if idx.referenceable(&query.hash, owner) {
            return Err(StoreError::DuplicateBenchmark(query.hash));
        }
        let benchmark = Benchmark {
            id: query.hash,
            serialized: query.serialized,
            metadata: query.metadata,
            created_by: owner.to_string(),
            is_public: false,
            created_at: self.clock.now(),
        };
        self.write_json(&self.benchmark_path(&benchmark), &benchmark)?;
        idx.benchmarks.insert(
            (benchmark.id.clone(), benchmark.created_by.clone()),
            benchmark.clone(),
        );
        Ok(benchmark)
    }

    fn load_benchmark(&self, at: &Locator, requester: &Requester) -> Result<Benchmark> {
        let idx = self.index.read().unwrap();
        self.resolve_benchmark(&idx, at, requester)
    }

    fn list_benchmarks(&self, requester: &Requester, filter: Option<&FilterNode>) -> Result<Vec<Benchmark>> {
        if let Some(f) = filter {
            f.validate()?;
        }
        let idx = self.index.read().unwrap();
        let mut out: Vec<Benchmark> = idx
            .benchmarks
            .values()
            .filter(|b| self.readable(requester, &b.created_by, b.is_public))
            .filter(|b| passes(filter, &b.metadata))
            .cloned()
            .collect();
        out.sort_by(|a, b| {
            (a.created_at, &a.id, &a.created_by).cmp(&(b.created_at, &b.id, &b.created_by))
        });
        Ok(out)
    }

    fn put_artifact(&self, content: &[u8], metadata: Metadata, owner: &str) -> Result<ArtifactPut> {
        let id = hash_artifact(content, owner);
        let mut idx = self.index.write().unwrap();
        if let Some(existing) = idx.artifacts.get(&id) {
            return Ok(ArtifactPut {
                artifact: existing.clone(),
                created: false,
            });
        }
        let artifact = Artifact {
            id: id.clone(),
            metadata,
            size: content.len() as u64,
            created_by: owner.to_string(),
            is_public: false,
            created_at: self.clock.now(),
        };
        self.write_atomic(&self.blob_path(&id), content)?;
        self.trip(FaultPoint::AfterArtifactBlob)?;
        self.write_json(&self.artifact_meta_path(&id), &artifact)?;
        idx.artifacts.insert(id, artifact.clone());
        Ok(ArtifactPut {
            artifact,
            created: true,
        })
    }

    fn artifact_info(&self, id: &str, requester: &Requester) -> Result<Artifact> {
        let idx = self.index.read().unwrap();
        idx.artifacts
            .get(id)
            .filter(|a| self.readable(requester, &a.created_by, a.is_public))
            .cloned()
            .ok_or_else(|| StoreError::not_found(ObjectKind::Artifact, id))
    }

    fn read_artifact(&self, id: &str, requester: &Requester) -> Result<(Artifact, Vec<u8>)> {
        let artifact = self.artifact_info(id, requester)?;
        let content = fs::read(self.blob_path(&artifact.id))?;
        Ok((artifact, content))
    }

    fn list_artifacts(&self, requester: &Requester, filter: Option<&FilterNode>) -> Result<Vec<Artifact>> {
        if let Some(f) = filter {
            f.validate()?;
        }
        let idx = self.index.read().unwrap();
        let mut out: Vec<Artifact> = idx
            .artifacts
            .values()
            .filter(|a| self.readable(requester, &a.created_by, a.is_public))
            .filter(|a| passes(filter, &a.metadata))
            .cloned()
            .collect();
        out.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        Ok(out)
    }

    fn put_episode(&self, record: EpisodeRecord, owner: &str) -> Result<Episode> {
        validate_episode(&record.tuples)?;
        let mut metadata = record.metadata;
        let complete = record.tuples.last().is_some_and(|t| t.is_terminal());
        metadata.insert(COMPLETE_KEY.into(), Value::Bool(complete));

        let mut idx = self.index.write().unwrap();
        if !idx.referenceable(&record.benchmark_id, owner) {
            return Err(StoreError::not_found(ObjectKind::Benchmark, &record.benchmark_id));
        }
        let episode = Episode {
            id: uuid::Uuid::new_v4().to_string(),
            benchmark_id: record.benchmark_id,
            tuples: record.tuples,
            metadata,
            created_by: owner.to_string(),
            is_public: false,
            created_at: self.clock.now(),
        };
        self.write_json(&self.episode_path(&episode.id), &episode)?;
        idx.episodes.insert(episode.id.clone(), episode.clone());
        Ok(episode)
    }

    fn get_episode(&self, id: &str, requester: &Requester) -> Result<Episode> {
        let idx = self.index.read().unwrap();
        idx.episodes
            .get(id)
            .filter(|e| self.readable(requester, &e.created_by, e.is_public))
            .cloned()
            .ok_or_else(|| StoreError::not_found(ObjectKind::Episode, id))
    }

    fn list_episodes(
        &self,
        requester: &Requester,
        benchmark_filter: Option<&FilterNode>,
        episode_filter: Option<&FilterNode>,
    ) -> Result<Vec<Episode>> {
        for f in [benchmark_filter, episode_filter].into_iter().flatten() {
            f.validate()?;
        }
        let idx = self.index.read().unwrap();
        let selected: HashSet<&str> = idx
            .benchmarks
            .values()
            .filter(|b| self.readable(requester, &b.created_by, b.is_public))
            .filter(|b| passes(benchmark_filter, &b.metadata))
            .map(|b| b.id.as_str())
            .collect();
        let mut out: Vec<Episode> = idx
            .episodes
            .values()
            .filter(|e| selected.contains(e.benchmark_id.as_str()))
            .filter(|e| self.readable(requester, &e.created_by, e.is_public))
            .filter(|e| passes(episode_filter, &e.metadata))
            .cloned()
            .collect();
        out.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        Ok(out)
    }

    fn publish(&self, kind: ObjectKind, at: &Locator, requester: &Requester) -> Result<ObjectHeader> {
        let mut idx = self.index.write().unwrap();
        match kind {
            ObjectKind::Benchmark => {
                let mut b = self.resolve_benchmark(&idx, at, requester)?;
                self.check(Action::Write, requester, &b.created_by, b.is_public, "this benchmark")?;
                if !b.is_public {
                    if idx.copies(&b.id).any(|c| c.is_public) {
                        return Err(StoreError::DuplicateBenchmark(b.id));
                    }
                    b.is_public = true;
                    self.write_json(&self.benchmark_path(&b), &b)?;
                    idx.benchmarks.insert((b.id.clone(), b.created_by.clone()), b.clone());
                }
                Ok(ObjectHeader::Benchmark(b.header()))
            }
            ObjectKind::Episode => {
                let mut e = idx
                    .episodes
                    .get(&at.id)
                    .filter(|e| self.readable(requester, &e.created_by, e.is_public))
                    .cloned()
                    .ok_or_else(|| StoreError::not_found(kind, &at.id))?;
                self.check(Action::Write, requester, &e.created_by, e.is_public, "this episode")?;
                if !e.is_public {
                    if !idx.copies(&e.benchmark_id).any(|b| b.is_public) {
                        return Err(StoreError::Conflict(format!(
                            "benchmark {} must be published before its episodes",
                            e.benchmark_id
                        )));
                    }
                    e.is_public = true;
                    self.write_json(&self.episode_path(&e.id), &e)?;
                    idx.episodes.insert(e.id.clone(), e.clone());
                }
                Ok(ObjectHeader::Episode(e.header()))
            }
            ObjectKind::Artifact => {
                let mut a = idx
                    .artifacts
                    .get(&at.id)
                    .filter(|a| self.readable(requester, &a.created_by, a.is_public))
                    .cloned()
                    .ok_or_else(|| StoreError::not_found(kind, &at.id))?;
                self.check(Action::Write, requester, &a.created_by, a.is_public, "this artifact")?;
                if !a.is_public {
                    a.is_public = true;
                    self.write_json(&self.artifact_meta_path(&a.id), &a)?;
                    idx.artifacts.insert(a.id.clone(), a.clone());
                }
                Ok(ObjectHeader::Artifact(a))
            }
        }
    }

    fn delete(&self, kind: ObjectKind, at: &Locator, requester: &Requester) -> Result<()> {
        let mut idx = self.index.write().unwrap();
        match kind {
            ObjectKind::Benchmark => {
                let b = self.resolve_benchmark(&idx, at, requester)?;
                self.check(Action::Delete, requester, &b.created_by, b.is_public, "this benchmark")?;
                self.remove_benchmark(&mut idx, &b)
            }
            ObjectKind::Episode => {
                let e = idx
                    .episodes
                    .get(&at.id)
                    .filter(|e| self.readable(requester, &e.created_by, e.is_public))
                    .ok_or_else(|| StoreError::not_found(kind, &at.id))?;
                self.check(Action::Delete, requester, &e.created_by, e.is_public, "this episode")?;
                remove_if_exists(&self.episode_path(&at.id))?;
                idx.episodes.remove(&at.id);
                Ok(())
            }
            ObjectKind::Artifact => {
                let a = idx
                    .artifacts
                    .get(&at.id)
                    .filter(|a| self.readable(requester, &a.created_by, a.is_public))
                    .ok_or_else(|| StoreError::not_found(kind, &at.id))?;
                self.check(Action::Delete, requester, &a.created_by, a.is_public, "this artifact")?;
                self.remove_artifact(&mut idx, &at.id)
            }
        }
    }

    fn create_user(&self, record: UserRecord) -> Result<()> {
        validate_username(&record.username).map_err(StoreError::Validation)?;
        let mut idx = self.index.write().unwrap();
        if idx.users.contains_key(&record.username) {
            return Err(StoreError::DuplicateUser(record.username));
        }
        self.write_json(&self.user_path(&record.username), &record)?;
        idx.users.insert(record.username.clone(), record);
        Ok(())
    }

    fn get_user(&self, username: &str) -> Result<Option<UserRecord>> {
        Ok(self.index.read().unwrap().users.get(username).cloned())
    }

    fn update_user(&self, record: UserRecord) -> Result<()> {
        let mut idx = self.index.write().unwrap();
        if !idx.users.contains_key(&record.username) {
            return Err(StoreError::NotFound { kind: "user", id: record.username });
        }
        self.write_json(&self.user_path(&record.username), &record)?;
        idx.users.insert(record.username.clone(), record);
        Ok(())
    }

    fn list_users(&self) -> Result<Vec<UserRecord>> {
        Ok(self.index.read().unwrap().users.values().cloned().collect())
    }

    fn delete_user(&self, username: &str) -> Result<()> {
        let mut idx = self.index.write().unwrap();
        if !idx.users.contains_key(username) {
            return Err(StoreError::NotFound { kind: "user", id: username.to_string() });
        }
        let private = |owner: &str, public: bool| owner == username && !public;

        let episodes: Vec<String> = idx
            .episodes
            .values()
            .filter(|e| private(&e.created_by, e.is_public))
            .map(|e| e.id.clone())
            .collect();
        for id in episodes {
            remove_if_exists(&self.episode_path(&id))?;
            idx.episodes.remove(&id);
        }
        let artifacts: Vec<String> = idx
            .artifacts
            .values()
            .filter(|a| private(&a.created_by, a.is_public))
            .map(|a| a.id.clone())
            .collect();
        for id in artifacts {
            self.remove_artifact(&mut idx, &id)?;
        }
        let benchmarks: Vec<Benchmark> = idx
            .benchmarks
            .values()
            .filter(|b| private(&b.created_by, b.is_public))
            .cloned()
            .collect();
        for b in benchmarks {
            self.remove_benchmark(&mut idx, &b)?;
        }
        remove_if_exists(&self.user_path(username))?;
        idx.users.remove(username);
        Ok(())
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn subdirs(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            out.push(entry.path());
        }
    }
    Ok(out)
}

fn json_files(dir: &Path, suffix: &str) -> io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let matches = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(suffix) && !n.starts_with('.'));
        // `.meta.json` files are not episode/user documents and vice versa
        let is_meta = path.to_string_lossy().ends_with(".meta.json");
        if matches && (suffix == ".meta.json" || !is_meta) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn remove_if_exists(path: &Path) -> io::Result<()> {
    match fs::remove_file(path) {
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
        other => other,
    }
}
