//! Persisted domain types, identity hashing and episode validation.
//!
//! Every type here has a canonical JSON encoding (snake_case field names)
//! which doubles as the HTTP wire format and the on-disk file format.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Free-form, string-keyed metadata document. Filters address it by dotted path.
pub type Metadata = serde_json::Map<String, Value>;

/// Metadata key the server attaches to episodes whose last tuple carries no
/// terminal flag.
pub const COMPLETE_KEY: &str = "_complete";

/// One interaction of a policy with an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlTuple {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    #[serde(default)]
    pub info: Metadata,
    #[serde(default)]
    pub terminated: bool,
    #[serde(default)]
    pub timeout: bool,
}

impl RlTuple {
    pub fn new(state: Vec<f64>, action: Vec<f64>, reward: f64) -> Self {
        Self {
            state,
            action,
            reward,
            info: Metadata::new(),
            terminated: false,
            timeout: false,
        }
    }

    pub fn terminated(mut self) -> Self {
        self.terminated = true;
        self
    }

    pub fn timed_out(mut self) -> Self {
        self.timeout = true;
        self
    }

    pub fn with_info(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.info.insert(key.into(), value.into());
        self
    }

    /// Whether this tuple closes its episode.
    pub fn is_terminal(&self) -> bool {
        self.terminated || self.timeout
    }

    /// The document tuple filters are evaluated against: `reward`,
    /// `terminated`, `timeout` and the nested `info` map.
    pub fn filter_document(&self) -> Metadata {
        let mut doc = Metadata::new();
        if let Some(reward) = serde_json::Number::from_f64(self.reward) {
            doc.insert("reward".into(), Value::Number(reward));
        }
        doc.insert("terminated".into(), Value::Bool(self.terminated));
        doc.insert("timeout".into(), Value::Bool(self.timeout));
        doc.insert("info".into(), Value::Object(self.info.clone()));
        doc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub benchmark_id: String,
    pub tuples: Vec<RlTuple>,
    #[serde(default)]
    pub metadata: Metadata,
    pub created_by: String,
    pub is_public: bool,
    pub created_at: DateTime<Utc>,
}

impl Episode {
    pub fn header(&self) -> EpisodeHeader {
        EpisodeHeader {
            id: self.id.clone(),
            benchmark_id: self.benchmark_id.clone(),
            metadata: self.metadata.clone(),
            length: self.tuples.len(),
            created_by: self.created_by.clone(),
            is_public: self.is_public,
            created_at: self.created_at,
        }
    }
}

/// Episode without its tuples, as returned by header-only listings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub id: String,
    pub benchmark_id: String,
    pub metadata: Metadata,
    pub length: usize,
    pub created_by: String,
    pub is_public: bool,
    pub created_at: DateTime<Utc>,
}

/// Episode payload submitted by clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub benchmark_id: String,
    pub tuples: Vec<RlTuple>,
    #[serde(default)]
    pub metadata: Metadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub id: String,
    pub serialized: String,
    pub metadata: Metadata,
    pub created_by: String,
    pub is_public: bool,
    pub created_at: DateTime<Utc>,
}

impl Benchmark {
    pub fn name(&self) -> &str {
        self.metadata.get("name").and_then(Value::as_str).unwrap_or("")
    }

    pub fn header(&self) -> BenchmarkHeader {
        BenchmarkHeader {
            id: self.id.clone(),
            metadata: self.metadata.clone(),
            created_by: self.created_by.clone(),
            is_public: self.is_public,
            created_at: self.created_at,
        }
    }
}

/// Benchmark without its serialized environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkHeader {
    pub id: String,
    pub metadata: Metadata,
    pub created_by: String,
    pub is_public: bool,
    pub created_at: DateTime<Utc>,
}

/// Client request to create a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkQuery {
    pub hash: String,
    pub serialized: String,
    pub metadata: Metadata,
}

impl BenchmarkQuery {
    /// Builds a query for `serialized`, computing its hash.
    pub fn new(
        serialized: impl Into<String>,
        name: impl Into<String>,
        description: impl Into<String>,
    ) -> Self {
        let serialized = serialized.into();
        let mut metadata = Metadata::new();
        metadata.insert("name".into(), Value::String(name.into()));
        metadata.insert("description".into(), Value::String(description.into()));
        Self {
            hash: hash_benchmark(&serialized),
            serialized,
            metadata,
        }
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    /// Checks the hash against the serialized string and the required
    /// `name`/`description` metadata.
    pub fn validate(&self) -> Result<(), String> {
        let expected = hash_benchmark(&self.serialized);
        if self.hash != expected {
            return Err(format!(
                "benchmark hash {} does not match SHA-256 of serialized environment ({expected})",
                self.hash
            ));
        }
        match self.metadata.get("name") {
            Some(Value::String(name)) if !name.is_empty() => {}
            _ => return Err("benchmark metadata requires a non-empty string `name`".into()),
        }
        match self.metadata.get("description") {
            Some(Value::String(_)) => Ok(()),
            _ => Err("benchmark metadata requires a string `description`".into()),
        }
    }
}

/// Stored artifact description. The blob itself is kept and transferred
/// separately from this record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub id: String,
    pub metadata: Metadata,
    pub size: u64,
    pub created_by: String,
    pub is_public: bool,
    pub created_at: DateTime<Utc>,
}

/// Lowercase hex SHA-256 of the serialized environment.
pub fn hash_benchmark(serialized: &str) -> String {
    hex::encode(Sha256::digest(serialized.as_bytes()))
}

/// Lowercase hex SHA-256 of `content || created_by`.
pub fn hash_artifact(content: &[u8], created_by: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(content);
    hasher.update(created_by.as_bytes());
    hex::encode(hasher.finalize())
}

/// First broken episode invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EpisodeViolation {
    Empty,
    EmptyState { index: usize },
    EmptyAction { index: usize },
    NonFinite { index: usize, field: &'static str },
    IntermediateTerminal { index: usize },
    StateDimension { index: usize, expected: usize, found: usize },
    ActionDimension { index: usize, expected: usize, found: usize },
}

impl EpisodeViolation {
    /// Offending tuple index, if the violation concerns a single tuple.
    pub fn index(&self) -> Option<usize> {
        match *self {
            Self::Empty => None,
            Self::EmptyState { index }
            | Self::EmptyAction { index }
            | Self::NonFinite { index, .. }
            | Self::IntermediateTerminal { index }
            | Self::StateDimension { index, .. }
            | Self::ActionDimension { index, .. } => Some(index),
        }
    }
}

impl fmt::Display for EpisodeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Empty => write!(f, "episode has no tuples"),
            Self::EmptyState { index } => write!(f, "tuple {index}: state is empty"),
            Self::EmptyAction { index } => write!(f, "tuple {index}: action is empty"),
            Self::NonFinite { index, field } => write!(f, "tuple {index}: {field} is not finite"),
            Self::IntermediateTerminal { index } => write!(
                f,
                "tuple {index}: terminated/timeout set before the last tuple"
            ),
            Self::StateDimension { index, expected, found } => write!(
                f,
                "tuple {index}: state dimension {found} differs from {expected}"
            ),
            Self::ActionDimension { index, expected, found } => write!(
                f,
                "tuple {index}: action dimension {found} differs from {expected}"
            ),
        }
    }
}

impl std::error::Error for EpisodeViolation {}

/// Checks the episode invariants, reporting the first violation in tuple order.
pub fn validate_episode(tuples: &[RlTuple]) -> Result<(), EpisodeViolation> {
    let first = tuples.first().ok_or(EpisodeViolation::Empty)?;
    let (state_dim, action_dim) = (first.state.len(), first.action.len());
    let last = tuples.len() - 1;

    for (index, t) in tuples.iter().enumerate() {
        if t.state.is_empty() {
            return Err(EpisodeViolation::EmptyState { index });
        }
        if t.action.is_empty() {
            return Err(EpisodeViolation::EmptyAction { index });
        }
        if t.state.len() != state_dim {
            return Err(EpisodeViolation::StateDimension {
                index,
                expected: state_dim,
                found: t.state.len(),
            });
        }
        if t.action.len() != action_dim {
            return Err(EpisodeViolation::ActionDimension {
                index,
                expected: action_dim,
                found: t.action.len(),
            });
        }
        if !t.state.iter().all(|v| v.is_finite()) {
            return Err(EpisodeViolation::NonFinite { index, field: "state" });
        }
        if !t.action.iter().all(|v| v.is_finite()) {
            return Err(EpisodeViolation::NonFinite { index, field: "action" });
        }
        if !t.reward.is_finite() {
            return Err(EpisodeViolation::NonFinite { index, field: "reward" });
        }
        if index < last && t.is_terminal() {
            return Err(EpisodeViolation::IntermediateTerminal { index });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tuple(dim: usize) -> RlTuple {
        RlTuple::new(vec![0.5; dim], vec![1.0], 0.0)
    }

    #[test]
    fn empty_string_digest() {
        assert_eq!(
            hash_benchmark(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn single_byte_change_changes_digest() {
        // FIPS 180-2 "abc" vector and its neighbour "abd".
        assert_eq!(
            hash_benchmark("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(
            hash_benchmark("abd"),
            "a52d159f262b2c6ddb724a61840befc36eb30c88877a4030b65cbe86298449c9"
        );
    }

    #[test]
    fn artifact_digest_binds_owner() {
        let content = b"load profile";
        assert_eq!(hash_artifact(content, "alice"), hash_artifact(content, "alice"));
        assert_ne!(hash_artifact(content, "alice"), hash_artifact(content, "bob"));
        // SHA-256("alice")
        assert_eq!(
            hash_artifact(b"", "alice"),
            "2bd806c97f0e00af1a1fc3328fa763a9269723c8db8fac4f93af71db186d6e90"
        );
    }

    #[test]
    fn single_terminal_tuple_is_a_valid_episode() {
        assert_eq!(validate_episode(&[tuple(3).terminated()]), Ok(()));
    }

    #[test]
    fn truncated_episode_is_valid() {
        assert_eq!(validate_episode(&[tuple(3), tuple(3)]), Ok(()));
    }

    #[test]
    fn intermediate_terminal_is_rejected() {
        let err = validate_episode(&[tuple(3).terminated(), tuple(3)]).unwrap_err();
        assert_eq!(err, EpisodeViolation::IntermediateTerminal { index: 0 });
        let err = validate_episode(&[tuple(3).timed_out(), tuple(3)]).unwrap_err();
        assert_eq!(err.index(), Some(0));
    }

    #[test]
    fn dimension_mismatch_names_index() {
        let err = validate_episode(&[tuple(3), tuple(3), tuple(4)]).unwrap_err();
        assert_eq!(
            err,
            EpisodeViolation::StateDimension { index: 2, expected: 3, found: 4 }
        );
        let mut odd = tuple(3);
        odd.action.push(2.0);
        let err = validate_episode(&[tuple(3), odd]).unwrap_err();
        assert!(matches!(err, EpisodeViolation::ActionDimension { index: 1, .. }));
    }

    #[test]
    fn empty_and_non_finite_are_rejected() {
        assert_eq!(validate_episode(&[]), Err(EpisodeViolation::Empty));
        let mut bad = tuple(2);
        bad.reward = f64::NAN;
        assert_eq!(
            validate_episode(&[bad]),
            Err(EpisodeViolation::NonFinite { index: 0, field: "reward" })
        );
        let empty = RlTuple::new(vec![], vec![1.0], 0.0);
        assert_eq!(validate_episode(&[empty]), Err(EpisodeViolation::EmptyState { index: 0 }));
    }

    #[test]
    fn query_validation() {
        let q = BenchmarkQuery::new("{\"env\":1}", "ems", "house");
        assert!(q.validate().is_ok());
        let mut wrong = q.clone();
        wrong.hash = hash_benchmark("other");
        assert!(wrong.validate().unwrap_err().contains("does not match"));
        let unnamed = BenchmarkQuery::new("x", "", "d");
        assert!(unnamed.validate().is_err());
    }

    #[test]
    fn tuple_wire_format_uses_field_names() {
        let t = tuple(1).terminated().with_info("soc", 0.5);
        let json = serde_json::to_value(&t).unwrap();
        assert_eq!(
            json,
            serde_json::json!({
                "state": [0.5], "action": [1.0], "reward": 0.0,
                "info": {"soc": 0.5}, "terminated": true, "timeout": false
            })
        );
    }
}
