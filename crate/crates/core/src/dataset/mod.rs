//! Client-side dataset assembly.
//!
//! A [`Dataset`] carries three filter stages. Benchmark and episode filters
//! run at the [`EpisodeSource`] (server-side for a remote source); the tuple
//! filter runs locally on every loaded episode. Episodes left without tuples
//! are dropped.

mod columnar;

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::auth::Requester;
use crate::filter::{FilterError, FilterNode};
use crate::model::{Episode, RlTuple};
use crate::storage::StorageBackend;

pub use columnar::{ColumnarBatch, ColumnarFormatError, COLUMNAR_MAGIC, COLUMNAR_VERSION};

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("loading episodes failed: {0}")]
    Source(BoxError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("dataset has not been loaded")]
    NotLoaded,
    #[error("cannot sample {requested} episodes from {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error(
        "{field} dimension {found} of episode {episode} differs from {expected} in episode {reference}"
    )]
    DimensionMismatch {
        field: &'static str,
        reference: String,
        episode: String,
        expected: usize,
        found: usize,
    },
}

/// Where episodes come from.
pub trait EpisodeSource {
    /// Visible episodes of visible benchmarks passing `benchmark_filter`,
    /// restricted to those passing `episode_filter`, in the source's order.
    fn fetch_episodes(
        &self,
        benchmark_filter: Option<&FilterNode>,
        episode_filter: Option<&FilterNode>,
    ) -> Result<Vec<Episode>, BoxError>;
}

/// Reads straight from a storage backend on behalf of `requester`.
pub struct LocalSource<'a> {
    pub store: &'a dyn StorageBackend,
    pub requester: Requester,
}

impl EpisodeSource for LocalSource<'_> {
    fn fetch_episodes(
        &self,
        benchmark_filter: Option<&FilterNode>,
        episode_filter: Option<&FilterNode>,
    ) -> Result<Vec<Episode>, BoxError> {
        Ok(self
            .store
            .list_episodes(&self.requester, benchmark_filter, episode_filter)?)
    }
}

/// Tuple-level filter: a declarative filter over the tuple document
/// (`reward`, `terminated`, `timeout`, `info.*`) or an arbitrary predicate.
#[derive(Clone)]
pub enum TupleFilter {
    Filter(FilterNode),
    Predicate(Arc<dyn Fn(&RlTuple) -> bool + Send + Sync>),
}

impl TupleFilter {
    pub fn predicate(f: impl Fn(&RlTuple) -> bool + Send + Sync + 'static) -> Self {
        Self::Predicate(Arc::new(f))
    }

    pub fn keeps(&self, tuple: &RlTuple) -> bool {
        match self {
            Self::Filter(f) => f.matches(&tuple.filter_document()),
            Self::Predicate(p) => p(tuple),
        }
    }
}

impl fmt::Debug for TupleFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Filter(node) => f.debug_tuple("Filter").field(node).finish(),
            Self::Predicate(_) => f.write_str("Predicate(..)"),
        }
    }
}

impl From<FilterNode> for TupleFilter {
    fn from(node: FilterNode) -> Self {
        Self::Filter(node)
    }
}

/// A filtered view over stored episodes. Filters are fixed per instance;
/// every `with_*` call yields a new, unloaded dataset.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    benchmark_filter: Option<FilterNode>,
    episode_filter: Option<FilterNode>,
    tuple_filter: Option<TupleFilter>,
    episodes: Option<Vec<Episode>>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_benchmark_filter(&self, filter: FilterNode) -> Self {
        Self {
            benchmark_filter: Some(filter),
            episodes: None,
            ..self.clone_filters()
        }
    }

    pub fn with_episode_filter(&self, filter: FilterNode) -> Self {
        Self {
            episode_filter: Some(filter),
            episodes: None,
            ..self.clone_filters()
        }
    }

    pub fn with_tuple_filter(&self, filter: impl Into<TupleFilter>) -> Self {
        Self {
            tuple_filter: Some(filter.into()),
            episodes: None,
            ..self.clone_filters()
        }
    }

    fn clone_filters(&self) -> Self {
        Self {
            benchmark_filter: self.benchmark_filter.clone(),
            episode_filter: self.episode_filter.clone(),
            tuple_filter: self.tuple_filter.clone(),
            episodes: None,
        }
    }

    pub fn benchmark_filter(&self) -> Option<&FilterNode> {
        self.benchmark_filter.as_ref()
    }

    pub fn episode_filter(&self) -> Option<&FilterNode> {
        self.episode_filter.as_ref()
    }

    pub fn is_loaded(&self) -> bool {
        self.episodes.is_some()
    }

    /// Loaded episodes; empty before [`Dataset::load`].
    pub fn episodes(&self) -> &[Episode] {
        self.episodes.as_deref().unwrap_or_default()
    }

    pub fn tuple_count(&self) -> usize {
        self.episodes().iter().map(|e| e.tuples.len()).sum()
    }

    /// Runs the filter stages in order benchmark, episode, tuple.
    pub fn load(&self, source: &dyn EpisodeSource) -> Result<Dataset, DatasetError> {
        for f in [&self.benchmark_filter, &self.episode_filter].into_iter().flatten() {
            f.validate()?;
        }
        if let Some(TupleFilter::Filter(f)) = &self.tuple_filter {
            f.validate()?;
        }
        let fetched = source
            .fetch_episodes(self.benchmark_filter.as_ref(), self.episode_filter.as_ref())
            .map_err(DatasetError::Source)?;
        let episodes = match &self.tuple_filter {
            None => fetched,
            Some(tf) => fetched
                .into_iter()
                .filter_map(|mut e| {
                    e.tuples.retain(|t| tf.keeps(t));
                    (!e.tuples.is_empty()).then_some(e)
                })
                .collect(),
        };
        Ok(Dataset {
            episodes: Some(episodes),
            ..self.clone_filters()
        })
    }

    /// Uniform sample of `n` loaded episodes without replacement,
    /// deterministic in `seed`. Selected episodes keep their loaded order.
    pub fn sample_episodes(&self, n: usize, seed: u64) -> Result<Dataset, DatasetError> {
        let loaded = self.episodes.as_ref().ok_or(DatasetError::NotLoaded)?;
        if n > loaded.len() {
            return Err(DatasetError::SampleTooLarge {
                requested: n,
                available: loaded.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, loaded.len(), n).into_vec();
        picked.sort_unstable();
        Ok(Dataset {
            episodes: Some(picked.into_iter().map(|i| loaded[i].clone()).collect()),
            ..self.clone_filters()
        })
    }

    /// Concatenates all retained tuples in episode order.
    pub fn to_columnar(&self) -> Result<ColumnarBatch, DatasetError> {
        let episodes = self.episodes.as_ref().ok_or(DatasetError::NotLoaded)?;
        ColumnarBatch::from_episodes(episodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Metadata;
    use chrono::{TimeZone, Utc};

    struct Fixed(Vec<Episode>);

    impl EpisodeSource for Fixed {
        fn fetch_episodes(
            &self,
            _: Option<&FilterNode>,
            episode_filter: Option<&FilterNode>,
        ) -> Result<Vec<Episode>, BoxError> {
            Ok(self
                .0
                .iter()
                .filter(|e| crate::filter::passes(episode_filter, &e.metadata))
                .cloned()
                .collect())
        }
    }

    fn episode(id: &str, rewards: &[f64]) -> Episode {
        let mut tuples: Vec<RlTuple> = rewards
            .iter()
            .map(|&r| RlTuple::new(vec![r, r + 1.0], vec![0.0], r))
            .collect();
        if let Some(last) = tuples.last_mut() {
            last.terminated = true;
        }
        Episode {
            id: id.into(),
            benchmark_id: "b".into(),
            tuples,
            metadata: Metadata::new(),
            created_by: "alice".into(),
            is_public: false,
            created_at: Utc.timestamp_opt(0, 0).unwrap(),
        }
    }

    fn corpus() -> Fixed {
        Fixed(vec![
            episode("e0", &[0.0, 1.0, 0.0]),
            episode("e1", &[2.0, 0.0]),
            episode("e2", &[0.0]),
            episode("e3", &[-1.0, 3.0]),
        ])
    }

    #[test]
    fn unfiltered_load_keeps_everything() {
        let ds = Dataset::new().load(&corpus()).unwrap();
        assert_eq!(ds.episodes().len(), 4);
        assert_eq!(ds.tuple_count(), 8);
    }

    #[test]
    fn tuple_filter_keeps_positive_rewards_and_drops_empty_episodes() {
        let ds = Dataset::new()
            .with_tuple_filter(FilterNode::gt("reward", 0))
            .load(&corpus())
            .unwrap();
        let ids: Vec<&str> = ds.episodes().iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["e0", "e1", "e3"]);
        assert!(ds.episodes().iter().flat_map(|e| &e.tuples).all(|t| t.reward > 0.0));
    }

    #[test]
    fn predicate_tuple_filter() {
        let ds = Dataset::new()
            .with_tuple_filter(TupleFilter::predicate(|t| t.state[0] < 0.0))
            .load(&corpus())
            .unwrap();
        assert_eq!(ds.tuple_count(), 1);
    }

    #[test]
    fn with_filter_yields_unloaded_copy() {
        let loaded = Dataset::new().load(&corpus()).unwrap();
        let refined = loaded.with_episode_filter(FilterNode::eq("x", 1));
        assert!(loaded.is_loaded());
        assert!(!refined.is_loaded());
        assert!(refined.episode_filter().is_some());
    }

    #[test]
    fn sampling_bounds() {
        let ds = Dataset::new().load(&corpus()).unwrap();
        assert_eq!(ds.sample_episodes(0, 1).unwrap().episodes().len(), 0);
        let all = ds.sample_episodes(4, 99).unwrap();
        assert_eq!(all.episodes(), ds.episodes());
        assert!(matches!(
            ds.sample_episodes(5, 1),
            Err(DatasetError::SampleTooLarge { requested: 5, available: 4 })
        ));
        assert!(matches!(Dataset::new().sample_episodes(1, 1), Err(DatasetError::NotLoaded)));
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let ds = Dataset::new().load(&corpus()).unwrap();
        let a = ds.sample_episodes(2, 7).unwrap();
        let b = ds.sample_episodes(2, 7).unwrap();
        assert_eq!(a.episodes(), b.episodes());
    }

    #[test]
    fn single_draw_frequencies_are_uniform() {
        let ds = Dataset::new().load(&corpus()).unwrap();
        let mut counts = [0usize; 4];
        for seed in 0..10_000u64 {
            let s = ds.sample_episodes(1, seed).unwrap();
            let i = ds.episodes().iter().position(|e| e.id == s.episodes()[0].id).unwrap();
            counts[i] += 1;
        }
        // binomial(10000, 1/4): sigma = sqrt(10000 * 0.25 * 0.75)
        let sigma = (10_000.0f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - 2500.0).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn columnar_boundaries() {
        let ds = Dataset::new().load(&Fixed(vec![
            episode("a", &[1.0, 2.0, 3.0]),
            episode("b", &[4.0, 5.0]),
        ]))
        .unwrap();
        let batch = ds.to_columnar().unwrap();
        assert_eq!(batch.len(), 5);
        assert_eq!(batch.episode_boundaries, vec![0, 3]);
        assert_eq!(batch.episode_lengths(), vec![3, 2]);
        assert_eq!(batch.rewards, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(batch.terminateds, vec![false, false, true, false, true]);
        assert_eq!(batch.observation(3), &[4.0, 5.0]);
    }

    #[test]
    fn empty_dataset_is_an_empty_batch() {
        let batch = Dataset::new().load(&Fixed(vec![])).unwrap().to_columnar().unwrap();
        assert_eq!(batch.len(), 0);
        assert!(batch.episode_boundaries.is_empty());
    }

    #[test]
    fn mixed_dimensions_name_both_episodes() {
        let mut odd = episode("odd", &[1.0]);
        odd.tuples[0].state.push(9.0);
        let err = Dataset::new()
            .load(&Fixed(vec![episode("first", &[1.0]), odd]))
            .unwrap()
            .to_columnar()
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("first") && msg.contains("odd"), "{msg}");
    }
}
