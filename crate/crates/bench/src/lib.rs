//! Deterministic synthetic inputs shared by the benchmarks.

use chrono::{DateTime, Utc};
use serde_json::json;
use tupli_core::{Episode, FilterNode, Metadata, RlTuple};

/// One episode of `len` tuples with `obs_dim` state and `action_dim` action
/// components. The last tuple is terminal.
pub fn episode(index: usize, len: usize, obs_dim: usize, action_dim: usize) -> Episode {
    let tuples = (0..len)
        .map(|t| {
            let x = (index * 31 + t) as f64;
            let mut tuple = RlTuple::new(
                (0..obs_dim).map(|d| (x + d as f64).sin()).collect(),
                (0..action_dim).map(|d| (x * 0.5 + d as f64).cos()).collect(),
                (x * 0.1).sin(),
            );
            tuple.terminated = t + 1 == len;
            tuple.info.insert("step".into(), json!(t));
            tuple
        })
        .collect();
    let mut metadata = Metadata::new();
    metadata.insert("month".into(), json!(format!("{:02}", index % 12 + 1)));
    metadata.insert("household".into(), json!(format!("h{}", index % 7)));
    metadata.insert("quality".into(), json!((index % 10) as f64 / 10.0));
    metadata.insert("_complete".into(), json!(true));
    Episode {
        id: format!("ep{index:06}"),
        benchmark_id: "bench".into(),
        tuples,
        metadata,
        created_by: "bench".into(),
        is_public: true,
        created_at: DateTime::<Utc>::UNIX_EPOCH,
    }
}

pub fn episodes(count: usize, len: usize, obs_dim: usize, action_dim: usize) -> Vec<Episode> {
    (0..count).map(|i| episode(i, len, obs_dim, action_dim)).collect()
}

/// `month in {06,07,08} AND quality >= 0.3 AND household != h0`.
pub fn summer_filter() -> FilterNode {
    let months = FilterNode::eq("month", "06") | FilterNode::eq("month", "07") | FilterNode::eq("month", "08");
    months & FilterNode::geq("quality", 0.3) & FilterNode::ne("household", "h0")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_episodes_are_valid() {
        for e in episodes(24, 50, 4, 2) {
            tupli_core::model::validate_episode(&e.tuples).unwrap();
        }
        let kept = episodes(24, 5, 4, 2).iter().filter(|e| summer_filter().matches(&e.metadata)).count();
        // months 06..08 appear twice in 24 episodes; household h0 and low quality drop some
        assert!(kept > 0 && kept < 6, "{kept}");
    }
}
