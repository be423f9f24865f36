//! Columnar batch and its flat binary export.
//!
//! File layout, all integers and floats little-endian:
//!
//! | offset | size    | content                                   |
//! |--------|---------|-------------------------------------------|
//! | 0      | 8       | magic `TUPLICOL`                          |
//! | 8      | 4       | format version, u32 (= 1)                 |
//! | 12     | 4       | reserved, u32 (= 0)                       |
//! | 16     | 8       | N, row count, u64                         |
//! | 24     | 8       | D, observation width, u64                 |
//! | 32     | 8       | A, action width, u64                      |
//! | 40     | 8       | E, episode count, u64                     |
//! | 48     | 8·N·D   | observations, f64, column-major           |
//! |        | 8·N·A   | actions, f64, column-major                |
//! |        | 8·N     | rewards, f64                              |
//! |        | 8·N     | terminateds, f64 (0.0 or 1.0)             |
//! |        | 8·N     | timeouts, f64 (0.0 or 1.0)                |
//! |        | 8·E     | episode start rows, u64                   |
//!
//! Column-major means value `(row i, column j)` of an `N × D` matrix is the
//! `j * N + i`-th f64 of its section.

use std::io::{self, Read, Write};

use thiserror::Error;

use super::DatasetError;
use crate::model::Episode;

pub const COLUMNAR_MAGIC: [u8; 8] = *b"TUPLICOL";
pub const COLUMNAR_VERSION: u32 = 1;
const HEADER_LEN: usize = 48;

#[derive(Debug, Error)]
pub enum ColumnarFormatError {
    #[error("not a columnar export (bad magic)")]
    BadMagic,
    #[error("unsupported columnar format version {0}")]
    UnsupportedVersion(u32),
    #[error("file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("{0} trailing bytes after the last section")]
    TrailingBytes(u64),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// All retained tuples as contiguous columns.
///
/// Matrices are held row-major in memory (`observations[i * obs_dim + j]`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColumnarBatch {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub observations: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminateds: Vec<bool>,
    pub timeouts: Vec<bool>,
    /// First row of every episode.
    pub episode_boundaries: Vec<usize>,
}

impl ColumnarBatch {
    pub fn from_episodes(episodes: &[Episode]) -> Result<Self, DatasetError> {
        let mut batch = ColumnarBatch::default();
        let Some(reference) = episodes.iter().find(|e| !e.tuples.is_empty()) else {
            return Ok(batch);
        };
        batch.obs_dim = reference.tuples[0].state.len();
        batch.action_dim = reference.tuples[0].action.len();

        let rows: usize = episodes.iter().map(|e| e.tuples.len()).sum();
        batch.observations.reserve(rows * batch.obs_dim);
        batch.actions.reserve(rows * batch.action_dim);

        for episode in episodes {
            batch.episode_boundaries.push(batch.rewards.len());
            for tuple in &episode.tuples {
                let mismatch = |field, expected, found| DatasetError::DimensionMismatch {
                    field,
                    reference: reference.id.clone(),
                    episode: episode.id.clone(),
                    expected,
                    found,
                };
                if tuple.state.len() != batch.obs_dim {
                    return Err(mismatch("state", batch.obs_dim, tuple.state.len()));
                }
                if tuple.action.len() != batch.action_dim {
                    return Err(mismatch("action", batch.action_dim, tuple.action.len()));
                }
                batch.observations.extend_from_slice(&tuple.state);
                batch.actions.extend_from_slice(&tuple.action);
                batch.rewards.push(tuple.reward);
                batch.terminateds.push(tuple.terminated);
                batch.timeouts.push(tuple.timeout);
            }
        }
        Ok(batch)
    }

    /// Row count N.
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn observation(&self, row: usize) -> &[f64] {
        &self.observations[row * self.obs_dim..(row + 1) * self.obs_dim]
    }

    pub fn action(&self, row: usize) -> &[f64] {
        &self.actions[row * self.action_dim..(row + 1) * self.action_dim]
    }

    pub fn episode_lengths(&self) -> Vec<usize> {
        let ends = self.episode_boundaries.iter().skip(1).copied().chain([self.len()]);
        self.episode_boundaries
            .iter()
            .zip(ends)
            .map(|(start, end)| end - start)
            .collect()
    }

    pub fn encoded_len(&self) -> usize {
        let n = self.len();
        HEADER_LEN
            + 8 * (n * self.obs_dim + n * self.action_dim + 3 * n + self.episode_boundaries.len())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.len();
        let mut buf = Vec::with_capacity(self.encoded_len());
        buf.extend_from_slice(&COLUMNAR_MAGIC);
        buf.extend_from_slice(&COLUMNAR_VERSION.to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        for count in [n, self.obs_dim, self.action_dim, self.episode_boundaries.len()] {
            buf.extend_from_slice(&(count as u64).to_le_bytes());
        }
        for (data, width) in [(&self.observations, self.obs_dim), (&self.actions, self.action_dim)] {
            for col in 0..width {
                for row in 0..n {
                    buf.extend_from_slice(&data[row * width + col].to_le_bytes());
                }
            }
        }
        for r in &self.rewards {
            buf.extend_from_slice(&r.to_le_bytes());
        }
        for flags in [&self.terminateds, &self.timeouts] {
            for &f in flags {
                buf.extend_from_slice(&(if f { 1.0f64 } else { 0.0 }).to_le_bytes());
            }
        }
        for &b in &self.episode_boundaries {
            buf.extend_from_slice(&(b as u64).to_le_bytes());
        }
        out.write_all(&buf)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, ColumnarFormatError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ColumnarFormatError> {
        let truncated = |expected: u64| ColumnarFormatError::Truncated {
            expected,
            found: bytes.len() as u64,
        };
        if bytes.len() < 8 {
            return Err(truncated(HEADER_LEN as u64));
        }
        if bytes[..8] != COLUMNAR_MAGIC {
            return Err(ColumnarFormatError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(truncated(HEADER_LEN as u64));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != COLUMNAR_VERSION {
            return Err(ColumnarFormatError::UnsupportedVersion(version));
        }
        let (n, d, a, e) = (u64_at(16), u64_at(24), u64_at(32), u64_at(40));
        let words = n
            .checked_mul(d)
            .and_then(|nd| n.checked_mul(a).and_then(|na| nd.checked_add(na)))
            .and_then(|w| n.checked_mul(3).and_then(|n3| w.checked_add(n3)))
            .and_then(|w| w.checked_add(e))
            .and_then(|w| w.checked_mul(8))
            .and_then(|w| w.checked_add(HEADER_LEN as u64))
            .ok_or_else(|| ColumnarFormatError::InvalidHeader("section sizes overflow".into()))?;
        match (bytes.len() as u64).cmp(&words) {
            std::cmp::Ordering::Less => return Err(truncated(words)),
            std::cmp::Ordering::Greater => {
                return Err(ColumnarFormatError::TrailingBytes(bytes.len() as u64 - words))
            }
            std::cmp::Ordering::Equal => {}
        }
        let (n, d, a, e) = (n as usize, d as usize, a as usize, e as usize);

        let mut words = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| <[u8; 8]>::try_from(c).unwrap());
        let mut column_major = |width: usize| {
            let mut m = vec![0.0; n * width];
            for col in 0..width {
                for row in 0..n {
                    m[row * width + col] = f64::from_le_bytes(words.next().unwrap());
                }
            }
            m
        };
        let observations = column_major(d);
        let actions = column_major(a);
        let rewards: Vec<f64> = (&mut words).take(n).map(f64::from_le_bytes).collect();
        let mut flags = |name: &str| -> Result<Vec<bool>, ColumnarFormatError> {
            (&mut words)
                .take(n)
                .map(f64::from_le_bytes)
                .map(|v| match v {
                    0.0 => Ok(false),
                    1.0 => Ok(true),
                    other => Err(ColumnarFormatError::InvalidHeader(format!(
                        "{name} flag {other} is neither 0 nor 1"
                    ))),
                })
                .collect()
        };
        let terminateds = flags("terminated")?;
        let timeouts = flags("timeout")?;
        let episode_boundaries: Vec<usize> =
            words.take(e).map(|w| u64::from_le_bytes(w) as usize).collect();
        if episode_boundaries.windows(2).any(|w| w[0] >= w[1])
            || episode_boundaries.first().is_some_and(|&b| b != 0)
            || episode_boundaries.last().is_some_and(|&b| b >= n)
        {
            return Err(ColumnarFormatError::InvalidHeader(
                "episode boundaries must start at 0 and strictly increase below N".into(),
            ));
        }
        Ok(Self {
            obs_dim: d,
            action_dim: a,
            observations,
            actions,
            rewards,
            terminateds,
            timeouts,
            episode_boundaries,
        })
    }
}
