//! Layer-wise bounded FIFO buffers of pre-RoPE prefix keys/values.
//!
//! One [`LayerMemory`] per memory-enabled layer holds at most `capacity`
//! past timesteps. Each entry keeps the raw projections for the prefix
//! tokens of one step; suffix/action tokens are never stored. Retrieval
//! reads a [`MemorySnapshot`], the oldest-first concatenation of all
//! entries along the token axis.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::Tensor4;

/// Keys and values of the prefix tokens of one layer at timestep `timestep`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrefixKV {
    keys: Tensor4,
    values: Tensor4,
    timestep: u64,
}

impl PrefixKV {
    pub fn new(keys: Tensor4, values: Tensor4, timestep: u64) -> Result<Self> {
        keys.ensure_same_shape(&values, "prefix keys/values")?;
        Ok(Self {
            keys,
            values,
            timestep,
        })
    }

    pub fn keys(&self) -> &Tensor4 {
        &self.keys
    }

    pub fn values(&self) -> &Tensor4 {
        &self.values
    }

    pub fn timestep(&self) -> u64 {
        self.timestep
    }

    /// Prefix token count S.
    pub fn tokens(&self) -> usize {
        self.keys.tokens()
    }
}

#[derive(Clone, Debug)]
pub struct LayerMemory {
    layer_index: usize,
    capacity: usize,
    entries: VecDeque<PrefixKV>,
}

impl LayerMemory {
    pub fn new(layer_index: usize, capacity: usize) -> Result<Self> {
        if capacity < 1 {
            return Err(Error::Config(format!(
                "memory capacity must be >= 1 (layer {layer_index})"
            )));
        }
        Ok(Self {
            layer_index,
            capacity,
            entries: VecDeque::with_capacity(capacity + 1),
        })
    }

    pub fn layer_index(&self) -> usize {
        self.layer_index
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &PrefixKV> {
        self.entries.iter()
    }

    pub fn timesteps(&self) -> Vec<u64> {
        self.entries.iter().map(PrefixKV::timestep).collect()
    }

    pub fn latest_timestep(&self) -> Option<u64> {
        self.entries.back().map(PrefixKV::timestep)
    }

    /// Appends `kv`, evicting the oldest entry when the buffer overflows.
    pub fn write(&mut self, kv: PrefixKV) -> Result<()> {
        if let Some(last) = self.latest_timestep() {
            if kv.timestep <= last {
                return Err(Error::Ordering(format!(
                    "layer {}: write at timestep {} after {last}",
                    self.layer_index, kv.timestep
                )));
            }
        }
        if let Some(front) = self.entries.front() {
            front
                .keys
                .ensure_same_shape(&kv.keys, "memory entry shape")?;
        }
        self.entries.push_back(kv);
        if self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
        Ok(())
    }

    pub fn reset(&mut self) {
        self.entries.clear();
    }

    /// Oldest-first concatenation of every stored entry; `None` when empty.
    pub fn snapshot(&self) -> Option<MemorySnapshot> {
        if self.entries.is_empty() {
            return None;
        }
        let keys: Vec<&Tensor4> = self.entries.iter().map(|e| &e.keys).collect();
        let values: Vec<&Tensor4> = self.entries.iter().map(|e| &e.values).collect();
        let k_hist = Tensor4::concat_tokens(&keys).expect("entries share shape");
        let v_hist = Tensor4::concat_tokens(&values).expect("entries share shape");
        let token_timesteps = self
            .entries
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.timestep, e.tokens()))
            .collect();
        Some(MemorySnapshot {
            k_hist,
            v_hist,
            token_timesteps,
        })
    }

    /// Number of stored scalars across keys and values.
    pub fn scalar_count(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.keys.len() + e.values.len())
            .sum()
    }

    pub fn metadata(&self) -> MemoryMetadata {
        MemoryMetadata {
            layer: self.layer_index,
            capacity: self.capacity,
            timesteps: self.timesteps(),
            entry_shape: self.entries.front().map(|e| e.keys.dims()),
            scalar_count: self.scalar_count(),
        }
    }
}

/// Debug view of a buffer, serialised by the harness.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemoryMetadata {
    pub layer: usize,
    pub capacity: usize,
    pub timesteps: Vec<u64>,
    pub entry_shape: Option<[usize; 4]>,
    pub scalar_count: usize,
}

/// History keys/values of one layer concatenated along the token axis.
#[derive(Clone, Debug, PartialEq)]
pub struct MemorySnapshot {
    k_hist: Tensor4,
    v_hist: Tensor4,
    token_timesteps: Vec<u64>,
}

impl MemorySnapshot {
    /// Builds a snapshot directly; `token_timesteps` must be nondecreasing
    /// with one entry per history token.
    pub fn new(k_hist: Tensor4, v_hist: Tensor4, token_timesteps: Vec<u64>) -> Result<Self> {
        k_hist.ensure_same_shape(&v_hist, "snapshot keys/values")?;
        if token_timesteps.len() != k_hist.tokens() {
            return Err(Error::Dimension(format!(
                "{} timesteps for {} history tokens",
                token_timesteps.len(),
                k_hist.tokens()
            )));
        }
        if token_timesteps.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Ordering(
                "snapshot timesteps must be nondecreasing".into(),
            ));
        }
        Ok(Self {
            k_hist,
            v_hist,
            token_timesteps,
        })
    }

    pub fn k_hist(&self) -> &Tensor4 {
        &self.k_hist
    }

    pub fn v_hist(&self) -> &Tensor4 {
        &self.v_hist
    }

    pub fn token_timesteps(&self) -> &[u64] {
        &self.token_timesteps
    }

    pub fn history_len(&self) -> usize {
        self.token_timesteps.len()
    }

    pub fn latest_timestep(&self) -> u64 {
        *self.token_timesteps.last().expect("snapshot is nonempty")
    }
}
