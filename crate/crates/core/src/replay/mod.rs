//! The experience store.
//!
//! One [`ReplayBuffer`] type covers the three replay modes compared in the
//! experiments:
//!
//! | mode          | sampling                | eviction when full       | priorities after learning |
//! |---------------|-------------------------|--------------------------|---------------------------|
//! | `Uniform`     | uniform, no replacement | FIFO                     | untouched                 |
//! | `PerClipped`  | `p^alpha` (sum-tree)    | FIFO                     | `min(|delta|, 1) + 1e-6`  |
//! | `Acer`        | temporary pool + `p^alpha` | `1/p^alpha` (sum-tree) | curriculum priority     |
//!
//! In every mode a new experience is stored at the current maximum priority
//! (1.0 for an empty buffer).

mod sum_tree;

use std::collections::VecDeque;
use std::io::Write;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{AcerError, Result};
use crate::rng::Rng;

pub use sum_tree::{DoubleSumTree, Factor, SearchHit};

/// Additive constant of the clipped-PER priority.
pub const PER_EPSILON: f64 = 1e-6;

/// Clipped PER priority: `min(|delta|, 1) + 1e-6`.
pub fn per_priority(td_error: f64) -> f64 {
    td_error.abs().min(1.0) + PER_EPSILON
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayMode {
    Uniform,
    #[serde(alias = "per")]
    PerClipped,
    Acer,
}

impl std::fmt::Display for ReplayMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReplayMode::Uniform => "uniform",
            ReplayMode::PerClipped => "per",
            ReplayMode::Acer => "acer",
        })
    }
}

impl std::str::FromStr for ReplayMode {
    type Err = AcerError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(ReplayMode::Uniform),
            "per" | "per_clipped" => Ok(ReplayMode::PerClipped),
            "acer" => Ok(ReplayMode::Acer),
            other => Err(AcerError::Config(format!("unknown replay mode '{other}'"))),
        }
    }
}

/// How a full ACER buffer picks the slot to overwrite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvictionPolicy {
    /// Draw a slot with probability proportional to `1 / p^alpha`.
    #[default]
    Stochastic,
    /// Always overwrite the lowest-priority slot.
    LowestPriority,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// A stored transition plus its serial number.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub id: u64,
}

impl Experience {
    pub fn from_transition(t: Transition, id: u64) -> Self {
        Experience {
            state: t.state,
            action: t.action,
            reward: t.reward,
            next_state: t.next_state,
            done: t.done,
            id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Temporary,
    Tree,
}

#[derive(Debug, Clone)]
pub struct SampledBatch {
    pub experiences: Vec<Experience>,
    pub slots: Vec<usize>,
    pub weights: Vec<f64>,
    pub origins: Vec<Origin>,
}

impl SampledBatch {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreOutcome {
    pub slot: usize,
    pub id: u64,
    /// Serial number of the experience that was overwritten, if any.
    pub evicted: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferConfig {
    pub capacity: usize,
    pub mode: ReplayMode,
    pub alpha: f64,
    pub temp_pool: usize,
    #[serde(default)]
    pub eviction: EvictionPolicy,
}

impl BufferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(AcerError::Config("buffer capacity must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(AcerError::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.temp_pool > self.capacity {
            return Err(AcerError::Config(
                "temporary pool larger than the buffer".into(),
            ));
        }
        Ok(())
    }
}

/// FIFO of the newest experiences' `(id, slot)` pairs.
#[derive(Debug, Clone, Default)]
pub struct TemporaryPool {
    capacity: usize,
    entries: VecDeque<(u64, usize)>,
}

impl TemporaryPool {
    pub fn new(capacity: usize) -> Self {
        TemporaryPool {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
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

    fn push(&mut self, id: u64, slot: usize) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((id, slot));
    }

    fn remove_id(&mut self, id: u64) {
        self.entries.retain(|&(i, _)| i != id);
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|&(id, _)| id)
    }
}

const SEGMENT_RETRIES: usize = 16;

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    config: BufferConfig,
    slots: Vec<Experience>,
    tree: DoubleSumTree,
    temp: TemporaryPool,
    next_id: u64,
    fifo_cursor: usize,
    rng: Rng,
}

impl ReplayBuffer {
    pub fn new(config: BufferConfig, rng: Rng) -> Result<Self> {
        config.validate()?;
        let tree = DoubleSumTree::new(config.capacity, config.alpha)?;
        let temp = TemporaryPool::new(if config.mode == ReplayMode::Acer {
            config.temp_pool
        } else {
            0
        });
        Ok(ReplayBuffer {
            slots: Vec::with_capacity(config.capacity.min(1 << 20)),
            tree,
            temp,
            next_id: 0,
            fifo_cursor: 0,
            rng,
            config,
        })
    }

    pub fn config(&self) -> &BufferConfig {
        &self.config
    }

    pub fn mode(&self) -> ReplayMode {
        self.config.mode
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.slots.len() == self.config.capacity
    }

    pub fn tree(&self) -> &DoubleSumTree {
        &self.tree
    }

    pub fn temporary_pool(&self) -> &TemporaryPool {
        &self.temp
    }

    pub fn experience(&self, slot: usize) -> Option<&Experience> {
        self.slots.get(slot)
    }

    pub fn priority(&self, slot: usize) -> Option<f64> {
        self.tree.priority(slot)
    }

    /// Stored priorities of slots `0..len`.
    pub fn priorities(&self) -> Vec<f64> {
        (0..self.len())
            .map(|s| self.tree.priority(s).expect("occupied slot has a priority"))
            .collect()
    }

    /// Stores a transition at the current maximum priority.
    pub fn store(&mut self, t: Transition) -> Result<StoreOutcome> {
        if let Some(first) = self.slots.first() {
            if first.state.len() != t.state.len() {
                return Err(AcerError::shape("state", first.state.len(), t.state.len()));
            }
        }
        if t.state.len() != t.next_state.len() {
            return Err(AcerError::shape("next_state", t.state.len(), t.next_state.len()));
        }
        let priority = self.tree.max_priority().unwrap_or(1.0);
        let id = self.next_id;
        self.next_id += 1;
        let exp = Experience::from_transition(t, id);

        let (slot, evicted) = if !self.is_full() {
            self.slots.push(exp);
            (self.slots.len() - 1, None)
        } else {
            let slot = self.eviction_slot()?;
            let old = std::mem::replace(&mut self.slots[slot], exp);
            self.temp.remove_id(old.id);
            (slot, Some(old.id))
        };
        self.tree.set(slot, priority)?;
        self.temp.push(id, slot);
        Ok(StoreOutcome { slot, id, evicted })
    }

    fn eviction_slot(&mut self) -> Result<usize> {
        match self.config.mode {
            ReplayMode::Uniform | ReplayMode::PerClipped => {
                let slot = self.fifo_cursor;
                self.fifo_cursor = (self.fifo_cursor + 1) % self.config.capacity;
                Ok(slot)
            }
            ReplayMode::Acer => match self.config.eviction {
                EvictionPolicy::Stochastic => {
                    let total = self.tree.total_replacing();
                    let target = self.rng.random::<f64>() * total;
                    self.tree.prefix_search(target, Factor::Replacing)
                }
                EvictionPolicy::LowestPriority => self
                    .tree
                    .argmin_priority()
                    .ok_or_else(|| AcerError::Domain("eviction from empty buffer".into())),
            },
        }
    }

    /// Sets a slot's priority.
    pub fn update_priority(&mut self, slot: usize, priority: f64) -> Result<()> {
        if slot >= self.len() {
            return Err(AcerError::Domain(format!(
                "slot {slot} is not occupied (len {})",
                self.len()
            )));
        }
        self.tree.set(slot, priority)
    }

    /// Like [`update_priority`](Self::update_priority) but only if `slot`
    /// still holds experience `id`. Returns whether the update happened.
    pub fn update_priority_if_current(&mut self, slot: usize, id: u64, priority: f64) -> Result<bool> {
        match self.slots.get(slot) {
            Some(e) if e.id == id => {
                self.tree.set(slot, priority)?;
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    /// Sampling probability `p_i^alpha / sum_j p_j^alpha` of an occupied slot.
    pub fn sampling_probability(&self, slot: usize) -> f64 {
        self.tree.sampling_factor(slot) / self.tree.total_sampling()
    }

    /// Draws a minibatch of `n` distinct slots.
    pub fn sample(&mut self, n: usize, beta: f64) -> Result<SampledBatch> {
        if n == 0 {
            return Err(AcerError::Domain("cannot sample an empty batch".into()));
        }
        if self.len() < n {
            return Err(AcerError::InsufficientExperiences {
                have: self.len(),
                need: n,
            });
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(AcerError::Domain(format!("beta {beta} outside [0, 1]")));
        }
        match self.config.mode {
            ReplayMode::Uniform => Ok(self.sample_uniform(n)),
            ReplayMode::PerClipped | ReplayMode::Acer => self.sample_prioritized(n, beta),
        }
    }

    fn sample_uniform(&mut self, n: usize) -> SampledBatch {
        let len = self.len();
        let slots: Vec<usize> = index::sample(&mut self.rng, len, n).into_vec();
        SampledBatch {
            experiences: slots.iter().map(|&s| self.slots[s].clone()).collect(),
            weights: vec![1.0; n],
            origins: vec![Origin::Tree; n],
            slots,
        }
    }

    fn sample_prioritized(&mut self, n: usize, beta: f64) -> Result<SampledBatch> {
        let mut chosen = vec![false; self.len()];
        let mut slots = Vec::with_capacity(n);
        let mut origins = Vec::with_capacity(n);

        for (id, slot) in self.temp.entries.iter().rev().copied() {
            if slots.len() == n {
                break;
            }
            debug_assert_eq!(self.slots[slot].id, id, "temporary pool points at a live slot");
            if !chosen[slot] {
                chosen[slot] = true;
                slots.push(slot);
                origins.push(Origin::Temporary);
            }
        }

        let n_tree = n - slots.len();
        if n_tree > 0 {
            let total = self.tree.total_sampling();
            let segment = total / n_tree as f64;
            for k in 0..n_tree {
                let lo = segment * k as f64;
                let mut found = None;
                for _ in 0..SEGMENT_RETRIES {
                    let target = (lo + self.rng.random::<f64>() * segment).min(total * (1.0 - f64::EPSILON));
                    let slot = self.tree.prefix_search(target, Factor::Sampling)?;
                    if !chosen[slot] {
                        found = Some(slot);
                        break;
                    }
                }
                let slot = match found {
                    Some(s) => s,
                    None => {
                        let start = self
                            .tree
                            .prefix_search((lo + 0.5 * segment).min(total * (1.0 - f64::EPSILON)), Factor::Sampling)?;
                        (0..self.len())
                            .map(|k| (start + k) % self.len())
                            .find(|&s| !chosen[s])
                            .expect("buffer holds at least n experiences")
                    }
                };
                chosen[slot] = true;
                slots.push(slot);
                origins.push(Origin::Tree);
            }
        }

        let total = self.tree.total_sampling();
        let len = self.len() as f64;
        let raw: Vec<f64> = slots
            .iter()
            .map(|&s| (len * self.tree.sampling_factor(s) / total).powf(-beta))
            .collect();
        let max = raw.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
        let weights = raw.into_iter().map(|w| w / max).collect();

        Ok(SampledBatch {
            experiences: slots.iter().map(|&s| self.slots[s].clone()).collect(),
            slots,
            weights,
            origins,
        })
    }

    /// Writes `slot,id,priority` rows for every occupied slot.
    pub fn export_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "slot,id,priority")?;
        for (slot, e) in self.slots.iter().enumerate() {
            let p = self.tree.priority(slot).unwrap_or(f64::NAN);
            writeln!(w, "{slot},{},{p}", e.id)?;
        }
        Ok(())
    }
}

/// The next `count` occupied slots in circular order from `cursor`, plus the
/// advanced cursor. Slots `0..occupancy` are always the occupied ones.
pub fn sweep_indices(occupancy: usize, cursor: usize, count: usize) -> (Vec<usize>, usize) {
    if occupancy == 0 {
        return (Vec::new(), 0);
    }
    let start = cursor % occupancy;
    let slots = (0..count).map(|k| (start + k) % occupancy).collect();
    (slots, (start + count) % occupancy)
}
