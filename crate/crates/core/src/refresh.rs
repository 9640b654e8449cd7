//! Background priority refresh.
//!
//! A refresher holds a frozen copy of the learner's networks and walks the
//! buffer slot by slot, recomputing each experience's TD error and rewriting
//! its priority. [`Refresher`] does this inline; [`AsyncRefresher`] runs the
//! same sweep on a worker thread that is signalled once per environment step.

use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::JoinHandle;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::curriculum::CurriculumSnapshot;
use crate::error::{check_len, AcerError, Result};
use crate::nn::Mlp;
use crate::replay::{per_priority, sweep_indices, Experience, ReplayBuffer};
use crate::rng::{mix, Rng};
use crate::td3::{critic_input, td_target, TdErrorCritic, TdSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefreshConfig {
    /// Slots re-prioritized per environment step (`A`).
    pub per_tick: usize,
    pub enabled: bool,
}

impl Default for RefreshConfig {
    fn default() -> Self {
        RefreshConfig {
            per_tick: 256,
            enabled: true,
        }
    }
}

impl RefreshConfig {
    pub fn is_active(&self) -> bool {
        self.enabled && self.per_tick > 0
    }
}

/// Parameter copies taken from one learner step.
#[derive(Debug, Clone)]
pub struct NetworkSnapshot {
    pub actor_target: Mlp,
    pub critic1_target: Mlp,
    pub critic2_target: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    /// Learner update count at the time of the copy.
    pub version: u64,
}

const NOISE_SALT: u64 = 0x5eed_0f_5a11_c0de;

/// Smoothing noise for experience `id`; the same id always gets the same draw.
pub fn refresh_noise(id: u64, td: &TdSettings) -> Vec<f64> {
    let mut rng = Rng::seed_from_u64(mix(id ^ NOISE_SALT));
    td.draw_smoothing_noise(&mut rng)
}

/// `y - Q_1(s, a)` (or the twin minimum) under the snapshot's networks, with
/// the per-experience smoothing noise of [`refresh_noise`].
pub fn compute_td_error(snapshot: &NetworkSnapshot, exp: &Experience, td: &TdSettings) -> Result<f64> {
    let noise = refresh_noise(exp.id, td);
    compute_td_error_with_noise(snapshot, exp, td, &noise)
}

pub fn compute_td_error_with_noise(
    snapshot: &NetworkSnapshot,
    exp: &Experience,
    td: &TdSettings,
    noise: &[f64],
) -> Result<f64> {
    let y = td_target(
        &snapshot.actor_target,
        &snapshot.critic1_target,
        &snapshot.critic2_target,
        exp,
        noise,
        td,
    )?;
    let x = critic_input(&exp.state, &exp.action);
    let q1 = snapshot.critic1.forward(&x)?[0];
    let q = match td.critic {
        TdErrorCritic::Q1 => q1,
        TdErrorCritic::MinTwin => q1.min(snapshot.critic2.forward(&x)?[0]),
    };
    Ok(y - q)
}

/// How a TD error becomes a priority.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorityRule {
    Curriculum(CurriculumSnapshot),
    PerClipped,
}

impl PriorityRule {
    pub fn priority(&self, delta: f64) -> f64 {
        match self {
            PriorityRule::Curriculum(c) => c.priority(delta),
            PriorityRule::PerClipped => per_priority(delta),
        }
    }
}

/// Priorities every occupied slot would get from a full recomputation.
pub fn oracle_priorities(
    buffer: &ReplayBuffer,
    snapshot: &NetworkSnapshot,
    td: &TdSettings,
    rule: &PriorityRule,
) -> Result<Vec<f64>> {
    (0..buffer.len())
        .map(|s| {
            let e = buffer.experience(s).expect("slot below len is occupied");
            Ok(rule.priority(compute_td_error(snapshot, e, td)?))
        })
        .collect()
}

/// Inline sweeper. Keeps the cursor between ticks.
#[derive(Debug, Clone)]
pub struct Refresher {
    cfg: RefreshConfig,
    td: TdSettings,
    cursor: usize,
}

impl Refresher {
    pub fn new(cfg: RefreshConfig, td: TdSettings) -> Self {
        Refresher { cfg, td, cursor: 0 }
    }

    pub fn config(&self) -> &RefreshConfig {
        &self.cfg
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    fn next_slots(&mut self, occupancy: usize) -> Vec<usize> {
        if !self.cfg.is_active() {
            return Vec::new();
        }
        let count = self.cfg.per_tick.min(occupancy);
        let (slots, cursor) = sweep_indices(occupancy, self.cursor, count);
        self.cursor = cursor;
        slots
    }

    /// Re-prioritizes the next `A` slots in sweep order. Returns the number
    /// of priorities written.
    pub fn tick(
        &mut self,
        buffer: &mut ReplayBuffer,
        snapshot: &NetworkSnapshot,
        rule: &PriorityRule,
    ) -> Result<usize> {
        let slots = self.next_slots(buffer.len());
        for &slot in &slots {
            let e = buffer.experience(slot).expect("swept slot is occupied");
            let p = rule.priority(compute_td_error(snapshot, e, &self.td)?);
            buffer.update_priority(slot, p)?;
        }
        Ok(slots.len())
    }

    /// Same as [`tick`](Self::tick) against a shared buffer: copy the
    /// experiences out, compute without the lock, then write back only the
    /// slots that still hold the same experience.
    pub fn tick_shared(
        &mut self,
        buffer: &Mutex<ReplayBuffer>,
        snapshot: &NetworkSnapshot,
        rule: &PriorityRule,
    ) -> Result<usize> {
        let work: Vec<(usize, Experience)> = {
            let guard = lock(buffer);
            let slots = self.next_slots(guard.len());
            slots
                .into_iter()
                .map(|s| (s, guard.experience(s).expect("swept slot is occupied").clone()))
                .collect()
        };
        let mut fresh = Vec::with_capacity(work.len());
        for (slot, e) in &work {
            fresh.push((*slot, e.id, rule.priority(compute_td_error(snapshot, e, &self.td)?)));
        }
        let mut written = 0;
        for (slot, id, p) in fresh {
            let mut guard = lock(buffer);
            written += guard.update_priority_if_current(slot, id, p)? as usize;
        }
        Ok(written)
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

/// Counters reported when an [`AsyncRefresher`] stops.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RefreshStats {
    pub signals: u64,
    pub ticks: u64,
    pub updates: u64,
    /// Largest number of writes in one tick.
    pub max_per_tick: usize,
    /// Ticks that saw an older snapshot version than an earlier tick.
    pub version_regressions: u64,
}

#[derive(Default)]
struct Control {
    snapshot: Option<Arc<NetworkSnapshot>>,
    rule: Option<PriorityRule>,
    pending: bool,
    signals: u64,
    stop: bool,
}

type Shared = (Mutex<Control>, Condvar);

/// Refresher on its own thread. Signals that arrive while a tick is running
/// collapse into one pending tick, so the worker never does more than `A`
/// updates per signal and never builds a backlog.
pub struct AsyncRefresher {
    shared: Arc<Shared>,
    handle: Option<JoinHandle<Result<RefreshStats>>>,
}

impl AsyncRefresher {
    pub fn spawn(cfg: RefreshConfig, td: TdSettings, buffer: Arc<Mutex<ReplayBuffer>>) -> Self {
        let shared: Arc<Shared> = Arc::new((Mutex::new(Control::default()), Condvar::new()));
        let worker_shared = Arc::clone(&shared);
        let handle = std::thread::spawn(move || {
            let mut refresher = Refresher::new(cfg, td);
            let mut stats = RefreshStats::default();
            let mut last_version = 0;
            loop {
                let (snapshot, rule) = {
                    let (m, cv) = &*worker_shared;
                    let mut ctl = lock(m);
                    while !ctl.pending && !ctl.stop {
                        ctl = cv.wait(ctl).unwrap_or_else(|p| p.into_inner());
                    }
                    if ctl.stop {
                        stats.signals = ctl.signals;
                        return Ok(stats);
                    }
                    ctl.pending = false;
                    (ctl.snapshot.clone(), ctl.rule)
                };
                let (Some(snapshot), Some(rule)) = (snapshot, rule) else {
                    continue;
                };
                if snapshot.version < last_version {
                    stats.version_regressions += 1;
                }
                last_version = snapshot.version;
                let n = refresher.tick_shared(&buffer, &snapshot, &rule)?;
                stats.ticks += 1;
                stats.updates += n as u64;
                stats.max_per_tick = stats.max_per_tick.max(n);
            }
        });
        AsyncRefresher {
            shared,
            handle: Some(handle),
        }
    }

    /// Replaces the worker's network copy. The worker picks it up at its
    /// next tick; a tick in progress keeps the copy it started with.
    pub fn publish(&self, snapshot: Arc<NetworkSnapshot>) {
        lock(&self.shared.0).snapshot = Some(snapshot);
    }

    pub fn set_rule(&self, rule: PriorityRule) {
        lock(&self.shared.0).rule = Some(rule);
    }

    pub fn signal(&self) {
        let (m, cv) = &*self.shared;
        let mut ctl = lock(m);
        ctl.pending = true;
        ctl.signals += 1;
        cv.notify_one();
    }

    /// Stops the worker after its current tick and returns its counters.
    pub fn stop(mut self) -> Result<RefreshStats> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> Result<RefreshStats> {
        {
            let (m, cv) = &*self.shared;
            lock(m).stop = true;
            cv.notify_one();
        }
        match self.handle.take() {
            Some(h) => h
                .join()
                .map_err(|_| AcerError::Usage("refresher thread panicked".into()))?,
            None => Ok(RefreshStats::default()),
        }
    }
}

impl Drop for AsyncRefresher {
    fn drop(&mut self) {
        if self.handle.is_some() {
            let _ = self.shutdown();
        }
    }
}

/// Gap between stored and recomputed priorities.
#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    /// `P_oracle(i) - P_stored(i)` per slot.
    pub probability_gaps: Vec<f64>,
    pub mean_abs_probability_gap: f64,
    /// Mean of `|p_stored - p_oracle|`.
    pub mean_abs_priority_gap: f64,
}

/// Compares the sampling distribution implied by the stored priorities with
/// the one implied by the oracle priorities.
pub fn probability_gap(stored: &[f64], oracle: &[f64], alpha: f64) -> Result<GapReport> {
    check_len("oracle priorities", stored.len(), oracle.len())?;
    if stored.is_empty() {
        return Ok(GapReport {
            probability_gaps: Vec::new(),
            mean_abs_probability_gap: 0.0,
            mean_abs_priority_gap: 0.0,
        });
    }
    if stored.iter().chain(oracle).any(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(AcerError::Domain("priorities must be positive and finite".into()));
    }
    let s_total: f64 = stored.iter().map(|p| p.powf(alpha)).sum();
    let o_total: f64 = oracle.iter().map(|p| p.powf(alpha)).sum();
    let gaps: Vec<f64> = stored
        .iter()
        .zip(oracle)
        .map(|(s, o)| o.powf(alpha) / o_total - s.powf(alpha) / s_total)
        .collect();
    let n = stored.len() as f64;
    Ok(GapReport {
        mean_abs_probability_gap: gaps.iter().map(|g| g.abs()).sum::<f64>() / n,
        mean_abs_priority_gap: stored.iter().zip(oracle).map(|(s, o)| (s - o).abs()).sum::<f64>() / n,
        probability_gaps: gaps,
    })
}

/// Change in slot `i`'s sampling probability when only its priority moves
/// from `priorities[i]` to `new_priority`, in the factored form
/// `(p_new^a - p^a) * rest / (total_new * total_old)`.
pub fn single_update_gap(priorities: &[f64], i: usize, new_priority: f64, alpha: f64) -> f64 {
    let old = priorities[i].powf(alpha);
    let new = new_priority.powf(alpha);
    let rest: f64 = priorities
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, p)| p.powf(alpha))
        .sum();
    (new - old) * rest / ((rest + new) * (rest + old))
}
