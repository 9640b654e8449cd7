//! Curriculum priority function and its episode schedule.
//!
//! The priority of an experience peaks at 1 when `|delta|` equals the
//! curriculum factor `c` and decays exponentially on either side, with slope
//! `k1` below `c` and `k2` above it. Nothing is clipped: distinct TD errors
//! keep distinct priorities.

use serde::{Deserialize, Serialize};

use crate::error::{AcerError, Result};

/// `exp(k1 (|delta| - c))` for `|delta| <= c`, else `exp(k2 (c - |delta|))`.
pub fn priority(delta: f64, c: f64, k1: f64, k2: f64) -> f64 {
    let d = delta.abs();
    let p = if d <= c {
        (k1 * (d - c)).exp()
    } else {
        (k2 * (c - d)).exp()
    };
    // Far tails underflow to zero; priorities must stay strictly positive.
    p.max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumConfig {
    pub c_init: f64,
    pub c_incr: f64,
    /// Episodes between increments of `c`.
    pub update_period: u64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            c_init: 10.0,
            c_incr: 1.0,
            update_period: 100,
            k1: 0.01,
            k2: 0.005,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_init > 0.0) {
            return Err(AcerError::Config("c_init must be > 0".into()));
        }
        if self.update_period < 1 {
            return Err(AcerError::Config("curriculum update period must be >= 1".into()));
        }
        if !(self.k1 > self.k2 && self.k2 > 0.0) {
            return Err(AcerError::Config(format!(
                "curriculum slopes need k1 > k2 > 0 (k1 = {}, k2 = {})",
                self.k1, self.k2
            )));
        }
        if self.c_incr < 0.0 {
            return Err(AcerError::Config("c_incr must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurriculumState {
    pub c: f64,
    pub episodes_seen: u64,
}

impl CurriculumState {
    pub fn new(cfg: &CurriculumConfig) -> Self {
        CurriculumState {
            c: cfg.c_init,
            episodes_seen: 0,
        }
    }

    /// Counts one finished episode, bumping `c` whenever the count reaches a
    /// multiple of the update period.
    pub fn advance_episode(&self, cfg: &CurriculumConfig) -> CurriculumState {
        let episodes_seen = self.episodes_seen + 1;
        let c = if episodes_seen % cfg.update_period == 0 {
            self.c + cfg.c_incr
        } else {
            self.c
        };
        CurriculumState { c, episodes_seen }
    }

    /// Frozen view handed to whoever computes priorities.
    pub fn snapshot(&self, cfg: &CurriculumConfig) -> CurriculumSnapshot {
        CurriculumSnapshot {
            c: self.c,
            k1: cfg.k1,
            k2: cfg.k2,
        }
    }
}

/// Everything needed to evaluate [`priority`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurriculumSnapshot {
    pub c: f64,
    pub k1: f64,
    pub k2: f64,
}

impl CurriculumSnapshot {
    pub fn priority(&self, delta: f64) -> f64 {
        priority(delta, self.c, self.k1, self.k2)
    }
}
