//! Per-episode records, hit rates and run summaries.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use acer_core::env::Terminal;
use acer_core::{AcerError, Result};
use serde::{Deserialize, Serialize};

/// Hit rate at which a run counts as converged.
pub const CONVERGENCE_HIT_RATE: f64 = 0.70;

/// Header of `episodes.csv`. Bump the trailing version when columns change.
pub const EPISODE_CSV_HEADER: &str = "episode,steps,return,outcome,hit_rate,c,beta,learn_calls,refresh_updates";
pub const EPISODE_CSV_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// 1-based.
    pub episode: u64,
    pub steps: usize,
    pub episode_return: f64,
    pub outcome: Terminal,
    /// Success fraction over the trailing window ending at this episode.
    pub hit_rate: f64,
    /// Curriculum factor in force during the episode.
    pub c: f64,
    pub beta: f64,
    pub learn_calls: u64,
    pub refresh_updates: u64,
}

/// Trailing success fraction. Early on the window holds fewer episodes and
/// the rate is taken over those.
#[derive(Debug, Clone)]
pub struct HitWindow {
    window: usize,
    outcomes: VecDeque<bool>,
    hits: usize,
}

impl HitWindow {
    pub fn new(window: usize) -> Self {
        HitWindow {
            window: window.max(1),
            outcomes: VecDeque::with_capacity(window),
            hits: 0,
        }
    }

    pub fn push(&mut self, success: bool) -> f64 {
        if self.outcomes.len() == self.window {
            if self.outcomes.pop_front() == Some(true) {
                self.hits -= 1;
            }
        }
        self.outcomes.push_back(success);
        self.hits += success as usize;
        self.rate()
    }

    pub fn rate(&self) -> f64 {
        if self.outcomes.is_empty() {
            0.0
        } else {
            self.hits as f64 / self.outcomes.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// Peak hit rate.
    pub tp: f64,
    /// First episode whose hit rate reached 70%.
    pub ct: Option<u64>,
    /// Population standard deviation of the hit rate over the tail.
    pub sc: Option<f64>,
    /// Mean hit rate over the tail.
    pub cr: Option<f64>,
    pub episodes: u64,
    pub tail: usize,
}

/// Summary statistics of a run. `sc` and `cr` need at least `tail` records.
pub fn summarize(records: &[EpisodeRecord], tail: usize) -> RunSummary {
    let tp = records.iter().map(|r| r.hit_rate).fold(0.0, f64::max);
    let ct = records.iter().find(|r| r.hit_rate >= CONVERGENCE_HIT_RATE).map(|r| r.episode);
    let (sc, cr) = if tail > 0 && records.len() >= tail {
        // Welford keeps a constant series at exactly its value with zero spread.
        let (mut mean, mut m2) = (0.0, 0.0);
        for (k, r) in records[records.len() - tail..].iter().enumerate() {
            let d = r.hit_rate - mean;
            mean += d / (k + 1) as f64;
            m2 += d * (r.hit_rate - mean);
        }
        (Some((m2 / tail as f64).sqrt()), Some(mean))
    } else {
        (None, None)
    };
    RunSummary {
        tp,
        ct,
        sc,
        cr,
        episodes: records.len() as u64,
        tail,
    }
}

/// Success fraction over the last `n` records (all of them if fewer).
pub fn final_success_rate(records: &[EpisodeRecord], n: usize) -> f64 {
    let tail = &records[records.len().saturating_sub(n)..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().filter(|r| r.outcome.is_success()).count() as f64 / tail.len() as f64
}

/// First episode at which the trailing `window` success rate reaches `level`,
/// counting only full windows.
pub fn episodes_to_success_rate(records: &[EpisodeRecord], window: usize, level: f64) -> Option<u64> {
    let mut w = HitWindow::new(window);
    for (i, r) in records.iter().enumerate() {
        let rate = w.push(r.outcome.is_success());
        if i + 1 >= window && rate >= level {
            return Some(r.episode);
        }
    }
    None
}

pub fn write_episodes_csv<W: Write>(w: &mut W, records: &[EpisodeRecord]) -> Result<()> {
    writeln!(w, "# episodes v{EPISODE_CSV_VERSION}")?;
    writeln!(w, "{EPISODE_CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.episode,
            r.steps,
            r.episode_return,
            r.outcome,
            r.hit_rate,
            r.c,
            r.beta,
            r.learn_calls,
            r.refresh_updates
        )?;
    }
    Ok(())
}

fn parse_outcome(s: &str) -> Result<Terminal> {
    Ok(match s {
        "running" => Terminal::Running,
        "success" => Terminal::Success,
        "collision" => Terminal::Collision,
        "out_of_range" => Terminal::OutOfRange,
        "timeout" => Terminal::Timeout,
        other => return Err(AcerError::Config(format!("unknown outcome {other:?}"))),
    })
}

pub fn read_episodes_csv<R: BufRead>(r: R) -> Result<Vec<EpisodeRecord>> {
    let bad = |line: usize, m: &str| AcerError::Config(format!("episodes.csv line {line}: {m}"));
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line == EPISODE_CSV_HEADER || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(bad(i + 1, "expected 9 fields"));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad(i + 1, "bad number"));
        let int = |k: usize| f[k].parse::<u64>().map_err(|_| bad(i + 1, "bad integer"));
        out.push(EpisodeRecord {
            episode: int(0)?,
            steps: int(1)? as usize,
            episode_return: num(2)?,
            outcome: parse_outcome(f[3])?,
            hit_rate: num(4)?,
            c: num(5)?,
            beta: num(6)?,
            learn_calls: int(7)?,
            refresh_updates: int(8)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(episode: u64, hit_rate: f64, success: bool) -> EpisodeRecord {
        EpisodeRecord {
            episode,
            steps: 10,
            episode_return: 1.5,
            outcome: if success { Terminal::Success } else { Terminal::Timeout },
            hit_rate,
            c: 10.0,
            beta: 0.4,
            learn_calls: 0,
            refresh_updates: 0,
        }
    }

    #[test]
    fn window_rate() {
        let mut w = HitWindow::new(3);
        assert_eq!(w.push(true), 1.0);
        assert_eq!(w.push(false), 0.5);
        assert!((w.push(false) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(w.push(false), 0.0);
        assert!((w.push(true) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constant_series() {
        let rs: Vec<_> = (1..=2000).map(|e| record(e, 0.8, true)).collect();
        let s = summarize(&rs, 1500);
        assert_eq!(s.tp, 0.8);
        assert_eq!(s.ct, Some(1));
        assert_eq!(s.sc, Some(0.0));
        assert_eq!(s.cr, Some(0.8));
    }

    #[test]
    fn linear_ramp_converges_at_3500() {
        let rs: Vec<_> = (1..=5000).map(|e| record(e, e as f64 / 5000.0, false)).collect();
        assert_eq!(summarize(&rs, 1500).ct, Some(3500));
    }

    #[test]
    fn short_runs_have_no_tail_statistics() {
        let rs: Vec<_> = (1..=100).map(|e| record(e, 0.1, false)).collect();
        let s = summarize(&rs, 1500);
        assert_eq!(s.sc, None);
        assert_eq!(s.cr, None);
        assert_eq!(s.ct, None);
    }

    #[test]
    fn csv_round_trip() {
        let rs: Vec<_> = (1..=5).map(|e| record(e, 0.1 * e as f64, e % 2 == 0)).collect();
        let mut bytes = Vec::new();
        write_episodes_csv(&mut bytes, &rs).unwrap();
        assert_eq!(read_episodes_csv(bytes.as_slice()).unwrap(), rs);
    }

    #[test]
    fn success_rate_helpers() {
        let rs: Vec<_> = (1..=10).map(|e| record(e, 0.0, e > 6)).collect();
        assert_eq!(final_success_rate(&rs, 4), 1.0);
        assert_eq!(final_success_rate(&rs, 10), 0.4);
        assert_eq!(episodes_to_success_rate(&rs, 4, 0.7), Some(9));
        assert_eq!(episodes_to_success_rate(&rs, 4, 1.0), Some(10));
        assert_eq!(episodes_to_success_rate(&rs[..6], 4, 0.1), None);
    }
}
