//! One-parameter grid sweeps over seeds.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use acer_core::{AcerError, Result};

use crate::config::RunConfig;
use crate::train::train;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    TempPool,
    RefreshPerTick,
    CInit,
    CIncr,
    K1,
    K2,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 6] = [
        SweepAxis::TempPool,
        SweepAxis::RefreshPerTick,
        SweepAxis::CInit,
        SweepAxis::CIncr,
        SweepAxis::K1,
        SweepAxis::K2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::TempPool => "n_tp",
            SweepAxis::RefreshPerTick => "a",
            SweepAxis::CInit => "c_init",
            SweepAxis::CIncr => "c_incr",
            SweepAxis::K1 => "k1",
            SweepAxis::K2 => "k2",
        }
    }

    /// Copy of `base` with this axis set to `value`.
    pub fn apply(self, base: &RunConfig, value: f64) -> Result<RunConfig> {
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(AcerError::Usage(format!("{} takes a non-negative integer, got {value}", self.name())))
            }
        };
        let mut cfg = base.clone();
        match self {
            SweepAxis::TempPool => cfg.temp_pool = count()?,
            SweepAxis::RefreshPerTick => cfg.refresh.per_tick = count()?,
            SweepAxis::CInit => cfg.curriculum.c_init = value,
            SweepAxis::CIncr => cfg.curriculum.c_incr = value,
            SweepAxis::K1 => cfg.curriculum.k1 = value,
            SweepAxis::K2 => cfg.curriculum.k2 = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromStr for SweepAxis {
    type Err = AcerError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase();
        let key = match key.as_str() {
            "temp_pool" => "n_tp",
            "per_tick" | "refresh" => "a",
            other => other,
        };
        SweepAxis::ALL.into_iter().find(|a| a.name() == key).ok_or_else(|| {
            AcerError::Usage(format!("unknown sweep axis {s:?} (expected n_tp, a, c_init, c_incr, k1 or k2)"))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub seeds: usize,
    pub tp: f64,
    /// Mean over the seeds that converged.
    pub ct: Option<f64>,
    pub converged: usize,
    pub sc: Option<f64>,
    pub cr: Option<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Trains `base` once per value and seed. Seeds run `base.seed`,
/// `base.seed + 1`, and so on.
pub fn sweep(base: &RunConfig, axis: SweepAxis, values: &[f64], seeds: usize, out: Option<&Path>) -> Result<Vec<SweepRow>> {
    if seeds == 0 || values.is_empty() {
        return Err(AcerError::Usage("a sweep needs at least one value and one seed".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let cfg = axis.apply(base, value)?;
        let mut summaries = Vec::with_capacity(seeds);
        for k in 0..seeds {
            let seed = base.seed + k as u64;
            let run = RunConfig { seed, ..cfg.clone() };
            let dir = out.map(|d| d.join(format!("{}_{value}", axis.name())).join(format!("seed_{seed}")));
            summaries.push(train(&run, dir.as_deref())?.summary);
        }
        let cts: Vec<f64> = summaries.iter().filter_map(|s| s.ct.map(|c| c as f64)).collect();
        let scs: Vec<f64> = summaries.iter().filter_map(|s| s.sc).collect();
        let crs: Vec<f64> = summaries.iter().filter_map(|s| s.cr).collect();
        rows.push(SweepRow {
            value,
            seeds,
            tp: mean(&summaries.iter().map(|s| s.tp).collect::<Vec<_>>()).unwrap_or(0.0),
            ct: mean(&cts),
            converged: cts.len(),
            sc: mean(&scs),
            cr: mean(&crs),
        });
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("sweep.csv"), table_csv(axis, &rows))?;
    }
    Ok(rows)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn table_csv(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut s = format!("{},seeds,tp,ct,converged,sc,cr\n", axis.name());
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.value,
            r.seeds,
            r.tp,
            cell(r.ct),
            r.converged,
            cell(r.sc),
            cell(r.cr)
        );
    }
    s
}

/// Fixed-width table with percentages, one row per value.
pub fn table_text(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let pct = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{:.2}%", 100.0 * x));
    let mut s = format!(
        "{:>4}  {:>8}  {:>8}  {:>12}  {:>8}  {:>8}\n",
        "No.",
        axis.name(),
        "TP",
        "CT",
        "SC",
        "CR"
    );
    for (i, r) in rows.iter().enumerate() {
        let ct = match r.ct {
            Some(ct) if r.converged == r.seeds => format!("{ct:.0}"),
            Some(ct) => format!("{ct:.0} ({}/{})", r.converged, r.seeds),
            None => "never".to_string(),
        };
        let _ = writeln!(
            s,
            "{:>4}  {:>8}  {:>8}  {:>12}  {:>8}  {:>8}",
            i + 1,
            r.value,
            pct(Some(r.tp)),
            ct,
            pct(r.sc),
            pct(r.cr)
        );
    }
    s
}
