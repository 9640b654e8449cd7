//! Stored versus recomputed priorities at chosen training steps.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use acer_core::refresh::{oracle_priorities, probability_gap, GapReport, PriorityRule};
use acer_core::replay::ReplayMode;
use acer_core::td3::TdSettings;
use acer_core::{AcerError, Result};

use crate::config::RunConfig;
use crate::svg::{LineChart, Series};
use crate::train::{train_with, Observer, StepContext, TrainOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct PrioritySnapshot {
    pub step: u64,
    pub stored: Vec<f64>,
    pub oracle: Vec<f64>,
    pub gap: GapReport,
}

/// Observer that freezes at each requested step and recomputes every stored
/// experience's priority with the learner's current networks.
pub struct PriorityProbe {
    steps: Vec<u64>,
    mode: ReplayMode,
    alpha: f64,
    td: TdSettings,
    stop_after_last: bool,
    pub snapshots: Vec<PrioritySnapshot>,
}

impl PriorityProbe {
    pub fn new(cfg: &RunConfig, steps: &[u64], action_dim: usize) -> Result<Self> {
        if cfg.mode == ReplayMode::Uniform {
            return Err(AcerError::Usage("priority diagnostics need per or acer mode".into()));
        }
        let mut steps = steps.to_vec();
        steps.sort_unstable();
        steps.dedup();
        Ok(PriorityProbe {
            steps,
            mode: cfg.mode,
            alpha: cfg.alpha,
            td: cfg.agent.td3(action_dim).td_settings(),
            stop_after_last: true,
            snapshots: Vec::new(),
        })
    }

    /// Lets training run its full length instead of stopping at the last
    /// requested step.
    pub fn run_to_end(mut self) -> Self {
        self.stop_after_last = false;
        self
    }
}

impl Observer for PriorityProbe {
    fn after_step(&mut self, ctx: &StepContext<'_>) -> Result<()> {
        if self.steps.binary_search(&ctx.global_step).is_err() {
            return Ok(());
        }
        let rule = match self.mode {
            ReplayMode::Acer => PriorityRule::Curriculum(ctx.curriculum),
            _ => PriorityRule::PerClipped,
        };
        let snapshot = ctx.agent.snapshot();
        let oracle = oracle_priorities(ctx.buffer, &snapshot, &self.td, &rule)?;
        let stored = ctx.buffer.priorities();
        let gap = probability_gap(&stored, &oracle, self.alpha)?;
        self.snapshots.push(PrioritySnapshot {
            step: ctx.global_step,
            stored,
            oracle,
            gap,
        });
        Ok(())
    }

    fn done(&self) -> bool {
        self.stop_after_last && self.snapshots.len() == self.steps.len()
    }
}

pub struct DiagnoseOutcome {
    pub snapshots: Vec<PrioritySnapshot>,
    pub train: TrainOutcome,
}

/// Trains until the last requested step, probing priorities along the way.
pub fn diagnose(cfg: &RunConfig, steps: &[u64], out: Option<&Path>) -> Result<DiagnoseOutcome> {
    let action_dim = cfg.build_env()?.action_dim();
    let mut probe = PriorityProbe::new(cfg, steps, action_dim)?;
    let train = train_with(cfg, None, &mut probe)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_outputs(dir, &probe.snapshots, &cfg.mode.to_string())?;
    }
    Ok(DiagnoseOutcome {
        snapshots: probe.snapshots,
        train,
    })
}

pub fn write_outputs(dir: &Path, snapshots: &[PrioritySnapshot], label: &str) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(dir.join("priorities.csv"))?);
    writeln!(w, "training_step,slot,stored_priority,oracle_priority")?;
    for s in snapshots {
        for (slot, (p, o)) in s.stored.iter().zip(&s.oracle).enumerate() {
            writeln!(w, "{},{slot},{p},{o}", s.step)?;
        }
    }
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(dir.join("gaps.csv"))?);
    writeln!(w, "training_step,occupancy,mean_abs_priority_gap,mean_abs_probability_gap")?;
    for s in snapshots {
        writeln!(
            w,
            "{},{},{},{}",
            s.step,
            s.stored.len(),
            s.gap.mean_abs_priority_gap,
            s.gap.mean_abs_probability_gap
        )?;
    }
    w.flush()?;

    for s in snapshots {
        fs::write(dir.join(format!("priorities_{}.svg", s.step)), distribution_chart(s, label).render())?;
    }
    Ok(())
}

/// Stored and recomputed priorities, each sorted ascending.
pub fn distribution_chart(s: &PrioritySnapshot, label: &str) -> LineChart {
    let sorted = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v.into_iter().enumerate().map(|(i, p)| (i as f64, p)).collect::<Vec<_>>()
    };
    LineChart {
        title: format!("Priority distribution at step {} ({label})", s.step),
        x_label: "rank".into(),
        y_label: "priority".into(),
        series: vec![Series::new("stored", sorted(&s.stored)), Series::new("recomputed", sorted(&s.oracle))],
    }
}
