//! Episodic control tasks behind one interface.

pub mod toy;
pub mod uav;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// How a step ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Running,
    Success,
    Collision,
    OutOfRange,
    Timeout,
}

impl Terminal {
    /// Whether the episode is over.
    pub fn is_terminal(self) -> bool {
        self != Terminal::Running
    }

    /// Whether the successor state has no value. Timeouts cut the episode
    /// short but the state itself is not absorbing, so they still bootstrap.
    pub fn is_absorbing(self) -> bool {
        matches!(self, Terminal::Success | Terminal::Collision | Terminal::OutOfRange)
    }

    pub fn is_success(self) -> bool {
        self == Terminal::Success
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Terminal::Running => "running",
            Terminal::Success => "success",
            Terminal::Collision => "collision",
            Terminal::OutOfRange => "out_of_range",
            Terminal::Timeout => "timeout",
        }
    }
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminal: Terminal,
}

pub trait Environment {
    fn observation_dim(&self) -> usize;

    /// Actions are normalized to `[-1, 1]` per component.
    fn action_dim(&self) -> usize;

    fn max_steps(&self) -> usize;

    /// Starts a new episode; the same seed always gives the same episode.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;

    /// Advances one step. Stepping a finished episode is a usage error.
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome>;

    /// Position and heading for trajectory export.
    fn pose(&self) -> Pose;
}

/// Where the agent is, in the environment's own units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: [f64; 3],
    pub yaw: f64,
    pub pitch: f64,
    pub speed: f64,
}

/// One row of a trajectory export.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: usize,
    pub pose: Pose,
    pub reward: f64,
    pub outcome: Terminal,
}

pub fn write_trajectory_csv<W: std::io::Write>(w: &mut W, rows: &[TrajectoryRow]) -> Result<()> {
    writeln!(w, "t,p_x,p_y,p_z,phi,theta,speed,reward,outcome")?;
    for r in rows {
        let p = r.pose.position;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.t, p[0], p[1], p[2], r.pose.yaw, r.pose.pitch, r.pose.speed, r.reward, r.outcome
        )?;
    }
    Ok(())
}
