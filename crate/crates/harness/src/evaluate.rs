//! Greedy-policy evaluation of a saved agent.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use acer_core::env::{write_trajectory_csv, Environment, Terminal, TrajectoryRow};
use acer_core::rng::{seeded, stream_rng, Stream};
use acer_core::td3::{Td3Agent, Td3Config};
use acer_core::{AcerError, Result};
use rand::Rng as _;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub episodes: usize,
    pub successes: usize,
    pub hit_rate: f64,
    pub mean_return: f64,
    pub outcomes: Vec<Terminal>,
}

pub fn load_agent(path: &Path) -> Result<Td3Agent> {
    let mut r = BufReader::new(fs::File::open(path)?);
    Td3Agent::read_checkpoint(&mut r, Td3Config::standard(1), seeded(0))
}

/// Runs the deterministic policy for `episodes` episodes. The first
/// `keep_trajectories` episodes are written as CSV into `trajectory_dir`.
pub fn evaluate(
    agent: &Td3Agent,
    env: &mut dyn Environment,
    episodes: usize,
    seed: u64,
    trajectory_dir: Option<&Path>,
    keep_trajectories: usize,
) -> Result<EvalResult> {
    if agent.state_dim() != env.observation_dim() || agent.action_dim() != env.action_dim() {
        return Err(AcerError::Checkpoint(format!(
            "checkpoint expects {} observations and {} actions, environment has {} and {}",
            agent.state_dim(),
            agent.action_dim(),
            env.observation_dim(),
            env.action_dim()
        )));
    }
    if let Some(dir) = trajectory_dir {
        fs::create_dir_all(dir)?;
    }
    let mut env_rng = stream_rng(seed, Stream::Evaluation);
    let mut unused = seeded(0);
    let mut outcomes = Vec::with_capacity(episodes);
    let mut total_return = 0.0;
    for k in 0..episodes {
        let mut obs = env.reset(env_rng.random())?;
        let record = trajectory_dir.is_some() && k < keep_trajectories;
        let mut rows = Vec::new();
        let mut t = 0;
        let outcome = loop {
            let action = agent.act(&obs, false, &mut unused)?;
            let step = env.step(&action)?;
            t += 1;
            total_return += step.reward;
            if record {
                rows.push(TrajectoryRow {
                    t,
                    pose: env.pose(),
                    reward: step.reward,
                    outcome: step.terminal,
                });
            }
            obs = step.observation;
            if step.terminal.is_terminal() {
                break step.terminal;
            }
        };
        if let (true, Some(dir)) = (record, trajectory_dir) {
            let mut w = BufWriter::new(fs::File::create(dir.join(format!("trajectory_{k}.csv")))?);
            write_trajectory_csv(&mut w, &rows)?;
            w.flush()?;
        }
        outcomes.push(outcome);
    }
    let successes = outcomes.iter().filter(|o| o.is_success()).count();
    Ok(EvalResult {
        episodes,
        successes,
        hit_rate: if episodes == 0 { 0.0 } else { successes as f64 / episodes as f64 },
        mean_return: if episodes == 0 { 0.0 } else { total_return / episodes as f64 },
        outcomes,
    })
}

/// Runs uniformly random actions; the baseline the learned policy is
/// compared against.
pub fn random_policy_hit_rate(env: &mut dyn Environment, episodes: usize, seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Exploration);
    let mut env_rng = stream_rng(seed, Stream::Evaluation);
    let mut successes = 0;
    for _ in 0..episodes {
        env.reset(env_rng.random())?;
        loop {
            let action: Vec<f64> = (0..env.action_dim()).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let step = env.step(&action)?;
            if step.terminal.is_terminal() {
                successes += step.terminal.is_success() as usize;
                break;
            }
        }
    }
    Ok(successes as f64 / episodes.max(1) as f64)
}
