//! The outer training loop.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use acer_core::curriculum::{CurriculumSnapshot, CurriculumState};
use acer_core::refresh::{AsyncRefresher, NetworkSnapshot, PriorityRule, RefreshStats, Refresher};
use acer_core::replay::{ReplayBuffer, ReplayMode, Transition};
use acer_core::rng::{stream_rng, Stream};
use acer_core::td3::Td3Agent;
use acer_core::Result;
use rand::Rng as _;
use serde::Serialize;

use crate::config::RunConfig;
use crate::metrics::{final_success_rate, summarize, write_episodes_csv, EpisodeRecord, HitWindow, RunSummary};
use crate::svg::{LineChart, Series};

/// What an observer sees after every environment step.
pub struct StepContext<'a> {
    /// Environment steps taken so far, this one included.
    pub global_step: u64,
    pub episode: u64,
    pub learning: bool,
    pub buffer: &'a ReplayBuffer,
    pub agent: &'a Td3Agent,
    pub curriculum: CurriculumSnapshot,
}

pub trait Observer {
    fn after_step(&mut self, ctx: &StepContext<'_>) -> Result<()>;

    /// Ends training early, after the current step.
    fn done(&self) -> bool {
        false
    }
}

impl Observer for () {
    fn after_step(&mut self, _: &StepContext<'_>) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RefreshTotals {
    pub updates: u64,
    /// Largest number of refresh writes attributed to one environment step.
    pub max_per_step: usize,
}

pub struct TrainOutcome {
    pub records: Vec<EpisodeRecord>,
    pub summary: RunSummary,
    pub agent: Td3Agent,
    pub buffer: ReplayBuffer,
    pub learn_calls: u64,
    pub global_steps: u64,
    pub refresh: RefreshTotals,
    pub async_stats: Option<RefreshStats>,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    mode: String,
    seed: u64,
    #[serde(flatten)]
    summary: &'a RunSummary,
    final_success_rate: f64,
    learn_calls: u64,
    global_steps: u64,
    refresh: RefreshTotals,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

pub fn train(cfg: &RunConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    train_with(cfg, out, &mut ())
}

pub fn train_with(cfg: &RunConfig, out: Option<&Path>, observer: &mut dyn Observer) -> Result<TrainOutcome> {
    cfg.validate()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.toml"), cfg.to_toml())?;
    }
    let mut env = cfg.build_env()?;
    let action_dim = env.action_dim();
    let td3 = cfg.agent.td3(action_dim);
    let td = td3.td_settings();
    let mut agent = Td3Agent::new(env.observation_dim(), td3, stream_rng(cfg.seed, Stream::Agent))?;
    let buffer = Arc::new(Mutex::new(ReplayBuffer::new(
        cfg.buffer_config(),
        stream_rng(cfg.seed, Stream::Buffer),
    )?));
    let mut explore_rng = stream_rng(cfg.seed, Stream::Exploration);
    let mut env_rng = stream_rng(cfg.seed, Stream::Environment);
    let mut curriculum = CurriculumState::new(&cfg.curriculum);

    let refresh_on = cfg.mode == ReplayMode::Acer && cfg.refresh.is_active();
    let mut inline = Refresher::new(cfg.refresh, td.clone());
    let worker = (refresh_on && cfg.async_refresh).then(|| AsyncRefresher::spawn(cfg.refresh, td, Arc::clone(&buffer)));
    let mut snapshot: Arc<NetworkSnapshot> = Arc::new(agent.snapshot());
    if let Some(w) = &worker {
        w.publish(Arc::clone(&snapshot));
    }

    let mut records = Vec::with_capacity(cfg.episodes as usize);
    let mut wall_ms = Vec::with_capacity(cfg.episodes as usize);
    let mut window = HitWindow::new(cfg.hit_window);
    let mut learn_calls = 0u64;
    let mut global_steps = 0u64;
    let mut totals = RefreshTotals::default();

    for episode in 1..=cfg.episodes {
        if observer.done() {
            break;
        }
        let started = Instant::now();
        let learning = episode > cfg.warmup_episodes;
        let cs = curriculum.snapshot(&cfg.curriculum);
        let rule = PriorityRule::Curriculum(cs);
        if let Some(w) = &worker {
            w.set_rule(rule);
        }
        let beta = cfg.beta(episode);
        let mut obs = env.reset(env_rng.random())?;
        let mut ret = 0.0;
        let mut steps = 0usize;
        let mut episode_learns = 0u64;
        let mut episode_refresh = 0u64;
        let outcome = loop {
            let action = if learning {
                agent.act(&obs, true, &mut explore_rng)?
            } else {
                (0..action_dim).map(|_| explore_rng.random_range(-1.0..=1.0)).collect()
            };
            let step = env.step(&action)?;
            steps += 1;
            global_steps += 1;
            ret += step.reward;
            lock(&buffer).store(Transition {
                state: std::mem::take(&mut obs),
                action,
                reward: step.reward,
                next_state: step.observation.clone(),
                done: step.terminal.is_absorbing(),
            })?;

            if learning && steps % cfg.replay_period == 0 && lock(&buffer).len() >= cfg.batch_size {
                let batch = lock(&buffer).sample(cfg.batch_size, beta)?;
                let report = agent.learn_on_batch(&batch, cfg.mode, Some(&cs))?;
                report.apply_priorities(&mut lock(&buffer))?;
                learn_calls += 1;
                episode_learns += 1;
                if refresh_on {
                    snapshot = Arc::new(agent.snapshot());
                    if let Some(w) = &worker {
                        w.publish(Arc::clone(&snapshot));
                    }
                }
            }

            if learning && refresh_on {
                match &worker {
                    Some(w) => w.signal(),
                    None => {
                        let n = inline.tick(&mut lock(&buffer), &snapshot, &rule)?;
                        episode_refresh += n as u64;
                        totals.max_per_step = totals.max_per_step.max(n);
                    }
                }
            }

            {
                let guard = lock(&buffer);
                observer.after_step(&StepContext {
                    global_step: global_steps,
                    episode,
                    learning,
                    buffer: &guard,
                    agent: &agent,
                    curriculum: cs,
                })?;
            }

            obs = step.observation;
            if step.terminal.is_terminal() || observer.done() {
                break step.terminal;
            }
        };
        totals.updates += episode_refresh;
        let hit_rate = window.push(outcome.is_success());
        records.push(EpisodeRecord {
            episode,
            steps,
            episode_return: ret,
            outcome,
            hit_rate,
            c: cs.c,
            beta,
            learn_calls: episode_learns,
            refresh_updates: episode_refresh,
        });
        curriculum = curriculum.advance_episode(&cfg.curriculum);
        wall_ms.push(started.elapsed().as_secs_f64() * 1e3);
        if let Some(dir) = out {
            if cfg.checkpoint_every > 0 && episode % cfg.checkpoint_every == 0 {
                write_checkpoint(&agent, &dir.join(format!("checkpoint_{episode}.bin")))?;
            }
        }
    }

    let async_stats = match worker {
        Some(w) => {
            let stats = w.stop()?;
            totals.updates = stats.updates;
            totals.max_per_step = stats.max_per_tick;
            Some(stats)
        }
        None => None,
    };
    let summary = summarize(&records, cfg.stats_tail);
    let buffer = Arc::try_unwrap(buffer)
        .map(|m| m.into_inner().unwrap_or_else(|p| p.into_inner()))
        .unwrap_or_else(|shared| lock(&shared).clone());

    if let Some(dir) = out {
        let mut w = BufWriter::new(fs::File::create(dir.join("episodes.csv"))?);
        write_episodes_csv(&mut w, &records)?;
        w.flush()?;
        let mut w = BufWriter::new(fs::File::create(dir.join("timing.csv"))?);
        writeln!(w, "episode,wall_ms")?;
        for (r, ms) in records.iter().zip(&wall_ms) {
            writeln!(w, "{},{ms:.3}", r.episode)?;
        }
        w.flush()?;
        let file = SummaryFile {
            mode: cfg.mode.to_string(),
            seed: cfg.seed,
            summary: &summary,
            final_success_rate: final_success_rate(&records, cfg.stats_tail),
            learn_calls,
            global_steps,
            refresh: totals,
        };
        fs::write(
            dir.join("summary.json"),
            serde_json::to_string_pretty(&file).expect("summary serializes"),
        )?;
        write_checkpoint(&agent, &dir.join("checkpoint_final.bin"))?;
        fs::write(dir.join("hit_rate.svg"), hit_rate_chart(&records, &cfg.mode.to_string()).render())?;
    }

    Ok(TrainOutcome {
        records,
        summary,
        agent,
        buffer,
        learn_calls,
        global_steps,
        refresh: totals,
        async_stats,
    })
}

pub fn write_checkpoint(agent: &Td3Agent, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    agent.write_checkpoint(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn hit_rate_chart(records: &[EpisodeRecord], name: &str) -> LineChart {
    LineChart {
        title: "Hit rate".into(),
        x_label: "episode".into(),
        y_label: "trailing hit rate".into(),
        series: vec![Series::new(
            name,
            records.iter().map(|r| (r.episode as f64, r.hit_rate)).collect(),
        )],
    }
}
