use std::path::{Path, PathBuf};
use std::process::ExitCode;

use acer_core::replay::ReplayMode;
use acer_core::Result;
use acer_harness::config::{RunConfig, ScenarioFile};
use acer_harness::diagnose::diagnose;
use acer_harness::evaluate::{evaluate, load_agent};
use acer_harness::sweep::{sweep, table_text, SweepAxis};
use acer_harness::train::train;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "acer", version, about = "Train and inspect TD3 agents with curriculum experience replay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigSource {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: uav, uav_smoke or toy.
    #[arg(long)]
    preset: Option<String>,
}

impl ConfigSource {
    fn load(&self) -> Result<RunConfig> {
        match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::load(path),
            (None, Some(name)) => RunConfig::preset(name),
            (None, None) => Ok(RunConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write episodes.csv, summary.json, checkpoints and plots.
    Train {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        seed: Option<u64>,
        /// uniform, per or acer.
        #[arg(long)]
        mode: Option<ReplayMode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a saved agent greedily and report its hit rate.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// TOML scenario (env kind plus environment settings).
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        /// Directory for trajectory CSVs.
        #[arg(long)]
        trajectories: Option<PathBuf>,
        /// How many episodes to write trajectories for.
        #[arg(long, default_value_t = 10)]
        keep: usize,
    },
    /// Compare stored and recomputed priorities at the given training steps.
    Diagnose {
        #[command(flatten)]
        source: ConfigSource,
        /// Comma-separated global step counts.
        #[arg(long, value_delimiter = ',', required = true)]
        steps: Vec<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<ReplayMode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train once per value and seed and tabulate TP, CT, SC and CR.
    Sweep {
        #[command(flatten)]
        source: ConfigSource,
        /// n_tp, a, c_init, c_incr, k1 or k2.
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a built-in configuration as TOML.
    Config {
        #[arg(long, default_value = "uav")]
        preset: String,
        /// Print the matching eval scenario instead.
        #[arg(long)]
        scenario: bool,
    },
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{:.2}%", 100.0 * v))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            source,
            seed,
            mode,
            out,
        } => {
            let mut cfg = source.load()?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(mode) = mode {
                cfg.mode = mode;
            }
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            let result = train(&cfg, Some(&out))?;
            let s = &result.summary;
            println!(
                "{} seed {}: TP {} CT {} SC {} CR {} ({} learn calls, {} steps)",
                cfg.mode,
                cfg.seed,
                pct(Some(s.tp)),
                s.ct.map_or_else(|| "never".into(), |c| c.to_string()),
                pct(s.sc),
                pct(s.cr),
                result.learn_calls,
                result.global_steps
            );
            println!("outputs in {}", out.display());
        }
        Command::Eval {
            checkpoint,
            scenario,
            episodes,
            trajectories,
            keep,
        } => {
            let agent = load_agent(&checkpoint)?;
            let sc = ScenarioFile::load(&scenario)?;
            let mut env = sc.build_env()?;
            let r = evaluate(&agent, env.as_mut(), episodes, sc.seed, trajectories.as_deref(), keep)?;
            println!("{}", serde_json::to_string_pretty(&r).expect("result serializes"));
        }
        Command::Diagnose {
            source,
            steps,
            seed,
            mode,
            out,
        } => {
            let mut cfg = source.load()?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(mode) = mode {
                cfg.mode = mode;
            }
            let out = out.unwrap_or_else(|| cfg.output_dir.join("diagnose"));
            let d = diagnose(&cfg, &steps, Some(&out))?;
            println!("{:>10}  {:>9}  {:>14}  {:>14}", "step", "stored", "|priority gap|", "|prob. gap|");
            for s in &d.snapshots {
                println!(
                    "{:>10}  {:>9}  {:>14.6e}  {:>14.6e}",
                    s.step,
                    s.stored.len(),
                    s.gap.mean_abs_priority_gap,
                    s.gap.mean_abs_probability_gap
                );
            }
            report_missing(&steps, d.snapshots.iter().map(|s| s.step));
            println!("outputs in {}", out.display());
        }
        Command::Sweep {
            source,
            axis,
            values,
            seeds,
            out,
        } => {
            let cfg = source.load()?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join(format!("sweep_{}", axis.name())));
            let rows = sweep(&cfg, axis, &values, seeds, Some(&out))?;
            print!("{}", table_text(axis, &rows));
            println!("outputs in {}", Path::new(&out).display());
        }
        Command::Config { preset, scenario } => {
            let cfg = RunConfig::preset(&preset)?;
            if scenario {
                print!("{}", ScenarioFile::from_run(&cfg).to_toml());
            } else {
                print!("{}", cfg.to_toml());
            }
        }
    }
    Ok(())
}

fn report_missing(requested: &[u64], taken: impl Iterator<Item = u64>) {
    let taken: Vec<u64> = taken.collect();
    let missing: Vec<String> = requested.iter().filter(|s| !taken.contains(s)).map(u64::to_string).collect();
    if !missing.is_empty() {
        eprintln!("training ended before steps {}", missing.join(", "));
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
