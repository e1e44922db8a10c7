use clap::{Parser, Subcommand, ValueEnum};
use eat_hrl::checkpoint;
use eat_hrl::formats::{self, JsonlSink};
use eat_hrl::{HarnessError, Result};
use eat_hrl_core::analysis::analyze_interruptions;
use eat_hrl_core::config::{Algorithm, ExperimentConfig, Profile};
use eat_hrl_core::envs::EnvName;
use eat_hrl_core::runner::{evaluate, run_training, RunError};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "eat-hrl", version, about = "Hierarchical RL with timed subgoals and emergency action termination")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run and write metrics, traces and a checkpoint into OUT.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the master seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run deterministic episodes with a saved model.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: u32,
        /// Write event and interruption traces here.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Histogram of delays between random events and interruptions.
    AnalyzeInterruptions {
        #[arg(long)]
        traces: String,
        #[arg(long, default_value_t = 200)]
        window: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a built-in configuration as JSON.
    Profile {
        #[arg(long, value_enum, default_value_t = ProfileArg::Desk)]
        profile: ProfileArg,
        #[arg(long, value_enum)]
        env: EnvArg,
        #[arg(long, value_enum)]
        algorithm: AlgoArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Paper,
    Desk,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvArg {
    Pendulum,
    Drawbridge,
    NoisyDrawbridge,
    Platforms,
    NoisyPlatforms,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Hits,
    HitsVd,
    EatQ,
    EatGeom,
}

impl From<EnvArg> for EnvName {
    fn from(e: EnvArg) -> Self {
        match e {
            EnvArg::Pendulum => EnvName::Pendulum,
            EnvArg::Drawbridge => EnvName::Drawbridge,
            EnvArg::NoisyDrawbridge => EnvName::NoisyDrawbridge,
            EnvArg::Platforms => EnvName::Platforms,
            EnvArg::NoisyPlatforms => EnvName::NoisyPlatforms,
        }
    }
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Hits => Algorithm::Hits,
            AlgoArg::HitsVd => Algorithm::HitsVariableDiscount,
            AlgoArg::EatQ => Algorithm::EatQ,
            AlgoArg::EatGeom => Algorithm::EatGeom,
        }
    }
}

fn write_diagnostic(out: &Path, cfg: &ExperimentConfig, err: &RunError) {
    let (stage, step, episode) = match err {
        RunError::NonFinite { stage, step, episode, .. } => (*stage, *step, *episode),
        _ => return,
    };
    let dump = serde_json::json!({
        "error": err.to_string(),
        "stage": stage,
        "step": step,
        "episode": episode,
        "seed": cfg.master_seed,
        "config": cfg,
    });
    let path = out.join("diagnostic.json");
    match std::fs::write(&path, format!("{dump:#}\n")) {
        Ok(()) => eprintln!("diagnostic written to {}", path.display()),
        Err(e) => eprintln!("could not write {}: {e}", path.display()),
    }
}

fn train(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg = formats::load_config(config)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    std::fs::create_dir_all(out).map_err(|e| HarnessError::Io { path: out.into(), source: e })?;
    formats::write_config(&out.join("config.json"), &cfg)?;
    let mut sink = JsonlSink::new(Some(&out.join("metrics.jsonl")), Some(&out.join("traces.jsonl")))?;
    let result = run_training(&cfg, &mut sink);
    sink.finish()?;
    let (summary, model) = result.inspect_err(|e| write_diagnostic(out, &cfg, e))?;
    checkpoint::save(&out.join("checkpoint"), &cfg, &model)?;
    println!(
        "{} {} seed {}: {} episodes, {} interruptions, final success {}",
        cfg.environment.as_str(),
        cfg.algorithm.as_str(),
        cfg.master_seed,
        summary.episodes,
        summary.interruptions,
        summary.final_success().map_or("n/a".to_string(), |s| format!("{s:.3}")),
    );
    Ok(())
}

fn eval(dir: &Path, episodes: u32, traces: Option<&Path>) -> Result<()> {
    let loaded = checkpoint::load(dir)?;
    let mut sink = JsonlSink::new(None, traces)?;
    let m = &loaded.model;
    let out = evaluate(&loaded.config, &m.high, &m.low, m.monitor.as_ref(), episodes, 0, &mut sink, traces.is_some())?;
    sink.finish()?;
    let summary = serde_json::json!({
        "episodes": out.episodes,
        "success_rate": out.success_rate,
        "interruptions": out.interruptions,
    });
    println!("{summary}");
    Ok(())
}

fn analyze(pattern: &str, window: u64, out: &Path) -> Result<()> {
    let records = formats::read_trace_glob(pattern)?;
    let h = analyze_interruptions(&records, window);
    formats::write_histogram(out, &h)?;
    let within = h.fraction_within(100).map_or("n/a".to_string(), |f| format!("{:.3}", f));
    println!(
        "{} paired, {} beyond window, {} unpaired, within 100 steps: {within}",
        h.paired(),
        h.beyond_window,
        h.unpaired
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Train { config, seed, out } => train(&config, seed, &out),
        Command::Evaluate { checkpoint, episodes, traces } => eval(&checkpoint, episodes, traces.as_deref()),
        Command::AnalyzeInterruptions { traces, window, out } => analyze(&traces, window, &out),
        Command::Profile { profile, env, algorithm, seed } => {
            let p = match profile {
                ProfileArg::Paper => Profile::Paper,
                ProfileArg::Desk => Profile::Desk,
            };
            let cfg = ExperimentConfig::profile(p, env.into(), algorithm.into(), seed);
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
            Ok(())
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
