//! Training and evaluation loops.
//!
//! Per original step during training: the agent acts, the monitor (if any)
//! scans, then the owed gradient steps run. Evaluation uses copies of the
//! current networks with deterministic policies and never stores experience.

use crate::config::ExperimentConfig;
use crate::eat::{eat_scan, EatMonitor};
use crate::envs::{make_env, Environment, EventKind};
use crate::hits::{AgentError, HitsAgent, Mode};
use crate::sac::{Sac, SacError};
use crate::seeds::{self, splitmix64};
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("non-finite {stage} at env step {step} (episode {episode}, seed {seed})")]
    NonFinite { stage: &'static str, step: u64, episode: u64, seed: u64 },
    #[error("agent failure at env step {step}: {source}")]
    Agent { step: u64, source: AgentError },
}

/// One evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub env_step: u64,
    pub success_rate: f64,
    pub episodes: u64,
    pub interruptions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TraceKind {
    Event { kind: EventKind },
    Interruption { level: usize, strategy: String, gap: f64 },
    Outcome { success: bool, length: u64 },
}

/// One line of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub episode: u64,
    pub time: u64,
    #[serde(flatten)]
    pub kind: TraceKind,
}

/// Receives metrics and traces as they are produced.
pub trait RunSink {
    fn metric(&mut self, record: &MetricRecord);
    fn trace(&mut self, record: &TraceRecord);
}

/// Discards everything.
pub struct NullSink;

impl RunSink for NullSink {
    fn metric(&mut self, _record: &MetricRecord) {}
    fn trace(&mut self, _record: &TraceRecord) {}
}

/// Keeps everything in memory.
#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub metrics: Vec<MetricRecord>,
    pub traces: Vec<TraceRecord>,
}

impl RunSink for MemorySink {
    fn metric(&mut self, record: &MetricRecord) {
        self.metrics.push(record.clone());
    }
    fn trace(&mut self, record: &TraceRecord) {
        self.traces.push(record.clone());
    }
}

/// Trained networks and monitor state at the end of a run.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub high: Sac,
    pub low: Sac,
    pub monitor: Option<EatMonitor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub metrics: Vec<MetricRecord>,
    pub episodes: u64,
    pub interruptions: u64,
}

impl RunSummary {
    pub fn final_success(&self) -> Option<f64> {
        self.metrics.last().map(|m| m.success_rate)
    }
}

fn episode_seed(base: u64, episode: u64) -> u64 {
    splitmix64(base.wrapping_add(episode))
}

fn wrap(step: u64, episode: u64, seed: u64, e: AgentError) -> RunError {
    match e {
        AgentError::Sac(SacError::NonFinite(stage)) => RunError::NonFinite { stage, step, episode, seed },
        AgentError::Sac(SacError::Approx(crate::approx::ApproxError::NonFinite)) => RunError::NonFinite { stage: "network", step, episode, seed },
        other => RunError::Agent { step, source: other },
    }
}

/// Result of one batch of evaluation episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub success_rate: f64,
    pub interruptions: u64,
    pub episodes: u64,
}

/// Runs `episodes` deterministic episodes with copies of the given networks.
/// Traces are emitted with episode ids starting at `first_id`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    cfg: &ExperimentConfig,
    high: &Sac,
    low: &Sac,
    monitor: Option<&EatMonitor>,
    episodes: u32,
    first_id: u64,
    sink: &mut dyn RunSink,
    emit_traces: bool,
) -> Result<EvalOutcome, RunError> {
    let mut env = make_env(cfg.environment, &cfg.physics);
    let mut agent = HitsAgent::from_parts(cfg.agent.clone(), high.clone(), low.clone(), env.as_ref(), cfg.master_seed)
        .map_err(|e| RunError::Agent { step: 0, source: e })?;
    agent.set_mode(Mode::Eval);
    let mut monitor = monitor.cloned();
    let base = seeds::derive_seed(cfg.master_seed, seeds::EVALUATION);
    let (mut successes, mut interruptions) = (0u64, 0u64);
    for i in 0..episodes as u64 {
        let id = first_id + i;
        let (ok, n) = run_episode(&mut agent, env.as_mut(), monitor.as_mut(), episode_seed(base, i), id, sink, emit_traces)
            .map_err(|e| wrap(0, id, cfg.master_seed, e))?;
        successes += ok as u64;
        interruptions += n;
    }
    Ok(EvalOutcome {
        success_rate: if episodes == 0 { 0.0 } else { successes as f64 / episodes as f64 },
        interruptions,
        episodes: episodes as u64,
    })
}

fn emit_step(sink: &mut dyn RunSink, id: u64, events: &[crate::envs::EventRecord]) {
    for ev in events {
        sink.trace(&TraceRecord { episode: id, time: ev.time, kind: TraceKind::Event { kind: ev.kind } });
    }
}

fn scan(agent: &mut HitsAgent, monitor: Option<&mut EatMonitor>, sink: &mut dyn RunSink, id: u64, emit: bool) -> u64 {
    let Some(m) = monitor else { return 0 };
    if agent.episode_done() || agent.fresh_action() {
        return 0;
    }
    let t = agent.time().expect("live episode");
    let report = eat_scan(agent, m, t);
    match report.level {
        Some(level) => {
            if emit {
                sink.trace(&TraceRecord {
                    episode: id,
                    time: t,
                    kind: TraceKind::Interruption { level, strategy: String::from(report.strategy), gap: report.gap },
                });
            }
            1
        }
        None => 0,
    }
}

/// One evaluation episode; returns success and interruption count.
fn run_episode(
    agent: &mut HitsAgent,
    env: &mut dyn Environment,
    mut monitor: Option<&mut EatMonitor>,
    seed: u64,
    id: u64,
    sink: &mut dyn RunSink,
    emit: bool,
) -> Result<(bool, u64), AgentError> {
    agent.begin_episode(env, seed, monitor.as_deref_mut())?;
    let mut interruptions = 0;
    let mut success = false;
    while !agent.episode_done() {
        let r = agent.agent_step(env, monitor.as_deref_mut())?;
        if emit {
            emit_step(sink, id, &r.events);
        }
        success = r.success;
        interruptions += scan(agent, monitor.as_deref_mut(), sink, id, emit);
        if r.done && emit {
            sink.trace(&TraceRecord { episode: id, time: r.time, kind: TraceKind::Outcome { success, length: r.time } });
        }
    }
    Ok((success, interruptions))
}

/// Trains for `cfg.total_env_steps` steps, evaluating every `cfg.eval_every`.
pub fn run_training(cfg: &ExperimentConfig, sink: &mut dyn RunSink) -> Result<(RunSummary, TrainedModel), RunError> {
    cfg.validate()?;
    let seed = cfg.master_seed;
    let mut env = make_env(cfg.environment, &cfg.physics);
    let mut agent = HitsAgent::new(cfg.agent.clone(), env.as_ref(), seed).map_err(|e| wrap(0, 0, seed, e))?;
    let mut monitor = match cfg.strategy {
        Some(s) => Some(EatMonitor::uniform(s, 2).map_err(crate::config::ConfigError::from)?),
        None => None,
    };
    let env_base = seeds::derive_seed(seed, seeds::ENVIRONMENT);
    let mut summary = RunSummary { metrics: Vec::new(), episodes: 0, interruptions: 0 };
    let mut steps = 0u64;
    let mut next_eval = cfg.eval_every;
    let mut eval_id = 1u64 << 32;
    let emit = cfg.trace_training;
    while steps < cfg.total_env_steps {
        let episode = summary.episodes;
        agent.begin_episode(env.as_mut(), episode_seed(env_base, episode), monitor.as_mut()).map_err(|e| wrap(steps, episode, seed, e))?;
        while !agent.episode_done() && steps < cfg.total_env_steps {
            let r = agent.agent_step(env.as_mut(), monitor.as_mut()).map_err(|e| wrap(steps, episode, seed, e))?;
            steps += 1;
            if emit {
                emit_step(sink, episode, &r.events);
                if r.done {
                    sink.trace(&TraceRecord { episode, time: r.time, kind: TraceKind::Outcome { success: r.success, length: r.time } });
                }
            }
            summary.interruptions += scan(&mut agent, monitor.as_mut(), sink, episode, emit);
            agent.train().map_err(|e| wrap(steps, episode, seed, e))?;
            if steps == next_eval {
                let out = evaluate(cfg, &agent.high.sac, &agent.low.sac, monitor.as_ref(), cfg.eval_episodes, eval_id, &mut NullSink, false)?;
                eval_id += cfg.eval_episodes as u64;
                let record = MetricRecord { env_step: steps, success_rate: out.success_rate, episodes: episode + 1, interruptions: summary.interruptions };
                sink.metric(&record);
                summary.metrics.push(record);
                next_eval += cfg.eval_every;
            }
        }
        summary.episodes += 1;
    }
    let model = TrainedModel { high: agent.high.sac.clone(), low: agent.low.sac.clone(), monitor };
    Ok((summary, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Algorithm, Profile};
    use crate::envs::EnvName;

    fn tiny(algorithm: Algorithm) -> ExperimentConfig {
        let mut c = ExperimentConfig::profile(Profile::Desk, EnvName::NoisyDrawbridge, algorithm, 5);
        c.total_env_steps = 1500;
        c.eval_every = 500;
        c.eval_episodes = 1;
        c.agent.high.sac.hidden = alloc::vec![8];
        c.agent.low.sac.hidden = alloc::vec![8];
        c.agent.high.sac.batch_size = 8;
        c.agent.low.sac.batch_size = 8;
        c
    }

    #[test]
    fn zero_steps_give_no_metrics() {
        let mut c = tiny(Algorithm::Hits);
        c.total_env_steps = 0;
        let (summary, _) = run_training(&c, &mut NullSink).unwrap();
        assert!(summary.metrics.is_empty());
    }

    #[test]
    fn same_seed_same_metrics_and_increasing_steps() {
        let c = tiny(Algorithm::EatGeom);
        let mut a = MemorySink::default();
        let mut b = MemorySink::default();
        run_training(&c, &mut a).unwrap();
        run_training(&c, &mut b).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.metrics.len(), 3);
        assert!(a.metrics.windows(2).all(|w| w[0].env_step < w[1].env_step));
        assert!(a.metrics.iter().all(|m| (0.0..=1.0).contains(&m.success_rate)));
    }

    #[test]
    fn never_firing_monitor_matches_the_variable_discount_baseline() {
        let base = tiny(Algorithm::HitsVariableDiscount);
        let mut geom = base.clone();
        geom.algorithm = Algorithm::EatGeom;
        geom.strategy = Some(crate::eat::StrategyConfig::Geometric { alpha: 2.0 });
        let mut q = base.clone();
        q.algorithm = Algorithm::EatQ;
        q.strategy = Some(crate::eat::StrategyConfig::QBased { alpha: f64::INFINITY, beta: 0.999 });
        let run = |c: &ExperimentConfig| {
            let mut s = MemorySink::default();
            let (_, m) = run_training(c, &mut s).unwrap();
            (s.metrics, m.high.actor.params().to_vec())
        };
        let reference = run(&base);
        assert_eq!(run(&geom), reference);
        assert_eq!(run(&q), reference);
    }

    #[test]
    fn trace_records_round_trip_shape() {
        let mut c = tiny(Algorithm::EatGeom);
        c.trace_training = true;
        let mut s = MemorySink::default();
        run_training(&c, &mut s).unwrap();
        assert!(s.traces.iter().any(|t| matches!(t.kind, TraceKind::Outcome { .. })));
    }
}
