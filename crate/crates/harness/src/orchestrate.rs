//! Independent training runs on a bounded pool of threads.

use eat_hrl_core::config::ExperimentConfig;
use eat_hrl_core::runner::{run_training, MemorySink, RunError, RunSummary, TrainedModel};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

pub const THREADS_VAR: &str = "EAT_HRL_THREADS";

/// Worker count from `EAT_HRL_THREADS`, else the available parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_VAR)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

pub struct RunOutput {
    pub summary: RunSummary,
    pub model: TrainedModel,
    pub sink: MemorySink,
    /// Wall time of this run alone.
    pub elapsed: Duration,
}

/// Trains every config, at most `threads` at a time. Results keep input order.
pub fn run_all(configs: &[ExperimentConfig], threads: usize) -> Vec<Result<RunOutput, RunError>> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<RunOutput, RunError>>>> = configs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, configs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let mut sink = MemorySink::default();
                let start = Instant::now();
                let out = run_training(cfg, &mut sink).map(|(summary, model)| RunOutput { summary, model, sink, elapsed: start.elapsed() });
                *slots[i].lock().expect("slot lock") = Some(out);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().expect("slot lock").expect("every run finishes")).collect()
}
