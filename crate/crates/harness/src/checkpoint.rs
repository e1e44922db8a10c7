//! Checkpoint directories: `model.json` describes every tensor, `params.bin`
//! holds them back to back as little-endian `f64`.

use crate::{HarnessError, Result};
use eat_hrl_core::approx::Mlp;
use eat_hrl_core::config::ExperimentConfig;
use eat_hrl_core::eat::{EatMonitor, QStats, TerminationStrategy};
use eat_hrl_core::runner::TrainedModel;
use eat_hrl_core::sac::{CriticPair, Sac};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub layer_sizes: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorState {
    pub mean: f64,
    pub variance: f64,
    pub initialized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub config: ExperimentConfig,
    pub tensors: Vec<TensorEntry>,
    pub alpha_high: f64,
    pub alpha_low: f64,
    pub monitor: Option<MonitorState>,
}

const NETS: [&str; 5] = ["actor", "critic0", "critic1", "target0", "target1"];

fn nets(s: &Sac) -> [&Mlp; 5] {
    [&s.actor, &s.critics.live[0], &s.critics.live[1], &s.critics.target[0], &s.critics.target[1]]
}

pub fn save(dir: &Path, cfg: &ExperimentConfig, model: &TrainedModel) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut tensors = Vec::new();
    let mut bytes = Vec::new();
    for (level, sac) in [("high", &model.high), ("low", &model.low)] {
        for (name, net) in NETS.iter().zip(nets(sac)) {
            tensors.push(TensorEntry {
                name: format!("{level}.{name}"),
                layer_sizes: net.layer_sizes().to_vec(),
                offset: bytes.len() / 8,
                len: net.param_count(),
            });
            for p in net.params() {
                bytes.extend_from_slice(&p.to_le_bytes());
            }
        }
    }
    let monitor = model.monitor.as_ref().and_then(|m| match m.strategy(2) {
        Some(TerminationStrategy::QBased(s)) => Some(MonitorState { mean: s.mean(), variance: s.variance(), initialized: s.initialized() }),
        _ => None,
    });
    let header = CheckpointHeader { config: cfg.clone(), tensors, alpha_high: model.high.alpha(), alpha_low: model.low.alpha(), monitor };
    let path = dir.join("model.json");
    let text = serde_json::to_string_pretty(&header).map_err(|e| HarnessError::Json { path: path.clone(), source: e })?;
    std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    let bin = dir.join("params.bin");
    std::fs::write(&bin, bytes).map_err(|e| HarnessError::io(&bin, e))
}

pub struct Loaded {
    pub config: ExperimentConfig,
    pub model: TrainedModel,
}

pub fn load(dir: &Path) -> Result<Loaded> {
    let path = dir.join("model.json");
    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    let header: CheckpointHeader = serde_json::from_str(&text).map_err(|e| HarnessError::Json { path: path.clone(), source: e })?;
    let bin = dir.join("params.bin");
    let bytes = std::fs::read(&bin).map_err(|e| HarnessError::io(&bin, e))?;
    let bad = |message: String| HarnessError::Checkpoint { path: dir.to_path_buf(), message };
    if bytes.len() % 8 != 0 {
        return Err(bad("params.bin length is not a multiple of 8".into()));
    }
    let flat: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let net = |name: &str| -> Result<Mlp> {
        let t = header.tensors.iter().find(|t| t.name == name).ok_or_else(|| bad(format!("missing tensor {name}")))?;
        let slice = flat.get(t.offset..t.offset + t.len).ok_or_else(|| bad(format!("tensor {name} out of range")))?;
        Mlp::from_parts(&t.layer_sizes, slice.to_vec()).map_err(|e| bad(format!("tensor {name}: {e}")))
    };
    let sac = |level: &str, cfg: &eat_hrl_core::sac::SacConfig, alpha: f64| -> Result<Sac> {
        let critics = CriticPair {
            live: [net(&format!("{level}.critic0"))?, net(&format!("{level}.critic1"))?],
            target: [net(&format!("{level}.target0"))?, net(&format!("{level}.target1"))?],
        };
        Sac::from_networks(cfg.clone(), net(&format!("{level}.actor"))?, critics, alpha).map_err(|e| bad(e.to_string()))
    };
    let cfg = header.config;
    let high = sac("high", &cfg.agent.high.sac, header.alpha_high)?;
    let low = sac("low", &cfg.agent.low.sac, header.alpha_low)?;
    let monitor = match (cfg.strategy, header.monitor) {
        (None, _) => None,
        (Some(eat_hrl_core::eat::StrategyConfig::QBased { alpha, beta }), Some(m)) => {
            let stats = QStats::restore(alpha, beta, m.mean, m.variance, m.initialized).map_err(|e| bad(e.to_string()))?;
            Some(EatMonitor::new(vec![TerminationStrategy::QBased(stats)]))
        }
        (Some(s), _) => Some(EatMonitor::uniform(s, 2).map_err(|e| bad(e.to_string()))?),
    };
    Ok(Loaded { config: cfg, model: TrainedModel { high, low, monitor } })
}
