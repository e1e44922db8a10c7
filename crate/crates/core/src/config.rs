//! Experiment configuration and the shipped profiles.
//!
//! `paper` profiles transcribe the published hyperparameter tables. `desk`
//! profiles keep their structure but shrink budgets and retune learning rates
//! for single-core runs; their step budgets are our own choice.

use crate::eat::{StrategyConfig, DEFAULT_BETA};
use crate::envs::{EnvName, PhysicsConfig};
use crate::hits::{AgentConfig, DeadlineRule, LevelConfig, RelabelConfig};
use crate::sac::{DiscountMode, EntropyConfig, SacConfig};
use alloc::vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{algorithm:?} does not take a termination strategy")]
    UnexpectedStrategy { algorithm: Algorithm },
    #[error("{algorithm:?} needs a {expected} termination strategy")]
    MissingStrategy { algorithm: Algorithm, expected: &'static str },
    #[error("{algorithm:?} needs the {expected:?} discount mode at the high level")]
    DiscountMode { algorithm: Algorithm, expected: DiscountMode },
    #[error("eval_every must be positive")]
    EvalCadence,
    #[error(transparent)]
    Agent(#[from] crate::hits::AgentError),
    #[error(transparent)]
    Strategy(#[from] crate::eat::EatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "HiTS")]
    Hits,
    #[serde(rename = "HiTS+VariableDiscountSAC")]
    HitsVariableDiscount,
    #[serde(rename = "EAT(Q)")]
    EatQ,
    #[serde(rename = "EAT(geom)")]
    EatGeom,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Hits, Algorithm::HitsVariableDiscount, Algorithm::EatQ, Algorithm::EatGeom];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Hits => "HiTS",
            Algorithm::HitsVariableDiscount => "HiTS+VariableDiscountSAC",
            Algorithm::EatQ => "EAT(Q)",
            Algorithm::EatGeom => "EAT(geom)",
        }
    }

    /// File-name friendly label.
    pub fn slug(self) -> &'static str {
        match self {
            Algorithm::Hits => "hits",
            Algorithm::HitsVariableDiscount => "hits-vd",
            Algorithm::EatQ => "eat-q",
            Algorithm::EatGeom => "eat-geom",
        }
    }

    pub fn high_discount_mode(self) -> DiscountMode {
        match self {
            Algorithm::Hits => DiscountMode::PerDecision,
            _ => DiscountMode::ElapsedTime,
        }
    }

    /// The strategy used in the published experiments.
    pub fn default_strategy(self) -> Option<StrategyConfig> {
        match self {
            Algorithm::EatQ => Some(StrategyConfig::QBased { alpha: 0.5, beta: DEFAULT_BETA }),
            Algorithm::EatGeom => Some(StrategyConfig::Geometric { alpha: 1.0 }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Desk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvName,
    pub algorithm: Algorithm,
    pub agent: AgentConfig,
    #[serde(default)]
    pub strategy: Option<StrategyConfig>,
    pub total_env_steps: u64,
    /// Environment steps between evaluation points.
    pub eval_every: u64,
    pub eval_episodes: u32,
    pub master_seed: u64,
    #[serde(default)]
    pub physics: PhysicsConfig,
    /// Stream training-episode traces as well as evaluation traces.
    #[serde(default)]
    pub trace_training: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.agent.validate()?;
        if self.eval_every == 0 {
            return Err(ConfigError::EvalCadence);
        }
        let a = self.algorithm;
        match (a, self.strategy) {
            (Algorithm::Hits | Algorithm::HitsVariableDiscount, Some(_)) => return Err(ConfigError::UnexpectedStrategy { algorithm: a }),
            (Algorithm::EatQ, Some(StrategyConfig::QBased { .. })) | (Algorithm::EatGeom, Some(StrategyConfig::Geometric { .. })) => {}
            (Algorithm::EatQ, _) => return Err(ConfigError::MissingStrategy { algorithm: a, expected: "QBased" }),
            (Algorithm::EatGeom, _) => return Err(ConfigError::MissingStrategy { algorithm: a, expected: "Geometric" }),
            _ => {}
        }
        if let Some(s) = self.strategy {
            s.build()?;
        }
        if self.agent.high.sac.discount_mode != a.high_discount_mode() {
            return Err(ConfigError::DiscountMode { algorithm: a, expected: a.high_discount_mode() });
        }
        Ok(())
    }

    /// Shipped configuration for one environment and algorithm.
    pub fn profile(profile: Profile, environment: EnvName, algorithm: Algorithm, master_seed: u64) -> Self {
        match profile {
            Profile::Paper => paper(environment, algorithm, master_seed),
            Profile::Desk => desk(environment, algorithm, master_seed),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn level(
    lr: f64,
    entropy: EntropyConfig,
    tau: f64,
    batch: usize,
    grad_ratio: f64,
    learning_start: u64,
    hidden: &[usize],
    discount: f64,
    mode: DiscountMode,
    deterministic: f64,
) -> LevelConfig {
    LevelConfig {
        sac: SacConfig {
            discount,
            discount_mode: mode,
            entropy,
            tau,
            learning_rate: lr,
            batch_size: batch,
            grad_steps_per_env_step: grad_ratio,
            hidden: hidden.to_vec(),
            reward_scale: 1.0,
            learning_start,
            replay_capacity: 1_000_000,
            initial_value: 0.0,
        },
        random_action_fraction: 0.05,
        deterministic_fraction: deterministic,
    }
}

fn high_discount(environment: EnvName, algorithm: Algorithm) -> f64 {
    match (algorithm, environment) {
        (Algorithm::Hits, EnvName::Pendulum) => 0.99,
        (Algorithm::Hits, _) => 0.97,
        _ => 0.999,
    }
}

/// Longest timed subgoal per environment.
pub fn max_budget(environment: EnvName) -> u32 {
    match environment {
        EnvName::Drawbridge | EnvName::NoisyDrawbridge => 200,
        EnvName::Platforms | EnvName::NoisyPlatforms => 100,
        EnvName::Pendulum => 40,
    }
}

/// Low-level discount; the tables leave it open.
const LOW_DISCOUNT: f64 = 0.95;

fn paper(environment: EnvName, algorithm: Algorithm, master_seed: u64) -> ExperimentConfig {
    let mode = algorithm.high_discount_mode();
    let hd = high_discount(environment, algorithm);
    let h32 = [32, 32];
    let (high, low, max_actions, low_goals, tolerance, total) = match environment {
        EnvName::Drawbridge | EnvName::NoisyDrawbridge => {
            let lr = 7.227658105394519e-5;
            let tau = 3.143822236379807e-1;
            (
                level(lr, EntropyConfig::Fixed { alpha: 2.0709754482693517e-2 }, tau, 256, 1.0, 0, &h32, hd, mode, 0.0),
                level(lr, EntropyConfig::Fixed { alpha: 5.413320369694484e-2 }, tau, 256, 1.0, 0, &h32, LOW_DISCOUNT, DiscountMode::ElapsedTime, 0.3),
                5,
                3,
                0.05,
                1_000_000,
            )
        }
        EnvName::Platforms | EnvName::NoisyPlatforms => {
            let lr = 1.940204674106782e-4;
            let tau = 2.1421017364015173e-2;
            (
                level(lr, EntropyConfig::Fixed { alpha: 4.189083521541997e-3 }, tau, 512, 0.5, 20_000, &h32, hd, mode, 0.0),
                level(lr, EntropyConfig::Fixed { alpha: 1.1172711243974338 }, tau, 512, 0.5, 20_000, &h32, LOW_DISCOUNT, DiscountMode::ElapsedTime, 0.3),
                10,
                3,
                0.05,
                2_000_000,
            )
        }
        EnvName::Pendulum => {
            let lr = 6.441137873509102e-3;
            let tau = 1.258608875021e-2;
            let auto = EntropyConfig::Auto { target_entropy: -2.60162130869488, learning_rate: 6.441137873509102e-3, initial_alpha: 1.0 };
            (
                level(lr, EntropyConfig::Fixed { alpha: 2.525263906546272 }, tau, 256, 1.0, 0, &h32, hd, mode, 0.0),
                level(lr, auto, tau, 256, 1.0, 0, &h32, LOW_DISCOUNT, DiscountMode::ElapsedTime, 0.3),
                22,
                6,
                0.1,
                500_000,
            )
        }
    };
    ExperimentConfig {
        environment,
        algorithm,
        agent: AgentConfig {
            high,
            low,
            max_budget: max_budget(environment),
            max_high_actions: Some(max_actions),
            relabel: RelabelConfig { hindsight_goals: low_goals, tolerance },
            hindsight_action: true,
            keep_executed_action: true,
            deadline_rule: DeadlineRule::AtDeadline,
            interrupted_terminal: false,
            timeout_step_reward: None,
        },
        strategy: algorithm.default_strategy(),
        total_env_steps: total,
        eval_every: total / 10,
        eval_episodes: 20,
        master_seed,
        physics: PhysicsConfig::default(),
        trace_training: false,
    }
}

fn desk(environment: EnvName, algorithm: Algorithm, master_seed: u64) -> ExperimentConfig {
    let mut cfg = paper(environment, algorithm, master_seed);
    let total = match environment {
        EnvName::Drawbridge | EnvName::NoisyDrawbridge => 300_000,
        EnvName::Platforms | EnvName::NoisyPlatforms => 300_000,
        EnvName::Pendulum => 100_000,
    };
    cfg.total_env_steps = total;
    cfg.eval_every = total / 10;
    for (lvl, scale) in [(&mut cfg.agent.high, 0.01), (&mut cfg.agent.low, 0.1)] {
        lvl.sac.learning_rate = 1e-3;
        lvl.sac.batch_size = 64;
        lvl.sac.tau = 0.05;
        lvl.sac.learning_start = 0;
        lvl.sac.replay_capacity = 200_000;
        lvl.sac.reward_scale = scale;
        if let EntropyConfig::Fixed { alpha } = &mut lvl.sac.entropy {
            *alpha *= scale;
        }
    }
    cfg.agent.low.sac.grad_steps_per_env_step = 0.25;
    cfg.agent.high.sac.grad_steps_per_env_step = 0.05;
    cfg.agent.high.sac.hidden = vec![64, 64];
    cfg.agent.deadline_rule = DeadlineRule::FirstTouch;
    cfg.agent.timeout_step_reward = Some(-1.0);
    cfg
}
