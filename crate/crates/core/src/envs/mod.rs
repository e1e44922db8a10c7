//! Benchmark environments behind one contract.
//!
//! Actions are always normalized to `[-1, 1]` per dimension; each environment
//! scales them to its own units. Random occurrences (bridge opening, platform
//! freeze) are reported through [`StepOutcome::events`] so that traces can be
//! analyzed after the fact.

mod drawbridge;
mod pendulum;
mod platforms;

pub use drawbridge::{sample_t_open, Drawbridge, DrawbridgeConfig, DrawbridgeState};
pub use pendulum::{Pendulum, PendulumConfig, PendulumState};
pub use platforms::{Platforms, PlatformsConfig, PlatformsState, UnitDraws};

use alloc::boxed::Box;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("episode is done; reset before stepping")]
    EpisodeDone,
    #[error("action has dimension {got}, expected {expected}")]
    ActionDim { expected: usize, got: usize },
    #[error("non-finite action component")]
    NonFiniteAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    BridgeOpeningStarted,
    BridgePassable,
    BridgeClosed,
    PlatformFrozen,
}

impl EventKind {
    /// Events drawn from the environment's random stream. Derived events
    /// (the bridge finishing its opening, or closing again) are not.
    pub fn is_random(self) -> bool {
        matches!(self, EventKind::BridgeOpeningStarted | EventKind::PlatformFrozen)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub kind: EventKind,
    pub time: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// No further steps are accepted until reset.
    pub done: bool,
    /// `done` because the horizon ran out rather than because the episode
    /// reached a terminal state.
    pub truncated: bool,
    pub events: Vec<EventRecord>,
}

impl StepOutcome {
    pub fn terminated(&self) -> bool {
        self.done && !self.truncated
    }
}

/// Common environment contract.
pub trait Environment {
    /// Starts a new episode. Equal seeds give bit-identical episodes under
    /// identical action sequences.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError>;

    fn observation_dim(&self) -> usize;

    fn action_dim(&self) -> usize;

    /// Dimension of the state projection that timed subgoals target.
    fn subgoal_dim(&self) -> usize;

    /// Per-dimension `(low, high)` bounds of the projection space.
    fn subgoal_bounds(&self) -> (Vec<f64>, Vec<f64>);

    /// Projection `x(s)` of an observation. Pure.
    fn achieved_projection(&self, observation: &[f64]) -> Vec<f64>;

    /// The part of the observation the agent directly controls. The low level
    /// is conditioned on this view only; random environment elements are for
    /// the high level to react to.
    fn agent_view(&self, observation: &[f64]) -> Vec<f64>;

    fn success(&self, observation: &[f64]) -> bool;

    fn horizon(&self) -> u64;
}

pub(crate) fn check_action(action: &[f64], dim: usize) -> Result<(), EnvError> {
    if action.len() != dim {
        return Err(EnvError::ActionDim { expected: dim, got: action.len() });
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(EnvError::NonFiniteAction);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvName {
    Pendulum,
    Drawbridge,
    NoisyDrawbridge,
    Platforms,
    NoisyPlatforms,
}

impl EnvName {
    pub const ALL: [EnvName; 5] = [
        EnvName::Pendulum,
        EnvName::Drawbridge,
        EnvName::NoisyDrawbridge,
        EnvName::Platforms,
        EnvName::NoisyPlatforms,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::Pendulum => "Pendulum",
            EnvName::Drawbridge => "Drawbridge",
            EnvName::NoisyDrawbridge => "NoisyDrawbridge",
            EnvName::Platforms => "Platforms",
            EnvName::NoisyPlatforms => "NoisyPlatforms",
        }
    }
}

/// Physics overrides, one block per environment family.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub drawbridge: DrawbridgeConfig,
    pub platforms: PlatformsConfig,
    pub pendulum: PendulumConfig,
}

pub type DynEnv = Box<dyn Environment + Send>;

pub fn make_env(name: EnvName, physics: &PhysicsConfig) -> DynEnv {
    match name {
        EnvName::Pendulum => Box::new(Pendulum::new(physics.pendulum.clone())),
        EnvName::Drawbridge => Box::new(Drawbridge::new(physics.drawbridge.clone(), false)),
        EnvName::NoisyDrawbridge => Box::new(Drawbridge::new(physics.drawbridge.clone(), true)),
        EnvName::Platforms => Box::new(Platforms::new(physics.platforms.clone(), false)),
        EnvName::NoisyPlatforms => Box::new(Platforms::new(physics.platforms.clone(), true)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rollout(env: &mut DynEnv, seed: u64, actions: &[Vec<f64>]) -> Vec<(Vec<f64>, f64, Vec<EventRecord>)> {
        let mut out = vec![(env.reset(seed), 0.0, vec![])];
        for a in actions {
            let o = env.step(a).unwrap();
            let done = o.done;
            out.push((o.observation, o.reward, o.events));
            if done {
                break;
            }
        }
        out
    }

    #[test]
    fn every_env_is_deterministic_per_seed() {
        let physics = PhysicsConfig::default();
        for name in EnvName::ALL {
            let mut env = make_env(name, &physics);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let actions: Vec<Vec<f64>> = (0..700)
                .map(|_| (0..env.action_dim()).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let a = rollout(&mut env, 42, &actions);
            let b = rollout(&mut env, 42, &actions);
            assert_eq!(a, b, "{name:?}");
        }
    }

    #[test]
    fn event_times_strictly_increase_and_match_steps() {
        let physics = PhysicsConfig::default();
        for name in EnvName::ALL {
            let mut env = make_env(name, &physics);
            for seed in 0..5 {
                env.reset(seed);
                let mut last = None;
                let mut t = 0;
                loop {
                    let o = env.step(&vec![0.0; env.action_dim()]).unwrap();
                    t += 1;
                    for e in &o.events {
                        assert_eq!(e.time, t, "{name:?}");
                        if let Some(prev) = last {
                            assert!(e.time > prev || o.events.len() > 1);
                        }
                        last = Some(e.time);
                    }
                    if o.done {
                        break;
                    }
                }
            }
        }
    }

    #[test]
    fn stepping_after_done_is_rejected() {
        let physics = PhysicsConfig::default();
        for name in EnvName::ALL {
            let mut env = make_env(name, &physics);
            env.reset(3);
            let zero = vec![0.0; env.action_dim()];
            while !env.step(&zero).unwrap().done {}
            assert_eq!(env.step(&zero), Err(EnvError::EpisodeDone), "{name:?}");
        }
    }

    #[test]
    fn action_shape_checked() {
        let mut env = make_env(EnvName::Platforms, &PhysicsConfig::default());
        env.reset(0);
        assert_eq!(env.step(&[0.0]), Err(EnvError::ActionDim { expected: 2, got: 1 }));
        assert_eq!(env.step(&[0.0, f64::NAN]), Err(EnvError::NonFiniteAction));
    }

    #[test]
    fn projection_matches_declared_dim() {
        let physics = PhysicsConfig::default();
        for name in EnvName::ALL {
            let mut env = make_env(name, &physics);
            let obs = env.reset(9);
            assert_eq!(obs.len(), env.observation_dim());
            let p = env.achieved_projection(&obs);
            assert_eq!(p.len(), env.subgoal_dim());
            assert_eq!(p, env.achieved_projection(&obs.clone()));
            let (lo, hi) = env.subgoal_bounds();
            assert_eq!(lo.len(), p.len());
            assert!(lo.iter().zip(&hi).all(|(l, h)| l < h));
        }
    }
}
