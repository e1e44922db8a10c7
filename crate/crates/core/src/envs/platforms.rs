//! A point agent crosses a pit on two horizontally oscillating platforms.
//!
//! Ledges at both ends and the platforms all sit at height zero. The agent
//! accelerates in the plane but vertical thrust is weaker than gravity, so it
//! only stays up while something supports it. Once it drops below the surface
//! it has fallen for good. In the noisy variant the active platform (the one
//! under the agent, else the nearest one still moving) freezes with a fixed
//! per-step probability, at most `max_freezes` times per episode.

use super::{check_action, EnvError, Environment, EventKind, EventRecord, StepOutcome};
use crate::seeds::{self, Stream};
use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Source of uniform `[0, 1)` draws for freeze decisions.
pub trait UnitDraws: Send {
    fn draw(&mut self, step: u64) -> f64;
}

impl UnitDraws for Stream {
    fn draw(&mut self, _step: u64) -> f64 {
        self.random::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlatformsConfig {
    pub horizon: u64,
    pub centers: [f64; 2],
    pub phases: [f64; 2],
    pub amplitude: f64,
    /// Angular frequency per step.
    pub omega: f64,
    pub half_width: f64,
    pub left_ledge_end: f64,
    pub right_ledge_start: f64,
    /// Success once supported beyond this coordinate.
    pub goal_x: f64,
    pub accel: f64,
    pub friction: f64,
    pub gravity: f64,
    pub vertical_accel: f64,
    pub freeze_probability: f64,
    pub max_freezes: u32,
    pub velocity_scale: f64,
}

impl Default for PlatformsConfig {
    fn default() -> Self {
        Self {
            horizon: 600,
            centers: [0.35, 0.65],
            phases: [0.0, PI],
            amplitude: 0.1,
            omega: 2.0 * PI / 120.0,
            half_width: 0.06,
            left_ledge_end: 0.2,
            right_ledge_start: 0.8,
            goal_x: 0.85,
            accel: 0.005,
            friction: 0.1,
            gravity: 0.004,
            vertical_accel: 0.002,
            freeze_probability: 0.005,
            max_freezes: 2,
            velocity_scale: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlatformsState {
    pub agent_position: [f64; 2],
    pub agent_velocity: [f64; 2],
    pub platform_phases: [f64; 2],
    pub platform_positions: [f64; 2],
    pub frozen: [bool; 2],
    pub freeze_count: u32,
    pub time: u64,
    pub fallen: bool,
}

pub struct Platforms {
    cfg: PlatformsConfig,
    noisy: bool,
    state: PlatformsState,
    draws: Box<dyn UnitDraws>,
    stubbed: bool,
    done: bool,
}

impl core::fmt::Debug for Platforms {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Platforms").field("noisy", &self.noisy).field("state", &self.state).finish()
    }
}

impl Platforms {
    pub fn new(cfg: PlatformsConfig, noisy: bool) -> Self {
        let state = Self::initial_state(&cfg);
        let draws: Box<dyn UnitDraws> = Box::new(seeds::stream(0, seeds::FREEZE));
        Self { cfg, noisy, state, draws, stubbed: false, done: false }
    }

    /// Replaces the freeze stream; `reset` keeps the replacement.
    pub fn with_freeze_draws(mut self, draws: Box<dyn UnitDraws>) -> Self {
        self.draws = draws;
        self.stubbed = true;
        self
    }

    pub fn state(&self) -> &PlatformsState {
        &self.state
    }

    fn initial_state(cfg: &PlatformsConfig) -> PlatformsState {
        let positions = [0, 1].map(|k| cfg.centers[k] + cfg.amplitude * libm::sin(cfg.phases[k]));
        PlatformsState {
            agent_position: [0.1, 0.0],
            agent_velocity: [0.0, 0.0],
            platform_phases: cfg.phases,
            platform_positions: positions,
            frozen: [false, false],
            freeze_count: 0,
            time: 0,
            fallen: false,
        }
    }

    fn platform_at(&self, k: usize, t: u64) -> f64 {
        self.cfg.centers[k] + self.cfg.amplitude * libm::sin(self.cfg.omega * t as f64 + self.state.platform_phases[k])
    }

    fn supporting_platform(&self, x: f64) -> Option<usize> {
        (0..2).find(|&k| (x - self.state.platform_positions[k]).abs() <= self.cfg.half_width)
    }

    fn on_ledge(&self, x: f64) -> bool {
        x <= self.cfg.left_ledge_end || x >= self.cfg.right_ledge_start
    }

    /// The platform under the agent, otherwise the nearest one still moving.
    pub fn active_platform(&self) -> Option<usize> {
        let x = self.state.agent_position[0];
        if let Some(k) = self.supporting_platform(x) {
            if !self.state.frozen[k] {
                return Some(k);
            }
        }
        (0..2)
            .filter(|&k| !self.state.frozen[k])
            .min_by(|&a, &b| {
                let da = (x - self.state.platform_positions[a]).abs();
                let db = (x - self.state.platform_positions[b]).abs();
                da.partial_cmp(&db).unwrap_or(core::cmp::Ordering::Equal)
            })
    }

    fn observe(&self) -> Vec<f64> {
        let s = &self.state;
        let vs = self.cfg.velocity_scale;
        vec![
            s.agent_position[0],
            s.agent_position[1],
            s.agent_velocity[0] * vs,
            s.agent_velocity[1] * vs,
            s.platform_positions[0],
            s.platform_positions[1],
            if s.frozen[0] { 1.0 } else { 0.0 },
            if s.frozen[1] { 1.0 } else { 0.0 },
        ]
    }

    pub fn step_accel(&mut self, action: [f64; 2]) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let a = action.map(|v| v.clamp(-1.0, 1.0));
        let mut events = Vec::new();
        self.state.time += 1;
        let t = self.state.time;

        if self.noisy && self.state.freeze_count < self.cfg.max_freezes {
            let u = self.draws.draw(t);
            if u < self.cfg.freeze_probability {
                if let Some(k) = self.active_platform() {
                    self.state.frozen[k] = true;
                    self.state.freeze_count += 1;
                    events.push(EventRecord { kind: EventKind::PlatformFrozen, time: t });
                }
            }
        }

        let x0 = self.state.agent_position[0];
        let on_surface = !self.state.fallen && self.state.agent_position[1] >= 0.0;
        let carrier = if on_surface && !self.on_ledge(x0) { self.supporting_platform(x0) } else { None };
        let mut carry = 0.0;
        for k in 0..2 {
            if !self.state.frozen[k] {
                let next = self.platform_at(k, t);
                if carrier == Some(k) {
                    carry = next - self.state.platform_positions[k];
                }
                self.state.platform_positions[k] = next;
            }
        }

        let cfg = &self.cfg;
        let s = &mut self.state;
        s.agent_velocity[0] += cfg.accel * a[0] - cfg.friction * s.agent_velocity[0];
        s.agent_velocity[1] += cfg.vertical_accel * a[1].max(0.0) - cfg.gravity;
        s.agent_position[0] = (s.agent_position[0] + s.agent_velocity[0] + carry).clamp(0.0, 1.0);

        let x = s.agent_position[0];
        let supported_now = on_surface
            && (x <= cfg.left_ledge_end
                || x >= cfg.right_ledge_start
                || (0..2).any(|k| (x - s.platform_positions[k]).abs() <= cfg.half_width));
        if supported_now {
            s.agent_position[1] = 0.0;
            s.agent_velocity[1] = 0.0;
        } else {
            s.agent_position[1] = (s.agent_position[1] + s.agent_velocity[1]).max(-1.0);
            if s.agent_position[1] < 0.0 {
                s.fallen = true;
            }
        }

        let success = supported_now && x >= cfg.goal_x;
        let truncated = !success && t >= cfg.horizon;
        self.done = success || truncated;
        Ok(StepOutcome {
            observation: self.observe(),
            reward: if success { 0.0 } else { -1.0 },
            done: self.done,
            truncated,
            events,
        })
    }
}

impl Environment for Platforms {
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.state = Self::initial_state(&self.cfg);
        if !self.stubbed {
            self.draws = Box::new(seeds::stream(seed, seeds::FREEZE));
        }
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        check_action(action, 2)?;
        self.step_accel([action[0], action[1]])
    }

    fn observation_dim(&self) -> usize {
        8
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn subgoal_dim(&self) -> usize {
        2
    }

    fn subgoal_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0, -1.0], vec![1.0, 0.0])
    }

    fn achieved_projection(&self, observation: &[f64]) -> Vec<f64> {
        observation[..2].to_vec()
    }

    fn agent_view(&self, observation: &[f64]) -> Vec<f64> {
        observation[..4].to_vec()
    }

    fn success(&self, observation: &[f64]) -> bool {
        observation[1] >= 0.0 && observation[0] >= self.cfg.goal_x
    }

    fn horizon(&self) -> u64 {
        self.cfg.horizon
    }
}
