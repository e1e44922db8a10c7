//! A ship in a one-dimensional channel has to pass a drawbridge.
//!
//! The channel is `[0, 1]`, the bridge sits at `gate`, the goal is reached at
//! `goal`. The bridge starts opening at `t_open` and becomes passable
//! `opening_steps` later. With a `passable_window` it closes again after that
//! many passable steps. A ship that runs into the bridge while it is not
//! passable is held at the gate with zero velocity for `collision_hold`
//! further steps, during which thrust has no effect; `None` holds it for the
//! rest of the episode.

use super::{check_action, EnvError, Environment, EventKind, EventRecord, StepOutcome};
use crate::seeds::{self, Stream};
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DrawbridgeConfig {
    pub horizon: u64,
    pub thrust_gain: f64,
    pub drag: f64,
    pub gate: f64,
    pub goal: f64,
    pub opening_steps: u64,
    /// Deterministic variant opening time.
    pub fixed_opening: u64,
    /// Noisy variant draws uniformly from these.
    pub noisy_openings: Vec<u64>,
    /// Steps the bridge stays passable; `None` keeps it open.
    pub passable_window: Option<u64>,
    pub collision_hold: Option<u64>,
    /// Observation scale for velocity.
    pub velocity_scale: f64,
}

impl Default for DrawbridgeConfig {
    fn default() -> Self {
        Self {
            horizon: 1000,
            thrust_gain: 0.02,
            drag: 0.002,
            gate: 0.5,
            goal: 0.95,
            opening_steps: 63,
            fixed_opening: 400,
            noisy_openings: vec![400, 500, 600],
            passable_window: Some(40),
            collision_hold: Some(150),
            velocity_scale: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawbridgeState {
    pub ship_position: f64,
    pub ship_velocity: f64,
    pub time: u64,
    pub t_open: u64,
    pub openness: f64,
    pub lowered: bool,
    /// Remaining steps the ship is held at the gate.
    pub held: u64,
}

/// Opening time: fixed for the deterministic variant, uniform over the
/// configured choices for the noisy one.
pub fn sample_t_open<R: Rng + ?Sized>(rng: &mut R, noisy: bool, cfg: &DrawbridgeConfig) -> u64 {
    if noisy && !cfg.noisy_openings.is_empty() {
        cfg.noisy_openings[rng.random_range(0..cfg.noisy_openings.len())]
    } else {
        cfg.fixed_opening
    }
}

#[derive(Debug, Clone)]
pub struct Drawbridge {
    cfg: DrawbridgeConfig,
    noisy: bool,
    state: DrawbridgeState,
    done: bool,
}

impl Drawbridge {
    pub fn new(cfg: DrawbridgeConfig, noisy: bool) -> Self {
        let state = DrawbridgeState {
            ship_position: 0.0,
            ship_velocity: 0.0,
            time: 0,
            t_open: cfg.fixed_opening,
            openness: 0.0,
            lowered: false,
            held: 0,
        };
        Self { cfg, noisy, state, done: false }
    }

    pub fn config(&self) -> &DrawbridgeConfig {
        &self.cfg
    }

    pub fn state(&self) -> &DrawbridgeState {
        &self.state
    }

    /// Overrides the drawn opening time for the current episode.
    pub fn set_t_open(&mut self, t_open: u64) {
        self.state.t_open = t_open;
        self.state.openness = self.openness_at(self.state.time);
    }

    pub fn openness_at(&self, t: u64) -> f64 {
        let since = t as f64 - self.state.t_open as f64;
        (since / self.cfg.opening_steps as f64).clamp(0.0, 1.0)
    }

    fn passable_time(&self) -> u64 {
        self.state.t_open + self.cfg.opening_steps
    }

    pub fn passable(&self) -> bool {
        self.state.openness >= 1.0 && !self.state.lowered
    }

    fn observe(&self) -> Vec<f64> {
        let s = &self.state;
        vec![
            s.ship_position,
            s.ship_velocity * self.cfg.velocity_scale,
            s.openness,
            if s.lowered { 1.0 } else { 0.0 },
            self.held_fraction(),
        ]
    }

    /// Remaining hold as a share of the full hold; 1 while held forever.
    fn held_fraction(&self) -> f64 {
        match self.cfg.collision_hold {
            Some(h) if h > 0 && self.state.held < u64::MAX => self.state.held as f64 / h as f64,
            _ => (self.state.held > 0) as u8 as f64,
        }
    }

    /// One step with a thrust in `[-1, 1]`.
    pub fn step_thrust(&mut self, thrust: f64) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let thrust = thrust.clamp(-1.0, 1.0);
        let cfg = &self.cfg;
        let before = self.state.ship_position;
        let mut events = Vec::new();

        self.state.time += 1;
        let t = self.state.time;
        if t == self.state.t_open {
            events.push(EventRecord { kind: EventKind::BridgeOpeningStarted, time: t });
        }
        self.state.openness = self.openness_at(t);
        if t == self.passable_time() {
            events.push(EventRecord { kind: EventKind::BridgePassable, time: t });
        }
        if let Some(window) = self.cfg.passable_window {
            if t == self.passable_time() + window {
                self.state.lowered = true;
                events.push(EventRecord { kind: EventKind::BridgeClosed, time: t });
            }
        }

        if self.state.held > 0 {
            self.state.held -= 1;
        } else {
            let s = &mut self.state;
            s.ship_velocity += cfg.thrust_gain * thrust - cfg.drag * s.ship_velocity;
            s.ship_position += s.ship_velocity;
            if s.ship_position < 0.0 {
                s.ship_position = 0.0;
                s.ship_velocity = 0.0;
            } else if s.ship_position > 1.0 {
                s.ship_position = 1.0;
                s.ship_velocity = 0.0;
            }
        }
        let passable = self.passable();
        let gate = self.cfg.gate;
        let s = &mut self.state;
        if before <= gate && s.ship_position > gate && !passable {
            s.ship_position = gate;
            s.ship_velocity = 0.0;
            s.held = self.cfg.collision_hold.unwrap_or(u64::MAX);
        }

        let success = s.ship_position >= self.cfg.goal;
        let truncated = !success && t >= self.cfg.horizon;
        self.done = success || truncated;
        Ok(StepOutcome {
            observation: self.observe(),
            reward: if success { 0.0 } else { -1.0 },
            done: self.done,
            truncated,
            events,
        })
    }

    #[cfg(test)]
    pub(crate) fn state_mut(&mut self) -> &mut DrawbridgeState {
        &mut self.state
    }
}

impl Environment for Drawbridge {
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng: Stream = seeds::stream(seed, seeds::OPENING);
        let t_open = sample_t_open(&mut rng, self.noisy, &self.cfg);
        self.state = DrawbridgeState {
            ship_position: 0.0,
            ship_velocity: 0.0,
            time: 0,
            t_open,
            openness: 0.0,
            lowered: false,
            held: 0,
        };
        self.state.openness = self.openness_at(0);
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        check_action(action, 1)?;
        self.step_thrust(action[0])
    }

    fn observation_dim(&self) -> usize {
        5
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn subgoal_dim(&self) -> usize {
        1
    }

    fn subgoal_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0], vec![1.0])
    }

    fn achieved_projection(&self, observation: &[f64]) -> Vec<f64> {
        vec![observation[0]]
    }

    /// Position, velocity and the remaining hold; the bridge is hidden.
    fn agent_view(&self, observation: &[f64]) -> Vec<f64> {
        vec![observation[0], observation[1], observation[4]]
    }

    fn success(&self, observation: &[f64]) -> bool {
        observation[0] >= self.cfg.goal
    }

    fn horizon(&self) -> u64 {
        self.cfg.horizon
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn env(noisy: bool) -> Drawbridge {
        let mut e = Drawbridge::new(DrawbridgeConfig::default(), noisy);
        e.reset(0);
        e
    }

    #[test]
    fn closed_before_opening() {
        let mut e = env(false);
        for _ in 0..399 {
            e.step_thrust(-1.0).unwrap();
            assert_eq!(e.state().openness, 0.0);
        }
    }

    #[test]
    fn opening_takes_exactly_63_steps() {
        let mut e = env(false);
        let t_open = e.state().t_open;
        let mut started = None;
        let mut passable = None;
        let mut prev = 0.0;
        for _ in 0..600 {
            let o = e.step_thrust(-1.0).unwrap();
            let s = e.state();
            assert!(s.openness >= prev);
            prev = s.openness;
            for ev in o.events {
                match ev.kind {
                    EventKind::BridgeOpeningStarted => started = Some(ev.time),
                    EventKind::BridgePassable => {
                        passable = Some(ev.time);
                        assert_eq!(s.openness, 1.0);
                    }
                    _ => {}
                }
            }
            if s.time == t_open + 62 {
                assert!(s.openness < 1.0);
            }
        }
        assert_eq!(started, Some(t_open));
        assert_eq!(passable, Some(t_open + 63));
    }

    #[test]
    fn ship_pinned_at_closed_gate() {
        let mut e = env(false);
        assert_eq!(e.state().t_open, 400);
        for _ in 0..100 {
            e.step_thrust(1.0).unwrap();
        }
        let s = e.state();
        assert_eq!(s.time, 100);
        assert_eq!(s.ship_position, 0.5);
        assert_eq!(s.ship_velocity, 0.0);
        assert!(s.held > 0);
    }

    #[test]
    fn held_ship_is_released_after_the_hold() {
        let cfg = DrawbridgeConfig { collision_hold: Some(5), ..Default::default() };
        let mut e = Drawbridge::new(cfg, false);
        e.reset(0);
        let mut t_hit = None;
        for _ in 0..20 {
            e.step_thrust(1.0).unwrap();
            if t_hit.is_none() && e.state().held > 0 {
                t_hit = Some(e.state().time);
            }
        }
        let t_hit = t_hit.unwrap();
        // Thrust is ignored for 5 steps, the next step collides again.
        let mut e = Drawbridge::new(DrawbridgeConfig { collision_hold: Some(5), ..Default::default() }, false);
        e.reset(0);
        for _ in 0..t_hit + 5 {
            e.step_thrust(1.0).unwrap();
        }
        assert_eq!(e.state().held, 0);
        assert_eq!(e.state().ship_velocity, 0.0);
        let o = e.step_thrust(1.0).unwrap();
        assert_eq!(e.state().held, 5);
        assert_eq!(o.observation[4], 1.0);
        assert_eq!(e.state().ship_position, 0.5);
        let o = e.step_thrust(1.0).unwrap();
        assert!((o.observation[4] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn released_ship_passes_an_open_bridge() {
        let cfg = DrawbridgeConfig { collision_hold: Some(3), ..Default::default() };
        let mut e = Drawbridge::new(cfg, false);
        e.reset(0);
        e.state_mut().ship_position = 0.5;
        e.state_mut().held = 1;
        e.state_mut().time = 463;
        e.state_mut().openness = 1.0;
        e.step_thrust(1.0).unwrap();
        assert_eq!(e.state().ship_position, 0.5);
        e.step_thrust(1.0).unwrap();
        assert!(e.state().ship_position > 0.5);
    }

    #[test]
    fn euler_update_matches_hand_recurrence() {
        // Independent recurrence: v1 = 0.02, x1 = 0.02; v2 = 0.02 + 0.02 - 0.002*0.02, x2 = x1 + v2.
        let mut e = env(false);
        e.step_thrust(1.0).unwrap();
        e.step_thrust(1.0).unwrap();
        let v2 = 0.02 + 0.02 - 0.002 * 0.02;
        assert!((e.state().ship_velocity - v2).abs() < 1e-15);
        assert!((e.state().ship_position - (0.02 + v2)).abs() < 1e-15);
    }

    #[test]
    fn pinned_ship_passes_when_collision_is_harmless() {
        let cfg = DrawbridgeConfig { collision_hold: Some(0), passable_window: None, ..Default::default() };
        let mut e = Drawbridge::new(cfg, false);
        e.reset(0);
        let mut outcome = None;
        for _ in 0..1000 {
            let o = e.step_thrust(1.0).unwrap();
            if o.done {
                outcome = Some((e.state().time, o));
                break;
            }
        }
        let (t, o) = outcome.unwrap();
        assert!(!o.truncated);
        assert!(t > 463 && t < 480, "{t}");
    }

    #[test]
    fn lowered_bridge_blocks_again() {
        let mut e = env(false);
        for _ in 0..(400 + 63 + 40) {
            e.step_thrust(-1.0).unwrap();
        }
        assert!(e.state().lowered);
        assert!(!e.passable());
        assert_eq!(e.state().openness, 1.0);
    }

    #[test]
    fn reward_and_success() {
        let mut e = env(false);
        e.state_mut().ship_position = 0.9;
        e.state_mut().t_open = 0;
        e.state_mut().time = 70;
        e.state_mut().openness = 1.0;
        let o = e.step_thrust(1.0).unwrap();
        assert_eq!(o.reward, -1.0);
        e.state_mut().ship_velocity = 0.1;
        let o = e.step_thrust(1.0).unwrap();
        assert!(o.done && !o.truncated);
        assert_eq!(o.reward, 0.0);
        assert!(e.success(&o.observation));
    }

    #[test]
    fn opening_times() {
        let cfg = DrawbridgeConfig::default();
        let mut rng = Stream::seed_from_u64(5);
        assert_eq!(sample_t_open(&mut rng, false, &cfg), 400);
        let n = 30_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            match sample_t_open(&mut rng, true, &cfg) {
                400 => counts[0] += 1,
                500 => counts[1] += 1,
                600 => counts[2] += 1,
                other => panic!("unexpected opening {other}"),
            }
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.02);
        }
    }
}
