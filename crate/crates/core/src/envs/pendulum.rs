//! Classical torque-limited pendulum swing-up. `theta = 0` is upright.

use super::{check_action, EnvError, Environment, StepOutcome};
use crate::seeds;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PendulumConfig {
    pub horizon: u64,
    pub dt: f64,
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    pub success_angle: f64,
    pub success_speed: f64,
    pub success_streak: u32,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            horizon: 300,
            dt: 0.05,
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            max_torque: 2.0,
            max_speed: 8.0,
            success_angle: 0.15,
            success_speed: 0.5,
            success_streak: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumState {
    pub theta: f64,
    pub theta_dot: f64,
    pub streak: u32,
    pub time: u64,
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = libm::fmod(theta + PI, 2.0 * PI);
    if t < 0.0 { t + PI } else { t - PI }
}

#[derive(Debug, Clone)]
pub struct Pendulum {
    cfg: PendulumConfig,
    state: PendulumState,
    done: bool,
}

impl Pendulum {
    pub fn new(cfg: PendulumConfig) -> Self {
        Self { cfg, state: PendulumState { theta: PI, theta_dot: 0.0, streak: 0, time: 0 }, done: false }
    }

    pub fn state(&self) -> &PendulumState {
        &self.state
    }

    pub fn set_state(&mut self, theta: f64, theta_dot: f64) {
        self.state.theta = theta;
        self.state.theta_dot = theta_dot;
        self.state.streak = 0;
        self.done = false;
    }

    fn observe(&self) -> Vec<f64> {
        let s = &self.state;
        vec![
            libm::cos(s.theta),
            libm::sin(s.theta),
            s.theta_dot / self.cfg.max_speed,
            s.streak as f64 / self.cfg.success_streak as f64,
        ]
    }

    /// One semi-implicit Euler step with torque in `[-max_torque, max_torque]`.
    pub fn step_torque(&mut self, torque: f64) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let c = &self.cfg;
        let u = torque.clamp(-c.max_torque, c.max_torque);
        let s = &mut self.state;
        let th = wrap_angle(s.theta);
        let reward = -(th * th + 0.1 * s.theta_dot * s.theta_dot + 0.001 * u * u);
        let acc = 3.0 * c.gravity / (2.0 * c.length) * libm::sin(s.theta) + 3.0 / (c.mass * c.length * c.length) * u;
        s.theta_dot = (s.theta_dot + acc * c.dt).clamp(-c.max_speed, c.max_speed);
        s.theta += s.theta_dot * c.dt;
        s.time += 1;
        if wrap_angle(s.theta).abs() < c.success_angle && s.theta_dot.abs() < c.success_speed {
            s.streak += 1;
        } else {
            s.streak = 0;
        }
        let success = s.streak >= c.success_streak;
        let truncated = !success && s.time >= c.horizon;
        self.done = success || truncated;
        Ok(StepOutcome { observation: self.observe(), reward, done: self.done, truncated, events: Vec::new() })
    }
}

impl Environment for Pendulum {
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = seeds::stream(seed, seeds::ENVIRONMENT);
        self.state = PendulumState {
            theta: rng.random_range(-PI..PI),
            theta_dot: rng.random_range(-1.0..1.0),
            streak: 0,
            time: 0,
        };
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        check_action(action, 1)?;
        self.step_torque(action[0].clamp(-1.0, 1.0) * self.cfg.max_torque)
    }

    fn observation_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn subgoal_dim(&self) -> usize {
        2
    }

    fn subgoal_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-PI, -1.0], vec![PI, 1.0])
    }

    fn achieved_projection(&self, observation: &[f64]) -> Vec<f64> {
        vec![libm::atan2(observation[1], observation[0]), observation[2]]
    }

    fn agent_view(&self, observation: &[f64]) -> Vec<f64> {
        observation.to_vec()
    }

    fn success(&self, observation: &[f64]) -> bool {
        observation[3] >= 1.0
    }

    fn horizon(&self) -> u64 {
        self.cfg.horizon
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pendulum() -> Pendulum {
        let mut p = Pendulum::new(PendulumConfig::default());
        p.reset(0);
        p
    }

    #[test]
    fn upright_equilibrium_is_fixed() {
        let mut p = pendulum();
        p.set_state(0.0, 0.0);
        let o = p.step_torque(0.0).unwrap();
        assert_eq!(p.state().theta, 0.0);
        assert_eq!(p.state().theta_dot, 0.0);
        assert_eq!(o.reward, 0.0);
    }

    #[test]
    fn hanging_equilibrium_stays() {
        let mut p = pendulum();
        p.set_state(PI, 0.0);
        p.step_torque(0.0).unwrap();
        // sin(pi) is 1.2e-16 in floating point; the drift is at that scale.
        assert!(p.state().theta_dot.abs() < 1e-14);
    }

    #[test]
    fn quarter_turn_acceleration() {
        let mut p = pendulum();
        p.set_state(PI / 2.0, 0.0);
        p.step_torque(0.0).unwrap();
        // 3 g / (2 l) * sin(pi/2) * dt = 15 * 0.05
        assert!((p.state().theta_dot - 0.75).abs() < 1e-12);
        assert!((p.state().theta - (PI / 2.0 + 0.75 * 0.05)).abs() < 1e-12);
    }

    #[test]
    fn speed_is_clipped() {
        let mut p = pendulum();
        p.set_state(PI / 2.0, 7.9);
        p.step_torque(2.0).unwrap();
        assert_eq!(p.state().theta_dot, 8.0);
    }

    #[test]
    fn success_needs_ten_steps_near_upright() {
        let mut p = pendulum();
        p.set_state(0.0, 0.0);
        for i in 1..=10 {
            let o = p.step_torque(0.0).unwrap();
            assert_eq!(o.done, i == 10);
            assert_eq!(p.success(&o.observation), i == 10);
        }
    }

    #[test]
    fn wrap_angle_range() {
        for k in -20..20 {
            let a = wrap_angle(k as f64 * 0.7);
            assert!((-PI..PI).contains(&a));
            assert!((libm::sin(a) - libm::sin(k as f64 * 0.7)).abs() < 1e-12);
        }
    }
}
