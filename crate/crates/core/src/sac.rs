//! Soft actor-critic over variable-duration segments.
//!
//! With [`DiscountMode::ElapsedTime`] a segment covering `dt` original steps
//! contributes its per-step rewards discounted by `gamma^i` and bootstraps with
//! `gamma^dt`. [`DiscountMode::PerDecision`] is the conventional scheme: the
//! segment's rewards are summed into one decision reward and the bootstrap is
//! discounted once.

use crate::approx::{AdamState, ApproxError, Forward, GaussianPolicyHead, Mlp, SquashedSample};
use crate::hmdp::{discounted_return, HmdpError, RewardSegment};
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SacError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Hmdp(#[from] HmdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscountMode {
    PerDecision,
    ElapsedTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum EntropyConfig {
    Fixed { alpha: f64 },
    Auto { target_entropy: f64, learning_rate: f64, initial_alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SacConfig {
    pub discount: f64,
    pub discount_mode: DiscountMode,
    pub entropy: EntropyConfig,
    pub tau: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub grad_steps_per_env_step: f64,
    pub hidden: Vec<usize>,
    /// Multiplies rewards before they enter targets.
    #[serde(default = "one")]
    pub reward_scale: f64,
    #[serde(default)]
    pub learning_start: u64,
    pub replay_capacity: usize,
    /// Output bias of freshly built critics.
    #[serde(default)]
    pub initial_value: f64,
}

fn one() -> f64 {
    1.0
}

impl SacConfig {
    pub fn validate(&self) -> Result<(), SacError> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(SacError::Config("tau must lie in (0, 1]"));
        }
        if self.batch_size < 1 {
            return Err(SacError::Config("batch size must be at least 1"));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(SacError::Config("discount must lie in (0, 1)"));
        }
        if self.replay_capacity < 1 {
            return Err(SacError::Config("replay capacity must be at least 1"));
        }
        if !(self.grad_steps_per_env_step >= 0.0) {
            return Err(SacError::Config("gradient steps per environment step must be non-negative"));
        }
        Ok(())
    }
}

/// Training sample: level state, normalized action, per-step rewards.
pub type Experience = RewardSegment<Vec<f64>>;

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::new(), next: 0 }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&T> {
        self.items.get(i)
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&T> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}

/// Target for one segment given the value estimate at its end state.
pub fn segment_target(
    rewards: &[f64],
    gamma: f64,
    mode: DiscountMode,
    terminal: bool,
    bootstrap: f64,
) -> Result<f64, HmdpError> {
    let (head, factor) = match mode {
        DiscountMode::ElapsedTime => (discounted_return(rewards, gamma)?, libm::pow(gamma, rewards.len() as f64)),
        DiscountMode::PerDecision => {
            if rewards.is_empty() {
                return Err(HmdpError::EmptyRewards);
            }
            (rewards.iter().sum(), gamma)
        }
    };
    Ok(if terminal { head } else { head + factor * bootstrap })
}

/// Return of a reward stream cut into consecutive segments, composed with
/// elapsed-time discounting. Equals the return of the concatenated stream.
pub fn segmented_return(segments: &[&[f64]], gamma: f64) -> Result<f64, HmdpError> {
    let mut value = 0.0;
    for seg in segments.iter().rev() {
        value = segment_target(seg, gamma, DiscountMode::ElapsedTime, false, value)?;
    }
    Ok(value)
}

/// Two live Q-networks and their slowly tracking copies.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticPair {
    pub live: [Mlp; 2],
    pub target: [Mlp; 2],
}

impl CriticPair {
    pub fn new(live: [Mlp; 2]) -> Self {
        let target = live.clone();
        Self { live, target }
    }

    /// `target <- (1 - tau) target + tau live`.
    pub fn polyak_update(&mut self, tau: f64) -> Result<(), ApproxError> {
        for k in 0..2 {
            self.live[k].polyak_into(&mut self.target[k], tau)?;
        }
        Ok(())
    }
}

/// Free-function form of [`CriticPair::polyak_update`].
pub fn polyak_update(critics: &mut CriticPair, tau: f64) -> Result<(), ApproxError> {
    critics.polyak_update(tau)
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Turns a fractional gradient-steps-per-environment-step ratio into whole
/// steps by accumulating credit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCredit {
    ratio: f64,
    credit: f64,
}

impl GradCredit {
    pub fn new(ratio: f64) -> Self {
        Self { ratio, credit: 0.0 }
    }

    /// Adds one environment step of credit; returns the whole steps now due.
    pub fn accrue(&mut self) -> u32 {
        self.credit += self.ratio;
        let due = libm::floor(self.credit);
        self.credit -= due;
        due as u32
    }
}

/// Losses and statistics from one training step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
}

/// One level's learner.
#[derive(Debug, Clone)]
pub struct Sac {
    cfg: SacConfig,
    state_dim: usize,
    action_dim: usize,
    pub actor: Mlp,
    pub critics: CriticPair,
    actor_opt: AdamState,
    critic_opt: [AdamState; 2],
    log_alpha: f64,
    alpha_opt: AdamState,
}

impl Sac {
    pub fn new<R: Rng + ?Sized>(cfg: SacConfig, state_dim: usize, action_dim: usize, rng: &mut R) -> Result<Self, SacError> {
        cfg.validate()?;
        let mut actor_sizes = vec![state_dim];
        actor_sizes.extend_from_slice(&cfg.hidden);
        actor_sizes.push(2 * action_dim);
        let mut critic_sizes = vec![state_dim + action_dim];
        critic_sizes.extend_from_slice(&cfg.hidden);
        critic_sizes.push(1);
        let actor = Mlp::new(&actor_sizes, rng)?;
        let mut live = [Mlp::new(&critic_sizes, rng)?, Mlp::new(&critic_sizes, rng)?];
        if !cfg.initial_value.is_finite() {
            return Err(SacError::Config("initial value must be finite"));
        }
        for c in &mut live {
            let (_, bias) = c.layer_offsets(critic_sizes.len() - 2);
            c.params_mut()[bias] = cfg.initial_value;
        }
        let critics = CriticPair::new(live);
        let log_alpha = match cfg.entropy {
            EntropyConfig::Fixed { alpha } => libm::log(alpha),
            EntropyConfig::Auto { initial_alpha, .. } => libm::log(initial_alpha),
        };
        let alpha_lr = match cfg.entropy {
            EntropyConfig::Fixed { .. } => 0.0,
            EntropyConfig::Auto { learning_rate, .. } => learning_rate,
        };
        Ok(Self {
            actor_opt: AdamState::new(actor.param_count(), cfg.learning_rate),
            critic_opt: [
                AdamState::new(critics.live[0].param_count(), cfg.learning_rate),
                AdamState::new(critics.live[1].param_count(), cfg.learning_rate),
            ],
            alpha_opt: AdamState::new(1, alpha_lr),
            cfg,
            state_dim,
            action_dim,
            actor,
            critics,
            log_alpha,
        })
    }

    /// Rebuilds a learner from stored networks (optimizer state starts fresh).
    pub fn from_networks(cfg: SacConfig, actor: Mlp, critics: CriticPair, alpha: f64) -> Result<Self, SacError> {
        cfg.validate()?;
        let state_dim = actor.input_dim();
        let action_dim = actor.output_dim() / 2;
        if critics.live[0].input_dim() != state_dim + action_dim {
            return Err(SacError::Config("critic input does not match actor"));
        }
        Ok(Self {
            actor_opt: AdamState::new(actor.param_count(), cfg.learning_rate),
            critic_opt: [
                AdamState::new(critics.live[0].param_count(), cfg.learning_rate),
                AdamState::new(critics.live[1].param_count(), cfg.learning_rate),
            ],
            alpha_opt: AdamState::new(1, 0.0),
            cfg,
            state_dim,
            action_dim,
            actor,
            critics,
            log_alpha: libm::log(alpha),
        })
    }

    pub fn config(&self) -> &SacConfig {
        &self.cfg
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn alpha(&self) -> f64 {
        libm::exp(self.log_alpha)
    }

    pub fn head(&self, state: &[f64]) -> Result<GaussianPolicyHead, SacError> {
        Ok(GaussianPolicyHead::from_output(&self.actor.forward(state)?)?)
    }

    /// Squashed action for a given noise vector.
    pub fn act(&self, state: &[f64], noise: &[f64]) -> Result<SquashedSample, SacError> {
        Ok(self.head(state)?.sample(noise)?)
    }

    /// `min(Q1, Q2)` of the live critics.
    pub fn q_min(&self, state: &[f64], action: &[f64]) -> Result<f64, SacError> {
        let x = concat(state, action);
        let q1 = self.critics.live[0].forward(&x)?[0];
        let q2 = self.critics.live[1].forward(&x)?[0];
        Ok(q1.min(q2))
    }

    /// Soft value of `state` under the target critics for one sampled action.
    pub fn soft_target_value(&self, state: &[f64], noise: &[f64]) -> Result<f64, SacError> {
        let s = self.act(state, noise)?;
        let x = concat(state, &s.action);
        let q1 = self.critics.target[0].forward(&x)?[0];
        let q2 = self.critics.target[1].forward(&x)?[0];
        Ok(q1.min(q2) - self.alpha() * s.log_prob)
    }

    /// Bootstrapped target for one segment, `noise` drives the next action.
    pub fn td_target(&self, seg: &Experience, noise: &[f64]) -> Result<f64, SacError> {
        let scaled: Vec<f64> = seg.rewards().iter().map(|r| r * self.cfg.reward_scale).collect();
        let bootstrap = if seg.terminal() { 0.0 } else { self.soft_target_value(seg.next_state(), noise)? };
        let y = segment_target(&scaled, self.cfg.discount, self.cfg.discount_mode, seg.terminal(), bootstrap)?;
        if !y.is_finite() {
            return Err(SacError::NonFinite("td target"));
        }
        Ok(y)
    }

    /// Mean of `0.5 [(Q1 - y)^2 + (Q2 - y)^2]` and its gradients per critic.
    pub fn critic_loss_and_grads(&self, batch: &[&Experience], targets: &[f64]) -> Result<(f64, [Vec<f64>; 2]), SacError> {
        if batch.is_empty() {
            return Err(SacError::EmptyBatch);
        }
        let n = batch.len() as f64;
        let mut grads = [vec![0.0; self.critics.live[0].param_count()], vec![0.0; self.critics.live[1].param_count()]];
        let mut loss = 0.0;
        for (seg, &y) in batch.iter().zip(targets) {
            let x = concat(seg.start_state(), seg.action());
            for (k, g) in grads.iter_mut().enumerate() {
                let cache = self.critics.live[k].forward_cached(&x)?;
                let err = cache.output()[0] - y;
                loss += 0.5 * err * err / n;
                self.critics.live[k].backward_into(&cache, &[err / n], g)?;
            }
        }
        if !loss.is_finite() {
            return Err(SacError::NonFinite("critic loss"));
        }
        Ok((loss, grads))
    }

    /// One critic step toward fresh targets. Returns the mean loss.
    pub fn critic_update<R: Rng + ?Sized>(&mut self, batch: &[&Experience], rng: &mut R) -> Result<f64, SacError> {
        if batch.is_empty() {
            return Err(SacError::EmptyBatch);
        }
        let targets = batch
            .iter()
            .map(|seg| {
                let noise = standard_normal(rng, self.action_dim);
                self.td_target(seg, &noise)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (loss, grads) = self.critic_loss_and_grads(batch, &targets)?;
        for k in 0..2 {
            self.critic_opt[k].step(self.critics.live[k].params_mut(), &grads[k])?;
        }
        Ok(loss)
    }

    /// Mean of `alpha log pi(a|s) - min Q(s, a)` over reparameterized actions,
    /// its actor gradient and the mean log-probability.
    pub fn actor_loss_and_grads(&self, batch: &[&Experience], noises: &[Vec<f64>]) -> Result<(f64, Vec<f64>, f64), SacError> {
        if batch.is_empty() {
            return Err(SacError::EmptyBatch);
        }
        let n = batch.len() as f64;
        let alpha = self.alpha();
        let mut grads = vec![0.0; self.actor.param_count()];
        let mut scratch = vec![0.0; self.critics.live[0].param_count()];
        let (mut loss, mut mean_lp) = (0.0, 0.0);
        for (seg, noise) in batch.iter().zip(noises) {
            let state = seg.start_state();
            let cache: Forward = self.actor.forward_cached(state)?;
            let head = GaussianPolicyHead::from_output(cache.output())?;
            let sample = head.sample(noise)?;
            let x = concat(state, &sample.action);
            let c1 = self.critics.live[0].forward_cached(&x)?;
            let c2 = self.critics.live[1].forward_cached(&x)?;
            let (q, k, cache_q) = if c1.output()[0] <= c2.output()[0] { (c1.output()[0], 0, &c1) } else { (c2.output()[0], 1, &c2) };
            loss += (alpha * sample.log_prob - q) / n;
            mean_lp += sample.log_prob / n;
            let dx = self.critics.live[k].backward_into(cache_q, &[1.0], &mut scratch)?;
            let dq_da: Vec<f64> = dx[self.state_dim..].iter().map(|g| -g / n).collect();
            let upstream = head.output_gradient(&sample, noise, alpha / n, &dq_da);
            self.actor.backward_into(&cache, &upstream, &mut grads)?;
        }
        if !loss.is_finite() {
            return Err(SacError::NonFinite("actor loss"));
        }
        Ok((loss, grads, mean_lp))
    }

    /// One actor step, plus one temperature step when auto-tuned.
    pub fn actor_update<R: Rng + ?Sized>(&mut self, batch: &[&Experience], rng: &mut R) -> Result<f64, SacError> {
        let noises: Vec<Vec<f64>> = batch.iter().map(|_| standard_normal(rng, self.action_dim)).collect();
        let (loss, grads, mean_lp) = self.actor_loss_and_grads(batch, &noises)?;
        self.actor_opt.step(self.actor.params_mut(), &grads)?;
        if let EntropyConfig::Auto { target_entropy, .. } = self.cfg.entropy {
            // d/d log_alpha of -log_alpha (log_pi + target_entropy)
            let g = -(mean_lp + target_entropy);
            let mut la = [self.log_alpha];
            self.alpha_opt.step(&mut la, &[g])?;
            self.log_alpha = la[0];
        }
        Ok(loss)
    }

    pub fn polyak_update(&mut self) -> Result<(), SacError> {
        self.critics.polyak_update(self.cfg.tau)?;
        Ok(())
    }

    /// Critic step, actor step, target update on one sampled batch.
    pub fn train_step<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer<Experience>, rng: &mut R) -> Result<TrainStats, SacError> {
        let batch = buffer.sample(self.cfg.batch_size, rng);
        let critic_loss = self.critic_update(&batch, rng)?;
        let actor_loss = self.actor_update(&batch, rng)?;
        self.polyak_update()?;
        Ok(TrainStats { critic_loss, actor_loss, alpha: self.alpha() })
    }
}
