//! Two-level agent with timed subgoals.
//!
//! The high level observes the environment and emits a target for the state
//! projection together with a budget in original steps. The low level sees
//! only the controllable part of the observation, the target and the
//! remaining budget, and is rewarded for sitting on the target when the
//! budget runs out.

use crate::approx::{GaussianPolicyHead, ACTION_LIMIT};
use crate::eat::{EatLevels, EatMonitor};
use crate::envs::{EnvError, Environment, EventRecord};
use crate::hmdp::{remaining_subgoal, ActionState, OpenSegment, TimedSubgoal};
use crate::sac::{standard_normal, Experience, GradCredit, ReplayBuffer, Sac, SacConfig, SacError, TrainStats};
use crate::seeds::{self, Stream};
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error(transparent)]
    Sac(#[from] SacError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Hmdp(#[from] crate::hmdp::HmdpError),
    #[error("no episode in progress")]
    NoEpisode,
    #[error("invalid agent configuration: {0}")]
    Config(&'static str),
}

/// When the low level counts as successful.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DeadlineRule {
    /// Within tolerance at the step the budget expires.
    #[default]
    AtDeadline,
    /// Within tolerance at any step; reaching it ends the low-level episode.
    FirstTouch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelabelConfig {
    pub hindsight_goals: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelConfig {
    pub sac: SacConfig,
    /// Probability of a uniformly random action during collection.
    pub random_action_fraction: f64,
    /// Probability of executing the mean action during collection.
    #[serde(default)]
    pub deterministic_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub high: LevelConfig,
    pub low: LevelConfig,
    pub max_budget: u32,
    /// Naturally completed high-level actions after which the episode ends.
    pub max_high_actions: Option<u32>,
    pub relabel: RelabelConfig,
    #[serde(default = "yes")]
    pub hindsight_action: bool,
    /// Also store a missed segment under the action that was executed.
    #[serde(default = "yes")]
    pub keep_executed_action: bool,
    #[serde(default)]
    pub deadline_rule: DeadlineRule,
    /// Treat interrupted segments as terminal instead of bootstrapping them.
    #[serde(default)]
    pub interrupted_terminal: bool,
    /// Reward booked for every step left before the horizon when the action
    /// limit ends an episode. The final segment then closes as terminal, and
    /// so does a high-level segment cut by the horizon.
    #[serde(default)]
    pub timeout_step_reward: Option<f64>,
}

fn yes() -> bool {
    true
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        self.high.sac.validate()?;
        self.low.sac.validate()?;
        if self.max_budget < 1 {
            return Err(AgentError::Config("max_budget must be at least 1"));
        }
        if !(self.relabel.tolerance > 0.0) {
            return Err(AgentError::Config("tolerance must be positive"));
        }
        for p in [
            self.high.random_action_fraction,
            self.low.random_action_fraction,
            self.high.deterministic_fraction,
            self.low.deterministic_fraction,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(AgentError::Config("fractions must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Low-level state: controllable view, target, remaining budget channel.
#[derive(Debug, Clone, PartialEq)]
pub struct LowLevelObs {
    pub view: Vec<f64>,
    pub target: Vec<f64>,
    pub remaining: f64,
}

impl LowLevelObs {
    pub fn new(view: &[f64], target: &[f64], remaining: u32, max_budget: u32) -> Self {
        Self { view: view.to_vec(), target: target.to_vec(), remaining: budget_channel(remaining, max_budget) }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.view.len() + self.target.len() + 1);
        v.extend_from_slice(&self.view);
        v.extend_from_slice(&self.target);
        v.push(self.remaining);
        v
    }
}

/// Remaining budget on a log scale, `ln(1 + r) / ln(1 + max)`, in `[0, 1]`.
pub fn budget_channel(remaining: u32, max_budget: u32) -> f64 {
    libm::log1p(remaining.min(max_budget) as f64) / libm::log1p(max_budget.max(1) as f64)
}

/// `u in [-1, 1]` to an integer budget in `[1, max]`.
pub fn budget_from_unit(u: f64, max_budget: u32) -> u32 {
    let frac = ((u.clamp(-1.0, 1.0) + 1.0) / 2.0) * (max_budget - 1) as f64;
    1 + libm::round(frac) as u32
}

pub fn unit_from_budget(budget: u32, max_budget: u32) -> f64 {
    if max_budget <= 1 {
        return 0.0;
    }
    let b = budget.clamp(1, max_budget);
    (2.0 * (b - 1) as f64 / (max_budget - 1) as f64 - 1.0).clamp(-ACTION_LIMIT, ACTION_LIMIT)
}

pub fn target_from_unit(u: &[f64], low: &[f64], high: &[f64]) -> Vec<f64> {
    u.iter().zip(low).zip(high).map(|((u, lo), hi)| lo + (u.clamp(-1.0, 1.0) + 1.0) / 2.0 * (hi - lo)).collect()
}

pub fn unit_from_target(x: &[f64], low: &[f64], high: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(low)
        .zip(high)
        .map(|((x, lo), hi)| (2.0 * (x - lo) / (hi - lo) - 1.0).clamp(-ACTION_LIMIT, ACTION_LIMIT))
        .collect()
}

/// Subgoal space of the high level.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgoalSpace {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub max_budget: u32,
}

impl SubgoalSpace {
    pub fn dim(&self) -> usize {
        self.low.len()
    }

    /// Raw policy output (target..., budget) to a timed subgoal.
    pub fn decode(&self, raw: &[f64]) -> TimedSubgoal {
        let n = self.dim();
        TimedSubgoal { target: target_from_unit(&raw[..n], &self.low, &self.high), budget: budget_from_unit(raw[n], self.max_budget) }
    }

    pub fn encode(&self, sg: &TimedSubgoal) -> Vec<f64> {
        let mut raw = unit_from_target(&sg.target, &self.low, &self.high);
        raw.push(unit_from_budget(sg.budget, self.max_budget));
        raw
    }
}

/// Deterministic high-level choice through the policy with the given noise.
pub fn select_high_action(policy: &Sac, obs: &[f64], noise: &[f64], space: &SubgoalSpace, now: u64) -> Result<(ActionState, TimedSubgoal, Vec<f64>), AgentError> {
    let sample = policy.act(obs, noise)?;
    let sg = space.decode(&sample.action);
    Ok((ActionState::new(sg.clone(), now, noise.to_vec(), 2), sg, sample.action))
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Low-level reward for the step that produced `achieved`, `remaining` being
/// the budget left before that step.
pub fn low_reward(achieved: &[f64], target: &[f64], remaining: u32, tolerance: f64, rule: DeadlineRule) -> f64 {
    let hit = distance(achieved, target) <= tolerance;
    let counts = match rule {
        DeadlineRule::AtDeadline => remaining <= 1,
        DeadlineRule::FirstTouch => true,
    };
    if hit && counts {
        0.0
    } else {
        -1.0
    }
}

/// One recorded low-level step, goal-free so it can be relabeled.
#[derive(Debug, Clone, PartialEq)]
pub struct LowStep {
    pub view: Vec<f64>,
    pub action: Vec<f64>,
    pub next_view: Vec<f64>,
    /// Projection of the state after the step.
    pub achieved: Vec<f64>,
    /// Budget left before the step.
    pub remaining: u32,
    /// The environment terminated on this step.
    pub env_terminal: bool,
}

/// Low-level transitions of one high-level action under `target`.
pub fn low_transitions(steps: &[LowStep], target: &[f64], max_budget: u32, tolerance: f64, rule: DeadlineRule, interrupted_terminal: bool, interrupted: bool) -> Vec<Experience> {
    let mut out = Vec::with_capacity(steps.len());
    for (i, st) in steps.iter().enumerate() {
        let reward = low_reward(&st.achieved, target, st.remaining, tolerance, rule);
        let deadline = st.remaining <= 1;
        let touched = rule == DeadlineRule::FirstTouch && reward == 0.0;
        let last = i + 1 == steps.len();
        let terminal = st.env_terminal || deadline || touched || (last && interrupted && interrupted_terminal);
        let s = LowLevelObs::new(&st.view, target, st.remaining, max_budget).to_vec();
        let s2 = LowLevelObs::new(&st.next_view, target, st.remaining.saturating_sub(1).max(1), max_budget).to_vec();
        let mut open = OpenSegment::new(s, st.action.clone());
        open.push(reward);
        out.push(open.close(s2, terminal, last && interrupted).expect("one reward"));
        if touched {
            break;
        }
    }
    out
}

/// Up to `k` copies per step whose target is a projection achieved at the
/// same or a later step of the same high-level action, due at that step.
pub fn relabel_hindsight_goals<R: Rng + ?Sized>(
    steps: &[LowStep],
    cfg: &RelabelConfig,
    max_budget: u32,
    rule: DeadlineRule,
    interrupted_terminal: bool,
    interrupted: bool,
    rng: &mut R,
) -> Vec<Experience> {
    let mut out = Vec::new();
    if steps.is_empty() {
        return out;
    }
    for i in 0..steps.len() {
        for _ in 0..cfg.hindsight_goals {
            let j = rng.random_range(i..steps.len());
            let goal = &steps[j].achieved;
            let last = interrupted && i + 1 == steps.len();
            let step = LowStep { remaining: (j - i + 1) as u32, ..steps[i].clone() };
            let t = low_transitions(core::slice::from_ref(&step), goal, max_budget, cfg.tolerance, rule, interrupted_terminal, last)
                .pop()
                .expect("one transition");
            out.push(t);
        }
    }
    out
}

/// High-level hindsight action: rewrite a missed or interrupted segment's
/// action to what was actually achieved in the time actually taken.
pub fn relabel_hindsight_budget(seg: &Experience, subgoal: &TimedSubgoal, achieved: &[f64], space: &SubgoalSpace, tolerance: f64) -> Experience {
    let elapsed = seg.duration() as u32;
    let hit = elapsed == subgoal.budget && distance(achieved, &subgoal.target) <= tolerance;
    if hit {
        return seg.clone();
    }
    let rewritten = TimedSubgoal { target: achieved.to_vec(), budget: elapsed.max(1) };
    seg.with_action(space.encode(&rewritten))
}

/// One level's learner, buffer and gradient schedule.
#[derive(Debug, Clone)]
pub struct Learner {
    pub sac: Sac,
    pub buffer: ReplayBuffer<Experience>,
    credit: GradCredit,
    cfg: LevelConfig,
}

impl Learner {
    pub fn new(cfg: LevelConfig, state_dim: usize, action_dim: usize, rng: &mut Stream) -> Result<Self, AgentError> {
        let sac = Sac::new(cfg.sac.clone(), state_dim, action_dim, rng)?;
        Ok(Self {
            buffer: ReplayBuffer::new(cfg.sac.replay_capacity),
            credit: GradCredit::new(cfg.sac.grad_steps_per_env_step),
            sac,
            cfg,
        })
    }

    pub fn from_sac(cfg: LevelConfig, sac: Sac) -> Self {
        Self { buffer: ReplayBuffer::new(cfg.sac.replay_capacity), credit: GradCredit::new(cfg.sac.grad_steps_per_env_step), sac, cfg }
    }

    /// Runs the gradient steps owed for one environment step.
    fn train(&mut self, env_steps: u64, rng: &mut Stream) -> Result<Option<TrainStats>, AgentError> {
        let due = self.credit.accrue();
        if self.buffer.is_empty() || env_steps < self.cfg.sac.learning_start {
            return Ok(None);
        }
        let mut last = None;
        for _ in 0..due {
            last = Some(self.sac.train_step(&self.buffer, rng)?);
        }
        Ok(last)
    }
}

/// Collection (exploring, learning) or evaluation (deterministic, frozen).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
struct LiveHigh {
    state: ActionState,
    open: OpenSegment<Vec<f64>>,
    low_steps: Vec<LowStep>,
}

#[derive(Debug, Clone)]
struct EpisodeState {
    t: u64,
    obs: Vec<f64>,
    view: Vec<f64>,
    projection: Vec<f64>,
    high: Option<LiveHigh>,
    natural_actions: u32,
    done: bool,
    success: bool,
}

/// What one original step did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub time: u64,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
    pub events: Vec<EventRecord>,
    /// Closed high-level segment, if any, as it was stored.
    pub closed_high: Option<Experience>,
}

/// Random streams owned by the agent.
#[derive(Debug, Clone)]
struct Streams {
    exploration: Stream,
    replay: Stream,
    relabel: Stream,
}

/// Two-level agent: policies, critics, buffers and the live episode.
#[derive(Debug, Clone)]
pub struct HitsAgent {
    cfg: AgentConfig,
    pub high: Learner,
    pub low: Learner,
    space: SubgoalSpace,
    streams: Streams,
    episode: Option<EpisodeState>,
    mode: Mode,
    env_steps: u64,
    pub last_stats: [Option<TrainStats>; 2],
}

impl HitsAgent {
    pub fn new(cfg: AgentConfig, env: &dyn Environment, master_seed: u64) -> Result<Self, AgentError> {
        cfg.validate()?;
        let mut init = seeds::stream(master_seed, seeds::POLICY_INIT);
        let (low_b, high_b) = env.subgoal_bounds();
        let n = low_b.len();
        let space = SubgoalSpace { low: low_b, high: high_b, max_budget: cfg.max_budget };
        let view_dim = env.agent_view(&vec![0.0; env.observation_dim()]).len();
        let high = Learner::new(cfg.high.clone(), env.observation_dim(), n + 1, &mut init)?;
        let low = Learner::new(cfg.low.clone(), view_dim + n + 1, env.action_dim(), &mut init)?;
        Ok(Self::assemble(cfg, high, low, space, master_seed))
    }

    /// Agent around existing networks (for evaluation of stored checkpoints).
    pub fn from_parts(cfg: AgentConfig, high: Sac, low: Sac, env: &dyn Environment, master_seed: u64) -> Result<Self, AgentError> {
        cfg.validate()?;
        let (low_b, high_b) = env.subgoal_bounds();
        let space = SubgoalSpace { low: low_b, high: high_b, max_budget: cfg.max_budget };
        let high = Learner::from_sac(cfg.high.clone(), high);
        let low = Learner::from_sac(cfg.low.clone(), low);
        Ok(Self::assemble(cfg, high, low, space, master_seed))
    }

    fn assemble(cfg: AgentConfig, high: Learner, low: Learner, space: SubgoalSpace, master_seed: u64) -> Self {
        Self {
            cfg,
            high,
            low,
            space,
            streams: Streams {
                exploration: seeds::stream(master_seed, seeds::EXPLORATION),
                replay: seeds::stream(master_seed, seeds::REPLAY),
                relabel: seeds::stream(master_seed, seeds::RELABEL),
            },
            episode: None,
            mode: Mode::Train,
            env_steps: 0,
            last_stats: [None, None],
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn space(&self) -> &SubgoalSpace {
        &self.space
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn time(&self) -> Option<u64> {
        self.episode.as_ref().map(|e| e.t)
    }

    pub fn episode_done(&self) -> bool {
        self.episode.as_ref().is_none_or(|e| e.done)
    }

    pub fn high_action(&self) -> Option<&ActionState> {
        self.episode.as_ref().and_then(|e| e.high.as_ref()).map(|h| &h.state)
    }

    /// Starts an episode and selects the first high-level action.
    pub fn begin_episode(&mut self, env: &mut dyn Environment, seed: u64, monitor: Option<&mut EatMonitor>) -> Result<(), AgentError> {
        let obs = env.reset(seed);
        self.episode = Some(EpisodeState {
            t: 0,
            view: env.agent_view(&obs),
            projection: env.achieved_projection(&obs),
            obs,
            high: None,
            natural_actions: 0,
            done: false,
            success: false,
        });
        self.start_high(monitor)
    }

    fn start_high(&mut self, monitor: Option<&mut EatMonitor>) -> Result<(), AgentError> {
        let ep = self.episode.as_ref().ok_or(AgentError::NoEpisode)?;
        let obs = ep.obs.clone();
        let dim = self.space.dim() + 1;
        let (noise, raw) = match self.mode {
            Mode::Eval => (vec![0.0; dim], None),
            Mode::Train => {
                let rng = &mut self.streams.exploration;
                if rng.random_bool(self.cfg.high.random_action_fraction) {
                    let raw: Vec<f64> = (0..dim).map(|_| rng.random_range(-ACTION_LIMIT..ACTION_LIMIT)).collect();
                    let head = self.high.sac.head(&obs)?;
                    (implied_noise(&head, &raw), Some(raw))
                } else if rng.random_bool(self.cfg.high.deterministic_fraction) {
                    (vec![0.0; dim], None)
                } else {
                    (standard_normal(rng, dim), None)
                }
            }
        };
        let sample = self.high.sac.act(&obs, &noise)?;
        let raw = raw.unwrap_or(sample.action);
        let sg = self.space.decode(&raw);
        let t = ep.t;
        if let Some(m) = monitor {
            if m.needs_q(2) {
                let q = self.high.sac.q_min(&obs, &raw)?;
                // The start value is finite whenever the critic is.
                let _ = m.on_action_start(2, q);
            }
        }
        let ep = self.episode.as_mut().expect("checked above");
        ep.high = Some(LiveHigh { state: ActionState::new(sg, t, noise, 2), open: OpenSegment::new(obs, raw), low_steps: Vec::new() });
        Ok(())
    }

    fn low_action(&mut self, state: &[f64]) -> Result<Vec<f64>, AgentError> {
        let dim = self.low.sac.action_dim();
        if self.mode == Mode::Eval {
            return Ok(self.low.sac.head(state)?.mean_action());
        }
        let rng = &mut self.streams.exploration;
        if rng.random_bool(self.cfg.low.random_action_fraction) {
            return Ok((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect());
        }
        if rng.random_bool(self.cfg.low.deterministic_fraction) {
            return Ok(self.low.sac.head(state)?.mean_action());
        }
        let noise = standard_normal(rng, dim);
        Ok(self.low.sac.act(state, &noise)?.action)
    }

    /// Closes the live high-level action and the low-level episode under it,
    /// storing experience in training mode. Returns the stored high-level segment.
    fn close_high(&mut self, terminal: bool, interrupted: bool) -> Result<Option<Experience>, AgentError> {
        self.close_high_charged(terminal, interrupted, None)
    }

    fn close_high_charged(&mut self, terminal: bool, interrupted: bool, charge: Option<(f64, usize)>) -> Result<Option<Experience>, AgentError> {
        let ep = self.episode.as_mut().ok_or(AgentError::NoEpisode)?;
        let Some(mut live) = ep.high.take() else { return Ok(None) };
        if live.open.is_empty() {
            return Ok(None);
        }
        let hl_terminal = terminal || (interrupted && self.cfg.interrupted_terminal);
        let seg = live.open.close(ep.obs.clone(), hl_terminal, interrupted)?;
        let charged = |e: Experience| match charge {
            Some((reward, steps)) => e.with_tail(reward, steps),
            None => e,
        };
        let (stored, executed) = if self.cfg.hindsight_action {
            let r = relabel_hindsight_budget(&seg, live.state.action(), &ep.projection, &self.space, self.cfg.relabel.tolerance);
            let keep = self.cfg.keep_executed_action && r.action() != seg.action();
            (charged(r), keep.then(|| charged(seg)))
        } else {
            (charged(seg), None)
        };
        if self.mode == Mode::Train {
            let target = &live.state.action().target;
            let (mb, tol, rule, it) = (self.cfg.max_budget, self.cfg.relabel.tolerance, self.cfg.deadline_rule, self.cfg.interrupted_terminal);
            for t in low_transitions(&live.low_steps, target, mb, tol, rule, it, interrupted) {
                self.low.buffer.push(t);
            }
            for t in relabel_hindsight_goals(&live.low_steps, &self.cfg.relabel, mb, rule, it, interrupted, &mut self.streams.relabel) {
                self.low.buffer.push(t);
            }
            self.high.buffer.push(stored.clone());
            if let Some(e) = executed {
                self.high.buffer.push(e);
            }
        }
        Ok(Some(stored))
    }

    /// One original time step: the low level acts, rewards are booked at
    /// both levels and segments close on deadline, termination or timeout.
    pub fn agent_step(&mut self, env: &mut dyn Environment, mut monitor: Option<&mut EatMonitor>) -> Result<StepReport, AgentError> {
        let ep = self.episode.as_ref().ok_or(AgentError::NoEpisode)?;
        if ep.done {
            return Err(AgentError::Env(EnvError::EpisodeDone));
        }
        let live = ep.high.as_ref().ok_or(AgentError::NoEpisode)?;
        let current = remaining_subgoal(&live.state, ep.t).expect("time only moves forward");
        let low_state = LowLevelObs::new(&ep.view, &current.target, current.budget, self.cfg.max_budget).to_vec();
        let action = self.low_action(&low_state)?;
        let out = env.step(&action)?;
        if self.mode == Mode::Train {
            self.env_steps += 1;
        }

        let ep = self.episode.as_mut().expect("checked above");
        let prev_view = core::mem::replace(&mut ep.view, env.agent_view(&out.observation));
        ep.projection = env.achieved_projection(&out.observation);
        ep.obs = out.observation.clone();
        ep.t += 1;
        let success = env.success(&out.observation);
        ep.success |= success;
        let live = ep.high.as_mut().expect("checked above");
        live.open.push(out.reward);
        live.low_steps.push(LowStep {
            view: prev_view,
            action,
            next_view: ep.view.clone(),
            achieved: ep.projection.clone(),
            remaining: current.budget,
            env_terminal: out.terminated(),
        });
        let elapsed = live.open.len() as u32;
        let deadline = elapsed >= live.state.action().budget;

        let mut closed_high = None;
        let mut done = out.done;
        if out.done {
            let finite = out.truncated && self.cfg.timeout_step_reward.is_some();
            closed_high = self.close_high(out.terminated() || finite, false)?;
        } else if deadline {
            let ep = self.episode.as_ref().expect("live");
            let timeout = self.cfg.max_high_actions.is_some_and(|m| ep.natural_actions + 1 >= m);
            let charge = match self.cfg.timeout_step_reward {
                Some(r) if timeout => Some((r, env.horizon().saturating_sub(ep.t) as usize)),
                _ => None,
            };
            closed_high = self.close_high_charged(charge.is_some(), false, charge)?;
            let ep = self.episode.as_mut().expect("live");
            ep.natural_actions += 1;
            if timeout {
                done = true;
            } else {
                self.start_high(monitor.as_deref_mut())?;
            }
        }
        let ep = self.episode.as_mut().expect("live");
        ep.done = done;
        Ok(StepReport { time: ep.t, reward: out.reward, done, success: ep.success, events: out.events, closed_high })
    }

    /// Gradient steps owed for the last environment step, both levels.
    pub fn train(&mut self) -> Result<(), AgentError> {
        if self.mode != Mode::Train {
            return Ok(());
        }
        let steps = self.env_steps;
        if let Some(s) = self.low.train(steps, &mut self.streams.replay)? {
            self.last_stats[0] = Some(s);
        }
        if let Some(s) = self.high.train(steps, &mut self.streams.replay)? {
            self.last_stats[1] = Some(s);
        }
        Ok(())
    }

    /// Whether the live high-level action started on the current step.
    pub fn fresh_action(&self) -> bool {
        match (self.time(), self.high_action()) {
            (Some(t), Some(s)) => s.start_time() == t,
            _ => true,
        }
    }
}

/// Noise that reproduces `action` through `head` (inverse squash and reparameterization).
fn implied_noise(head: &GaussianPolicyHead, action: &[f64]) -> Vec<f64> {
    action
        .iter()
        .zip(&head.mean)
        .zip(&head.log_std)
        .map(|((a, m), s)| (libm::atanh(a.clamp(-ACTION_LIMIT, ACTION_LIMIT)) - m) / libm::exp(*s))
        .collect()
}

impl EatLevels for HitsAgent {
    fn depth(&self) -> usize {
        2
    }

    fn action_state(&self, level: usize) -> &ActionState {
        assert_eq!(level, 2, "two-level agent");
        self.high_action().expect("live action")
    }

    fn propose(&self, _level: usize) -> TimedSubgoal {
        let ep = self.episode.as_ref().expect("live episode");
        let noise = self.action_state(2).frozen_noise();
        let sample = self.high.sac.act(&ep.obs, noise).expect("shapes fixed at construction");
        self.space.decode(&sample.action)
    }

    fn q_value(&self, _level: usize, action: &TimedSubgoal) -> f64 {
        let ep = self.episode.as_ref().expect("live episode");
        self.high.sac.q_min(&ep.obs, &self.space.encode(action)).expect("shapes fixed at construction")
    }

    fn projection(&self, _level: usize) -> Vec<f64> {
        self.episode.as_ref().expect("live episode").projection.clone()
    }

    fn terminate_from(&mut self, _level: usize, _now: u64, monitor: &mut EatMonitor) {
        self.close_high(false, true).expect("live action");
        self.start_high(Some(monitor)).expect("live episode");
    }
}
