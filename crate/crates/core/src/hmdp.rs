//! Hierarchy-of-MDPs data model.
//!
//! Every level of the hierarchy runs on the original time axis: a
//! higher-level action spans a variable number of original steps and the
//! rewards it collects are kept per step, so that bootstrapping can discount
//! by elapsed time rather than by the number of decisions.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HmdpError {
    #[error("hierarchy needs at least two levels, got {0}")]
    TooFewLevels(usize),
    #[error("level {level}: discount {discount} outside (0, 1)")]
    Discount { level: usize, discount: f64 },
    #[error("level {level}: max_budget must be at least 1")]
    MaxBudget { level: usize },
    #[error("level {level}: goal tolerance {tolerance} must be positive")]
    Tolerance { level: usize, tolerance: f64 },
    #[error("subgoal budget must be at least 1")]
    ZeroBudget,
    #[error("subgoal has dimension {got}, level expects {expected}")]
    SubgoalDim { expected: usize, got: usize },
    #[error("clock regression: now = {now} precedes start time {start}")]
    ClockRegression { now: u64, start: u64 },
    #[error("discounted return of an empty reward list")]
    EmptyRewards,
    #[error("gamma {0} outside (0, 1)")]
    Gamma(f64),
    #[error("cannot close a segment without rewards")]
    EmptySegment,
    #[error("segment already closed")]
    AlreadyClosed,
}

/// Static description of one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub index: usize,
    pub discount: f64,
    pub subgoal_dim: usize,
    pub max_budget: u32,
    pub goal_tolerance: f64,
}

impl LevelSpec {
    pub fn validate(&self) -> Result<(), HmdpError> {
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(HmdpError::Discount { level: self.index, discount: self.discount });
        }
        if self.max_budget < 1 {
            return Err(HmdpError::MaxBudget { level: self.index });
        }
        if !(self.goal_tolerance > 0.0) {
            return Err(HmdpError::Tolerance { level: self.index, tolerance: self.goal_tolerance });
        }
        Ok(())
    }
}

/// Ordered levels, bottom (index 1) first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchySpec {
    pub levels: Vec<LevelSpec>,
}

/// Result of validating a hierarchy. Non-monotone discounts are legal but
/// reported.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HierarchyReport {
    pub warnings: Vec<usize>,
}

impl HierarchySpec {
    pub fn validate(&self) -> Result<HierarchyReport, HmdpError> {
        if self.levels.len() < 2 {
            return Err(HmdpError::TooFewLevels(self.levels.len()));
        }
        for level in &self.levels {
            level.validate()?;
        }
        let warnings = self
            .levels
            .windows(2)
            .filter(|w| w[0].discount > w[1].discount)
            .map(|w| w[1].index)
            .collect();
        Ok(HierarchyReport { warnings })
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }
}

/// A high-level action: reach `target` in `budget` original steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedSubgoal {
    pub target: Vec<f64>,
    pub budget: u32,
}

impl TimedSubgoal {
    pub fn new(target: Vec<f64>, budget: u32) -> Result<Self, HmdpError> {
        if budget < 1 {
            return Err(HmdpError::ZeroBudget);
        }
        Ok(Self { target, budget })
    }

    pub fn check_dim(&self, level: &LevelSpec) -> Result<(), HmdpError> {
        if self.target.len() != level.subgoal_dim {
            return Err(HmdpError::SubgoalDim { expected: level.subgoal_dim, got: self.target.len() });
        }
        Ok(())
    }
}

/// The action currently in flight at one level.
///
/// `frozen_noise` is the random element drawn at selection time; it is
/// reused unchanged for every later proposal at this level.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionState {
    action: TimedSubgoal,
    start_time: u64,
    frozen_noise: Vec<f64>,
    level: usize,
}

impl ActionState {
    pub fn new(action: TimedSubgoal, start_time: u64, frozen_noise: Vec<f64>, level: usize) -> Self {
        Self { action, start_time, frozen_noise, level }
    }

    pub fn action(&self) -> &TimedSubgoal {
        &self.action
    }

    pub fn start_time(&self) -> u64 {
        self.start_time
    }

    pub fn frozen_noise(&self) -> &[f64] {
        &self.frozen_noise
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Original steps elapsed since selection.
    pub fn elapsed(&self, now: u64) -> Result<u64, HmdpError> {
        now.checked_sub(self.start_time)
            .ok_or(HmdpError::ClockRegression { now, start: self.start_time })
    }
}

/// The live action as seen at time `now`: same target, budget reduced by the
/// elapsed time and floored at one step.
pub fn remaining_subgoal(state: &ActionState, now: u64) -> Result<TimedSubgoal, HmdpError> {
    let elapsed = state.elapsed(now)?;
    let remaining = (state.action.budget as i64 - elapsed as i64).max(1);
    Ok(TimedSubgoal { target: state.action.target.clone(), budget: remaining as u32 })
}

/// `sum_i rewards[i] * gamma^i`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Result<f64, HmdpError> {
    if rewards.is_empty() {
        return Err(HmdpError::EmptyRewards);
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(HmdpError::Gamma(gamma));
    }
    // Horner from the back: r0 + g (r1 + g (r2 + ...)).
    Ok(rewards.iter().rev().fold(0.0, |acc, &r| r + gamma * acc))
}

/// A closed variable-duration event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSegment<A> {
    start_state: Vec<f64>,
    action: A,
    rewards: Vec<f64>,
    next_state: Vec<f64>,
    terminal: bool,
    interrupted: bool,
}

impl<A> RewardSegment<A> {
    pub fn start_state(&self) -> &[f64] {
        &self.start_state
    }

    pub fn action(&self) -> &A {
        &self.action
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn next_state(&self) -> &[f64] {
        &self.next_state
    }

    pub fn terminal(&self) -> bool {
        self.terminal
    }

    pub fn interrupted(&self) -> bool {
        self.interrupted
    }

    pub fn duration(&self) -> usize {
        self.rewards.len()
    }

    /// Copy with the action replaced; states, rewards and flags are kept.
    pub fn with_action<B>(&self, action: B) -> RewardSegment<B> {
        RewardSegment {
            start_state: self.start_state.clone(),
            action,
            rewards: self.rewards.clone(),
            next_state: self.next_state.clone(),
            terminal: self.terminal,
            interrupted: self.interrupted,
        }
    }

    /// Extended by `steps` copies of `reward` and closed as terminal.
    pub fn with_tail(mut self, reward: f64, steps: usize) -> Self {
        self.rewards.extend(core::iter::repeat(reward).take(steps));
        self.terminal = true;
        self
    }

    /// Copy with new start/next states and rewards, used when the level
    /// observation embeds a goal that hindsight relabeling rewrites.
    pub fn relabeled(&self, start_state: Vec<f64>, rewards: Vec<f64>, next_state: Vec<f64>, terminal: bool) -> Self
    where
        A: Clone,
    {
        assert_eq!(rewards.len(), self.rewards.len(), "relabeling must keep the duration");
        RewardSegment {
            start_state,
            action: self.action.clone(),
            rewards,
            next_state,
            terminal,
            interrupted: self.interrupted,
        }
    }

    pub fn map_action<B>(self, f: impl FnOnce(A) -> B) -> RewardSegment<B> {
        RewardSegment {
            start_state: self.start_state,
            action: f(self.action),
            rewards: self.rewards,
            next_state: self.next_state,
            terminal: self.terminal,
            interrupted: self.interrupted,
        }
    }
}

/// Accumulates per-step rewards while an action runs.
#[derive(Debug, Clone)]
pub struct OpenSegment<A> {
    start_state: Vec<f64>,
    action: Option<A>,
    rewards: Vec<f64>,
}

impl<A> OpenSegment<A> {
    pub fn new(start_state: Vec<f64>, action: A) -> Self {
        Self { start_state, action: Some(action), rewards: Vec::new() }
    }

    pub fn push(&mut self, reward: f64) {
        self.rewards.push(reward);
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        self.action.is_none()
    }

    pub fn start_state(&self) -> &[f64] {
        &self.start_state
    }

    pub fn action(&self) -> Option<&A> {
        self.action.as_ref()
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn close(&mut self, next_state: Vec<f64>, terminal: bool, interrupted: bool) -> Result<RewardSegment<A>, HmdpError> {
        if self.action.is_none() {
            return Err(HmdpError::AlreadyClosed);
        }
        if self.rewards.is_empty() {
            return Err(HmdpError::EmptySegment);
        }
        let action = self.action.take().expect("checked above");
        Ok(RewardSegment {
            start_state: core::mem::take(&mut self.start_state),
            action,
            rewards: core::mem::take(&mut self.rewards),
            next_state,
            terminal,
            interrupted,
        })
    }
}

/// Free-function form of [`OpenSegment::close`].
pub fn close_segment<A>(
    open: &mut OpenSegment<A>,
    next_state: Vec<f64>,
    terminal: bool,
    interrupted: bool,
) -> Result<RewardSegment<A>, HmdpError> {
    open.close(next_state, terminal, interrupted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn live(budget: u32, start: u64) -> ActionState {
        ActionState::new(TimedSubgoal::new(vec![0.3, -0.2], budget).unwrap(), start, vec![0.1, 0.2, 0.3], 2)
    }

    #[test]
    fn remaining_budget_examples() {
        assert_eq!(remaining_subgoal(&live(10, 0), 0).unwrap().budget, 10);
        assert_eq!(remaining_subgoal(&live(10, 5), 9).unwrap().budget, 10 + 5 - 9);
        assert_eq!(remaining_subgoal(&live(10, 0), 10).unwrap().budget, 1);
        assert_eq!(remaining_subgoal(&live(10, 0), 500).unwrap().budget, 1);
    }

    #[test]
    fn remaining_rejects_clock_regression() {
        assert_eq!(
            remaining_subgoal(&live(10, 5), 4),
            Err(HmdpError::ClockRegression { now: 4, start: 5 })
        );
    }

    #[test]
    fn discounted_return_examples() {
        assert_eq!(discounted_return(&[0.0, 0.0, 0.0], 0.99).unwrap(), 0.0);
        assert_eq!(discounted_return(&[1.0], 0.37).unwrap(), 1.0);
        // -1 - 0.9 + 2 * 0.81
        let r = discounted_return(&[-1.0, -1.0, 2.0], 0.9).unwrap();
        assert!((r - (-0.28)).abs() < 1e-12, "{r}");
    }

    #[test]
    fn discounted_return_errors() {
        assert_eq!(discounted_return(&[], 0.9), Err(HmdpError::EmptyRewards));
        assert_eq!(discounted_return(&[1.0], 1.0), Err(HmdpError::Gamma(1.0)));
        assert_eq!(discounted_return(&[1.0], 0.0), Err(HmdpError::Gamma(0.0)));
    }

    #[test]
    fn segment_close_semantics() {
        let mut open = OpenSegment::new(vec![0.0], 7u8);
        assert_eq!(open.clone().close(vec![1.0], false, false), Err(HmdpError::EmptySegment));
        open.push(-1.0);
        open.push(-1.0);
        let seg = close_segment(&mut open, vec![1.0], false, true).unwrap();
        assert_eq!(seg.duration(), 2);
        assert_eq!(seg.rewards(), &[-1.0, -1.0]);
        assert!(seg.interrupted());
        assert!(!seg.terminal());
        assert_eq!(open.close(vec![1.0], false, false), Err(HmdpError::AlreadyClosed));
    }

    #[test]
    fn hierarchy_validation() {
        let level = |index, discount| LevelSpec { index, discount, subgoal_dim: 1, max_budget: 10, goal_tolerance: 0.1 };
        let ok = HierarchySpec { levels: vec![level(1, 0.9), level(2, 0.99)] };
        assert!(ok.validate().unwrap().warnings.is_empty());
        let inverted = HierarchySpec { levels: vec![level(1, 0.99), level(2, 0.9)] };
        assert_eq!(inverted.validate().unwrap().warnings, vec![2]);
        let flat = HierarchySpec { levels: vec![level(1, 0.9)] };
        assert_eq!(flat.validate(), Err(HmdpError::TooFewLevels(1)));
        let bad = HierarchySpec { levels: vec![level(1, 1.0), level(2, 0.9)] };
        assert!(matches!(bad.validate(), Err(HmdpError::Discount { level: 1, .. })));
        assert_eq!(TimedSubgoal::new(vec![0.0], 0), Err(HmdpError::ZeroBudget));
    }

    proptest! {
        #[test]
        fn remaining_keeps_target_and_counts_down(budget in 1u32..300, start in 0u64..1000, elapsed in 0u64..400) {
            let state = live(budget, start);
            let now = start + elapsed;
            let sub = remaining_subgoal(&state, now).unwrap();
            prop_assert_eq!(&sub.target, &state.action().target);
            let expected = if elapsed < budget as u64 { budget as u64 - elapsed } else { 1 };
            prop_assert_eq!(sub.budget as u64, expected);
        }

        #[test]
        fn return_is_bounded(rewards in proptest::collection::vec(-10.0f64..10.0, 1..200), gi in 0usize..3) {
            let gamma = [0.9, 0.99, 0.999][gi];
            let g = discounted_return(&rewards, gamma).unwrap();
            let max = rewards.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            prop_assert!(g.abs() <= max / (1.0 - gamma) + 1e-9);
        }
    }
}
