//! Emergency action termination.
//!
//! At every original step the live action at each level `l >= 2` is compared
//! with a proposal drawn from the current policy using the random element
//! frozen at selection time. Levels are scanned top-down; the first level
//! whose predicate fires has its action, and every action below it,
//! terminated and reselected.

use crate::hmdp::{remaining_subgoal, ActionState, TimedSubgoal};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EatError {
    #[error("Q-strategy alpha {0} outside [0, 1] (use +inf to disable)")]
    QAlpha(f64),
    #[error("geometric alpha {0} outside [0, 2]")]
    GeomAlpha(f64),
    #[error("smoothing beta {0} outside [0, 1)")]
    Beta(f64),
    #[error("non-finite Q value at action start")]
    NonFiniteQ,
}

pub const DEFAULT_BETA: f64 = 0.999;

/// Configured termination rule, as read from experiment files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum StrategyConfig {
    QBased { alpha: f64, beta: f64 },
    Geometric { alpha: f64 },
}

impl StrategyConfig {
    pub fn build(self) -> Result<TerminationStrategy, EatError> {
        match self {
            StrategyConfig::QBased { alpha, beta } => Ok(TerminationStrategy::QBased(QStats::new(alpha, beta)?)),
            StrategyConfig::Geometric { alpha } => TerminationStrategy::geometric(alpha),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StrategyConfig::QBased { .. } => "q",
            StrategyConfig::Geometric { .. } => "geom",
        }
    }
}

/// Running mean and variance of critic values at action starts.
#[derive(Debug, Clone, PartialEq)]
pub struct QStats {
    pub alpha: f64,
    pub beta: f64,
    mean: f64,
    var: f64,
    initialized: bool,
    /// Predicate queries answered before any action start was recorded.
    pub uninitialized_queries: u64,
}

impl QStats {
    /// `alpha` in `[0, 1]`, or `+inf` for a rule that never fires.
    pub fn new(alpha: f64, beta: f64) -> Result<Self, EatError> {
        if !((0.0..=1.0).contains(&alpha) || alpha == f64::INFINITY) {
            return Err(EatError::QAlpha(alpha));
        }
        if !(0.0..1.0).contains(&beta) {
            return Err(EatError::Beta(beta));
        }
        Ok(Self { alpha, beta, mean: 0.0, var: 0.0, initialized: false, uninitialized_queries: 0 })
    }

    /// Rebuilds stored statistics.
    pub fn restore(alpha: f64, beta: f64, mean: f64, var: f64, initialized: bool) -> Result<Self, EatError> {
        let mut s = Self::new(alpha, beta)?;
        s.mean = mean;
        s.var = var;
        s.initialized = initialized;
        Ok(s)
    }

    pub fn initialized(&self) -> bool {
        self.initialized
    }

    pub fn variance(&self) -> f64 {
        self.var
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn delta(&self) -> f64 {
        libm::sqrt(self.var.max(0.0))
    }
}

/// Records `q = Q(s_tau, a_tau)` for one new action.
pub fn update_q_stats(stats: &mut QStats, q: f64) -> Result<(), EatError> {
    if !q.is_finite() {
        return Err(EatError::NonFiniteQ);
    }
    if !stats.initialized {
        stats.mean = q;
        stats.var = 0.0;
        stats.initialized = true;
        return Ok(());
    }
    let b = stats.beta;
    stats.mean = b * stats.mean + (1.0 - b) * q;
    let dev = q - stats.mean;
    stats.var = b * stats.var + (1.0 - b) * dev * dev;
    Ok(())
}

/// `q_prop - q_cur > alpha * delta`. Never fires before the first action start.
pub fn should_terminate_q(q_prop: f64, q_cur: f64, stats: &mut QStats) -> bool {
    if !stats.initialized {
        stats.uninitialized_queries += 1;
        return false;
    }
    if stats.alpha == f64::INFINITY {
        return false;
    }
    q_prop - q_cur > stats.alpha * stats.delta()
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Implied velocities `((x_prop - x_state) / d_prop, (x_cur - x_state) / d_cur)`.
pub fn implied_velocities(x_prop: &[f64], d_prop: u32, x_cur: &[f64], d_cur: u32, x_state: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let v1 = x_prop.iter().zip(x_state).map(|(p, s)| (p - s) / d_prop as f64).collect();
    let v2 = x_cur.iter().zip(x_state).map(|(c, s)| (c - s) / d_cur as f64).collect();
    (v1, v2)
}

/// `|v1 - v2| > (alpha / 2) (|v1| + |v2|)` over implied velocities.
pub fn should_terminate_geom(x_prop: &[f64], d_prop: u32, x_cur: &[f64], d_cur: u32, x_state: &[f64], alpha: f64) -> bool {
    geom_gap(x_prop, d_prop, x_cur, d_cur, x_state, alpha).0
}

/// Verdict and `|v1 - v2|`.
fn geom_gap(x_prop: &[f64], d_prop: u32, x_cur: &[f64], d_cur: u32, x_state: &[f64], alpha: f64) -> (bool, f64) {
    let (v1, v2) = implied_velocities(x_prop, d_prop.max(1), x_cur, d_cur.max(1), x_state);
    let diff: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| a - b).collect();
    let lhs = norm(&diff);
    (lhs > 0.5 * alpha * (norm(&v1) + norm(&v2)), lhs)
}

/// Per-level termination rule with its state.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminationStrategy {
    QBased(QStats),
    Geometric { alpha: f64 },
}

impl TerminationStrategy {
    pub fn geometric(alpha: f64) -> Result<Self, EatError> {
        if !(0.0..=2.0).contains(&alpha) {
            return Err(EatError::GeomAlpha(alpha));
        }
        Ok(TerminationStrategy::Geometric { alpha })
    }

    pub fn needs_q(&self) -> bool {
        matches!(self, TerminationStrategy::QBased(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            TerminationStrategy::QBased(_) => "q",
            TerminationStrategy::Geometric { .. } => "geom",
        }
    }
}

/// One termination rule per level `2..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct EatMonitor {
    strategies: Vec<TerminationStrategy>,
}

impl EatMonitor {
    /// `per_level[0]` monitors level 2.
    pub fn new(per_level: Vec<TerminationStrategy>) -> Self {
        Self { strategies: per_level }
    }

    /// The same rule, with independent state, at every level of an `depth`-level hierarchy.
    pub fn uniform(cfg: StrategyConfig, depth: usize) -> Result<Self, EatError> {
        let strategies = (2..=depth).map(|_| cfg.build()).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { strategies })
    }

    pub fn strategy(&self, level: usize) -> Option<&TerminationStrategy> {
        level.checked_sub(2).and_then(|i| self.strategies.get(i))
    }

    pub fn strategy_mut(&mut self, level: usize) -> Option<&mut TerminationStrategy> {
        level.checked_sub(2).and_then(move |i| self.strategies.get_mut(i))
    }

    pub fn needs_q(&self, level: usize) -> bool {
        self.strategy(level).is_some_and(TerminationStrategy::needs_q)
    }

    /// Feeds the start-of-action critic value to a Q-based level.
    pub fn on_action_start(&mut self, level: usize, q: f64) -> Result<(), EatError> {
        if let Some(TerminationStrategy::QBased(stats)) = self.strategy_mut(level) {
            update_q_stats(stats, q)?;
        }
        Ok(())
    }
}

/// What the scan needs from a hierarchy.
pub trait EatLevels {
    /// Number of levels `L`.
    fn depth(&self) -> usize;

    /// Live action at `level` (2..=L).
    fn action_state(&self, level: usize) -> &ActionState;

    /// Policy output at the current level state with the frozen noise.
    fn propose(&self, level: usize) -> TimedSubgoal;

    /// Critic value `Q(s^l_t, action)`.
    fn q_value(&self, level: usize, action: &TimedSubgoal) -> f64;

    /// Projection `x(s^l_t)` of the current state, in the space level `l` targets.
    fn projection(&self, level: usize) -> Vec<f64>;

    /// Closes the live segments at levels `level..=1` as interrupted, hands
    /// them to training and selects fresh actions with fresh noise. Start
    /// values of new actions at levels >= 2 go to `monitor`.
    fn terminate_from(&mut self, level: usize, now: u64, monitor: &mut EatMonitor);
}

/// Outcome of one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminationReport {
    pub time: u64,
    /// Level that fired, if any.
    pub level: Option<usize>,
    pub strategy: &'static str,
    /// Q gap or implied-velocity gap measured at the firing level.
    pub gap: f64,
}

impl TerminationReport {
    pub fn fired(&self) -> bool {
        self.level.is_some()
    }
}

/// Top-down scan over levels `L..=2`; stops at the first level that fires.
pub fn eat_scan<H: EatLevels + ?Sized>(levels: &mut H, monitor: &mut EatMonitor, now: u64) -> TerminationReport {
    let mut report = TerminationReport { time: now, level: None, strategy: "none", gap: 0.0 };
    for l in (2..=levels.depth()).rev() {
        let Some(strategy) = monitor.strategy_mut(l) else { continue };
        let current = match remaining_subgoal(levels.action_state(l), now) {
            Ok(c) => c,
            Err(_) => continue,
        };
        let proposal = levels.propose(l);
        let (fire, gap) = match strategy {
            TerminationStrategy::QBased(stats) => {
                if !stats.initialized() || stats.alpha == f64::INFINITY {
                    (should_terminate_q(0.0, 0.0, stats), 0.0)
                } else {
                    let gap = levels.q_value(l, &proposal) - levels.q_value(l, &current);
                    (should_terminate_q(gap, 0.0, stats), gap)
                }
            }
            TerminationStrategy::Geometric { alpha } => {
                let x = levels.projection(l);
                geom_gap(&proposal.target, proposal.budget, &current.target, current.budget, &x, *alpha)
            }
        };
        if fire {
            report.level = Some(l);
            report.strategy = strategy.name();
            report.gap = gap;
            levels.terminate_from(l, now, monitor);
            break;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn q_worked_examples() {
        let mut s = QStats::new(0.5, DEFAULT_BETA).unwrap();
        update_q_stats(&mut s, 0.0).unwrap();
        // Force delta = 1.
        s.var = 1.0;
        assert!(should_terminate_q(0.6, 0.0, &mut s));
        assert!(!should_terminate_q(0.4, 0.0, &mut s));
        assert!(!should_terminate_q(3.0, 3.0, &mut s));
    }

    #[test]
    fn uninitialized_q_never_fires_and_counts() {
        let mut s = QStats::new(0.0, DEFAULT_BETA).unwrap();
        assert!(!should_terminate_q(100.0, 0.0, &mut s));
        assert_eq!(s.uninitialized_queries, 1);
    }

    #[test]
    fn first_update_sets_mean_and_zero_variance() {
        let mut s = QStats::new(0.5, DEFAULT_BETA).unwrap();
        update_q_stats(&mut s, -7.0).unwrap();
        assert_eq!((s.mean(), s.delta()), (-7.0, 0.0));
        assert!(update_q_stats(&mut s, f64::NAN).is_err());
    }

    #[test]
    fn constant_stream_drives_delta_to_zero() {
        let mut s = QStats::new(0.5, DEFAULT_BETA).unwrap();
        for _ in 0..10_000 {
            update_q_stats(&mut s, 3.0).unwrap();
        }
        assert!(s.delta() < 1e-3);
        assert_eq!(s.delta(), 0.0);
    }

    #[test]
    fn alternating_stream_converges_to_unit_delta() {
        let mut s = QStats::new(0.5, DEFAULT_BETA).unwrap();
        for i in 0..100_000 {
            update_q_stats(&mut s, if i % 2 == 0 { 1.0 } else { -1.0 }).unwrap();
        }
        // Independent recursion.
        let (mut m, mut v) = (1.0_f64, 0.0_f64);
        for i in 1..100_000 {
            let q = if i % 2 == 0 { 1.0 } else { -1.0 };
            m = 0.999 * m + 0.001 * q;
            v = 0.999 * v + 0.001 * (q - m) * (q - m);
        }
        assert!((s.delta() - 1.0).abs() < 0.05, "{}", s.delta());
        assert!((s.delta() - v.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn geometric_worked_examples() {
        let z = [0.0, 0.0];
        assert!(!should_terminate_geom(&[1.0, 0.0], 10, &[1.0, 0.0], 10, &z, 1.0));
        assert!(should_terminate_geom(&[0.0, 1.0], 10, &[1.0, 0.0], 10, &z, 1.0));
        assert!(!should_terminate_geom(&[2.0, 0.0], 10, &[1.0, 0.0], 10, &z, 1.0));
    }

    #[test]
    fn alpha_ranges_are_validated() {
        assert!(TerminationStrategy::geometric(2.0).is_ok());
        assert!(TerminationStrategy::geometric(2.01).is_err());
        assert!(TerminationStrategy::geometric(-0.1).is_err());
        assert!(QStats::new(1.5, DEFAULT_BETA).is_err());
        assert!(QStats::new(f64::INFINITY, DEFAULT_BETA).is_ok());
        assert!(QStats::new(0.5, 1.0).is_err());
    }

    fn vecs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, u32, u32)> {
        (1usize..4).prop_flat_map(|n| {
            (
                prop::collection::vec(-10.0..10.0f64, n),
                prop::collection::vec(-10.0..10.0f64, n),
                prop::collection::vec(-10.0..10.0f64, n),
                1u32..300,
                1u32..300,
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn geometric_never_fires_at_alpha_two_or_more((p, c, s, dp, dc) in vecs(), extra in 0.0..3.0f64) {
            prop_assert!(!should_terminate_geom(&p, dp, &c, dc, &s, 2.0 + extra));
        }

        #[test]
        fn geometric_fires_on_any_difference_at_alpha_zero((p, c, s, dp, dc) in vecs()) {
            let (v1, v2) = implied_velocities(&p, dp, &c, dc, &s);
            prop_assert_eq!(should_terminate_geom(&p, dp, &c, dc, &s, 0.0), v1 != v2);
        }

        #[test]
        fn geometric_verdict_is_scale_invariant((p, c, s, dp, dc) in vecs(), alpha in 0.0..2.0f64, k in 0u32..8) {
            // Powers of two scale exactly in floating point.
            let scale = (1u64 << k) as f64;
            let sc = |v: &[f64]| v.iter().map(|x| x * scale).collect::<Vec<_>>();
            prop_assert_eq!(
                should_terminate_geom(&p, dp, &c, dc, &s, alpha),
                should_terminate_geom(&sc(&p), dp, &sc(&c), dc, &sc(&s), alpha)
            );
        }

        #[test]
        fn q_verdict_is_monotone_in_alpha(gap in -5.0..5.0f64, delta in 0.0..3.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let mk = |alpha| {
                let mut s = QStats::new(alpha, DEFAULT_BETA).unwrap();
                update_q_stats(&mut s, 0.0).unwrap();
                s.var = delta * delta;
                s
            };
            let (mut s_lo, mut s_hi) = (mk(lo), mk(hi));
            if should_terminate_q(gap, 0.0, &mut s_hi) {
                prop_assert!(should_terminate_q(gap, 0.0, &mut s_lo));
            }
        }
    }

    /// Scripted hierarchy: `firing` lists levels whose proposal differs.
    struct Scripted {
        states: Vec<ActionState>,
        firing: Vec<usize>,
        restarts: Vec<(usize, u64)>,
        serial: u64,
    }

    impl Scripted {
        fn new(depth: usize, firing: Vec<usize>) -> Self {
            let states = (1..=depth)
                .map(|l| ActionState::new(TimedSubgoal::new(vec![1.0, 0.0], 50).unwrap(), 0, vec![l as f64], l))
                .collect();
            Self { states, firing, restarts: Vec::new(), serial: 100 }
        }
    }

    impl EatLevels for Scripted {
        fn depth(&self) -> usize {
            self.states.len()
        }
        fn action_state(&self, level: usize) -> &ActionState {
            &self.states[level - 1]
        }
        fn propose(&self, level: usize) -> TimedSubgoal {
            let target = if self.firing.contains(&level) { vec![0.0, 1.0] } else { vec![1.0, 0.0] };
            TimedSubgoal::new(target, 50 - 3).unwrap()
        }
        fn q_value(&self, _level: usize, action: &TimedSubgoal) -> f64 {
            action.target[1] * 10.0
        }
        fn projection(&self, _level: usize) -> Vec<f64> {
            vec![0.0, 0.0]
        }
        fn terminate_from(&mut self, level: usize, now: u64, monitor: &mut EatMonitor) {
            for l in (1..=level).rev() {
                self.serial += 1;
                let fresh = vec![self.serial as f64];
                self.states[l - 1] = ActionState::new(TimedSubgoal::new(vec![0.0, 1.0], 50).unwrap(), now, fresh, l);
                if l >= 2 {
                    monitor.on_action_start(l, 0.0).unwrap();
                }
                self.restarts.push((l, now));
            }
        }
    }

    fn geom_monitor(depth: usize) -> EatMonitor {
        EatMonitor::uniform(StrategyConfig::Geometric { alpha: 1.0 }, depth).unwrap()
    }

    #[test]
    fn no_trigger_leaves_everything_unchanged() {
        let mut h = Scripted::new(3, vec![]);
        let before = h.states.clone();
        let report = eat_scan(&mut h, &mut geom_monitor(3), 3);
        assert_eq!(report.level, None);
        assert_eq!(h.states, before);
        assert!(h.restarts.is_empty());
    }

    #[test]
    fn two_levels_trigger_restarts_both() {
        let mut h = Scripted::new(2, vec![2]);
        let before = h.states.clone();
        let report = eat_scan(&mut h, &mut geom_monitor(2), 3);
        assert_eq!(report.level, Some(2));
        assert_eq!(h.restarts, vec![(2, 3), (1, 3)]);
        for l in 0..2 {
            assert_ne!(h.states[l].frozen_noise(), before[l].frozen_noise());
            assert_eq!(h.states[l].start_time(), 3);
        }
    }

    #[test]
    fn three_levels_trigger_at_two_leaves_top_untouched() {
        let mut h = Scripted::new(3, vec![2, 1]);
        let before = h.states.clone();
        let report = eat_scan(&mut h, &mut geom_monitor(3), 3);
        assert_eq!(report.level, Some(2));
        assert_eq!(h.states[2], before[2]);
        assert_eq!(h.restarts, vec![(2, 3), (1, 3)]);
    }

    #[test]
    fn first_triggering_level_wins_and_scan_breaks() {
        // Both 3 and 2 would fire; only 3 is acted on, once.
        let mut h = Scripted::new(3, vec![3, 2]);
        let report = eat_scan(&mut h, &mut geom_monitor(3), 4);
        assert_eq!(report.level, Some(3));
        assert_eq!(h.restarts, vec![(3, 4), (2, 4), (1, 4)]);
        // After the restart the proposals at level 2 would still differ, but
        // the scan has stopped.
        assert_eq!(h.restarts.iter().filter(|r| r.0 == 2).count(), 1);
    }

    #[test]
    fn q_monitor_fires_on_better_proposal_and_updates_stats() {
        let mut h = Scripted::new(2, vec![2]);
        let mut monitor = EatMonitor::uniform(StrategyConfig::QBased { alpha: 0.5, beta: DEFAULT_BETA }, 2).unwrap();
        // Uninitialized: nothing happens.
        assert_eq!(eat_scan(&mut h, &mut monitor, 1).level, None);
        monitor.on_action_start(2, 0.0).unwrap();
        let report = eat_scan(&mut h, &mut monitor, 2);
        assert_eq!(report.level, Some(2));
        assert!((report.gap - 10.0).abs() < 1e-12);
    }

    #[test]
    fn never_firing_configurations() {
        let mut h = Scripted::new(2, vec![2]);
        let mut never_geom = EatMonitor::uniform(StrategyConfig::Geometric { alpha: 2.0 }, 2).unwrap();
        assert_eq!(eat_scan(&mut h, &mut never_geom, 1).level, None);
        let mut never_q = EatMonitor::uniform(StrategyConfig::QBased { alpha: f64::INFINITY, beta: DEFAULT_BETA }, 2).unwrap();
        never_q.on_action_start(2, 1.0).unwrap();
        assert_eq!(eat_scan(&mut h, &mut never_q, 1).level, None);
    }
}
