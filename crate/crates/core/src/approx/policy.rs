use super::ApproxError;
use alloc::vec::Vec;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Largest action magnitude; keeps squashed actions strictly inside `(-1, 1)`.
pub const ACTION_LIMIT: f64 = 1.0 - 1e-9;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const LN_2: f64 = core::f64::consts::LN_2;

/// Diagonal Gaussian over pre-squash values; actions are `tanh` of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicyHead {
    pub mean: Vec<f64>,
    /// Clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub log_std: Vec<f64>,
    /// Which log-std entries hit the clamp (their gradient is zero).
    pub clamped: Vec<bool>,
}

/// One reparameterized sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SquashedSample {
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub pre_squash: Vec<f64>,
}

/// `ln(1 - tanh(u)^2)`, stable for large `|u|`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 { x } else { libm::log1p(libm::exp(x)) }
}

impl GaussianPolicyHead {
    /// Splits a network output `[mean.., log_std..]`.
    pub fn from_output(raw: &[f64]) -> Result<Self, ApproxError> {
        if raw.len() % 2 != 0 || raw.is_empty() {
            return Err(ApproxError::Shape { expected: 2, got: raw.len() });
        }
        let d = raw.len() / 2;
        let mean = raw[..d].to_vec();
        let clamped = raw[d..].iter().map(|&s| !(LOG_STD_MIN..=LOG_STD_MAX).contains(&s)).collect();
        let log_std = raw[d..].iter().map(|&s| s.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
        Ok(Self { mean, log_std, clamped })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `action = tanh(mean + exp(log_std) * noise)` with its log-density,
    /// including the change-of-variables correction for `tanh`.
    pub fn sample(&self, noise: &[f64]) -> Result<SquashedSample, ApproxError> {
        if noise.len() != self.dim() {
            return Err(ApproxError::Shape { expected: self.dim(), got: noise.len() });
        }
        if noise.iter().any(|e| !e.is_finite()) {
            return Err(ApproxError::NonFinite);
        }
        let mut action = Vec::with_capacity(self.dim());
        let mut pre_squash = Vec::with_capacity(self.dim());
        let mut log_prob = 0.0;
        for ((&m, &s), &e) in self.mean.iter().zip(&self.log_std).zip(noise) {
            let u = m + libm::exp(s) * e;
            log_prob += -0.5 * e * e - s - HALF_LN_2PI - log_one_minus_tanh_sq(u);
            pre_squash.push(u);
            action.push(libm::tanh(u).clamp(-ACTION_LIMIT, ACTION_LIMIT));
        }
        Ok(SquashedSample { action, log_prob, pre_squash })
    }

    /// Deterministic action `tanh(mean)`.
    pub fn mean_action(&self) -> Vec<f64> {
        self.mean.iter().map(|&m| libm::tanh(m).clamp(-ACTION_LIMIT, ACTION_LIMIT)).collect()
    }

    /// Gradient of `coef * log_prob + sum_j action_grad[j] * action[j]`
    /// with respect to the raw network output `[mean.., log_std..]`, noise held fixed.
    pub fn output_gradient(&self, sample: &SquashedSample, noise: &[f64], coef: f64, action_grad: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut g = alloc::vec![0.0; 2 * d];
        for j in 0..d {
            let a = sample.action[j];
            let sigma = libm::exp(self.log_std[j]);
            // d log_prob / d u = 2 tanh(u); d action / d u = 1 - tanh(u)^2.
            let du = coef * 2.0 * a + action_grad[j] * (1.0 - a * a);
            g[j] = du;
            g[d + j] = if self.clamped[j] { 0.0 } else { -coef + du * sigma * noise[j] };
        }
        g
    }
}
