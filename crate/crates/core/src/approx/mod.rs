//! Dense networks, a squashed-Gaussian policy head and the Adam optimizer.

mod adam;
mod mlp;
mod policy;

pub use adam::{adam_step, AdamState};
pub use mlp::{param_count, Forward, Mlp};
pub use policy::{log_one_minus_tanh_sq, GaussianPolicyHead, SquashedSample, ACTION_LIMIT, LOG_STD_MAX, LOG_STD_MIN};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ApproxError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("network needs at least an input and an output layer, all non-empty")]
    BadLayout,
    #[error("forward cache was produced by a network of a different shape")]
    CacheMismatch,
    #[error("non-finite value")]
    NonFinite,
}

/// Gaussian sample for one squashed action: convenience wrapper over
/// [`GaussianPolicyHead::sample`].
pub fn sample_action(head: &GaussianPolicyHead, noise: &[f64]) -> Result<(alloc::vec::Vec<f64>, f64), ApproxError> {
    let s = head.sample(noise)?;
    Ok((s.action, s.log_prob))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent forward pass over nested weight matrices.
    fn reference_forward(sizes: &[usize], params: &[f64], input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        let mut off = 0;
        for l in 0..sizes.len() - 1 {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let w: Vec<Vec<f64>> = (0..n_out).map(|o| params[off + o * n_in..off + (o + 1) * n_in].to_vec()).collect();
            let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            let mut y: Vec<f64> = w.iter().zip(b).map(|(row, bo)| row.iter().zip(&x).map(|(a, c)| a * c).sum::<f64>() + bo).collect();
            if l + 2 < sizes.len() {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            x = y;
            off += n_in * n_out + n_out;
        }
        x
    }

    #[test]
    fn zero_weights_give_last_bias() {
        let mut net = Mlp::zeros(&[3, 4, 2]).unwrap();
        let (_, b) = net.layer_offsets(1);
        net.params_mut()[b] = 0.25;
        net.params_mut()[b + 1] = -1.5;
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.25, -1.5]);
    }

    #[test]
    fn identity_single_layer_passes_through() {
        let mut net = Mlp::zeros(&[3, 3]).unwrap();
        for i in 0..3 {
            net.params_mut()[i * 3 + i] = 1.0;
        }
        assert_eq!(net.forward(&[0.5, -7.0, 2.0]).unwrap(), vec![0.5, -7.0, 2.0]);
    }

    #[test]
    fn forward_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let sizes = [rng.random_range(1..6), rng.random_range(1..8), rng.random_range(1..8), rng.random_range(1..4)];
            let net = Mlp::new(&sizes, &mut rng).unwrap();
            let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a = net.forward(&x).unwrap();
            let b = reference_forward(&sizes, net.params(), &x);
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() < 1e-12);
            }
            assert_eq!(net.forward_cached(&x).unwrap().output(), &a[..]);
        }
    }

    #[test]
    fn shape_errors() {
        let net = Mlp::zeros(&[2, 3, 1]).unwrap();
        assert_eq!(net.forward(&[1.0]), Err(ApproxError::Shape { expected: 2, got: 1 }));
        let other = Mlp::zeros(&[2, 4, 1]).unwrap();
        let cache = other.forward_cached(&[1.0, 2.0]).unwrap();
        assert_eq!(net.backward(&cache, &[1.0]), Err(ApproxError::CacheMismatch));
        assert_eq!(Mlp::zeros(&[2]), Err(ApproxError::BadLayout));
        assert!(Mlp::from_parts(&[1, 1], vec![f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn linear_unit_gradient_by_hand() {
        let net = Mlp::from_parts(&[1, 1], vec![0.7, 0.0]).unwrap();
        let cache = net.forward_cached(&[3.0]).unwrap();
        let g = net.backward(&cache, &[2.0]).unwrap();
        assert_eq!(g, vec![2.0 * 3.0, 2.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&[4, 8, 3], &mut rng).unwrap();
        let cache = net.forward_cached(&[0.1, 0.2, -0.3, 0.4]).unwrap();
        assert!(net.backward(&cache, &[0.0; 3]).unwrap().iter().all(|&g| g == 0.0));
    }

    /// Central differences of `upstream . forward(x)` with step `h`.
    pub(crate) fn numeric_gradient(net: &Mlp, x: &[f64], upstream: &[f64], h: f64) -> Vec<f64> {
        let mut probe = net.clone();
        (0..net.param_count())
            .map(|i| {
                let p = net.params()[i];
                probe.params_mut()[i] = p + h;
                let up: f64 = probe.forward(x).unwrap().iter().zip(upstream).map(|(a, b)| a * b).sum();
                probe.params_mut()[i] = p - h;
                let down: f64 = probe.forward(x).unwrap().iter().zip(upstream).map(|(a, b)| a * b).sum();
                probe.params_mut()[i] = p;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    pub(crate) fn close(analytic: f64, numeric: f64) -> bool {
        let scale = analytic.abs().max(numeric.abs());
        (analytic - numeric).abs() <= 1e-6_f64.max(1e-4 * scale)
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let sizes = [rng.random_range(1..5), rng.random_range(2..7), rng.random_range(2..7), rng.random_range(1..4)];
            let net = Mlp::new(&sizes, &mut rng).unwrap();
            let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.5..1.5)).collect();
            let up: Vec<f64> = (0..sizes[3]).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cache = net.forward_cached(&x).unwrap();
            let analytic = net.backward(&cache, &up).unwrap();
            let numeric = numeric_gradient(&net, &x, &up, 1e-5);
            for (a, n) in analytic.iter().zip(&numeric) {
                assert!(close(*a, *n), "analytic {a} numeric {n}");
            }
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::new(&[3, 6, 1], &mut rng).unwrap();
        let x = [0.3, -0.4, 0.9];
        let cache = net.forward_cached(&x).unwrap();
        let mut scratch = vec![0.0; net.param_count()];
        let dx = net.backward_into(&cache, &[1.0], &mut scratch).unwrap();
        for i in 0..3 {
            let mut up = x;
            let mut down = x;
            up[i] += 1e-5;
            down[i] -= 1e-5;
            let n = (net.forward(&up).unwrap()[0] - net.forward(&down).unwrap()[0]) / 2e-5;
            assert!(close(dx[i], n));
        }
    }

    /// Closed-form density of y = tanh(mu + sigma eps), written from the
    /// Gaussian pdf and the Jacobian of tanh.
    fn reference_log_density(mu: f64, log_std: f64, eps: f64) -> f64 {
        let sigma = libm::exp(log_std);
        let u = mu + sigma * eps;
        let gauss = libm::exp(-0.5 * ((u - mu) / sigma) * ((u - mu) / sigma)) / (sigma * libm::sqrt(2.0 * core::f64::consts::PI));
        let y = libm::tanh(u);
        libm::log(gauss / (1.0 - y * y))
    }

    #[test]
    fn zero_noise_gives_mean_action() {
        let head = GaussianPolicyHead::from_output(&[0.3, -1.2, 0.0, 0.5]).unwrap();
        let (a, _) = sample_action(&head, &[0.0, 0.0]).unwrap();
        assert_eq!(a, vec![libm::tanh(0.3), libm::tanh(-1.2)]);
        assert_eq!(a, head.mean_action());
    }

    #[test]
    fn log_prob_matches_density_formula() {
        for &(mu, ls, eps) in &[(0.2, -0.5, 0.7), (-1.1, 0.3, -1.4), (0.0, 0.0, 0.0), (0.5, -2.0, 2.5)] {
            let head = GaussianPolicyHead::from_output(&[mu, ls]).unwrap();
            let (_, lp) = sample_action(&head, &[eps]).unwrap();
            let reference = reference_log_density(mu, ls, eps);
            assert!((lp - reference).abs() < 1e-10, "{lp} vs {reference}");
        }
    }

    #[test]
    fn log_std_clamp_keeps_log_prob_finite() {
        let head = GaussianPolicyHead::from_output(&[0.1, -500.0]).unwrap();
        assert_eq!(head.log_std[0], LOG_STD_MIN);
        let (_, lp) = sample_action(&head, &[0.3]).unwrap();
        assert!(lp.is_finite());
        let wide = GaussianPolicyHead::from_output(&[0.0, 40.0]).unwrap();
        assert_eq!(wide.log_std[0], LOG_STD_MAX);
    }

    #[test]
    fn non_finite_noise_rejected() {
        let head = GaussianPolicyHead::from_output(&[0.0, 0.0]).unwrap();
        assert_eq!(head.sample(&[f64::INFINITY]), Err(ApproxError::NonFinite));
        assert_eq!(head.sample(&[0.0, 0.0]), Err(ApproxError::Shape { expected: 1, got: 2 }));
    }

    #[test]
    fn head_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let d = rng.random_range(1..4);
            let raw: Vec<f64> = (0..2 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let eps: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let ag: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let coef = rng.random_range(0.0..1.0);
            let objective = |r: &[f64]| {
                let h = GaussianPolicyHead::from_output(r).unwrap();
                let s = h.sample(&eps).unwrap();
                coef * s.log_prob + s.action.iter().zip(&ag).map(|(a, g)| a * g).sum::<f64>()
            };
            let head = GaussianPolicyHead::from_output(&raw).unwrap();
            let s = head.sample(&eps).unwrap();
            let g = head.output_gradient(&s, &eps, coef, &ag);
            for i in 0..2 * d {
                let mut up = raw.clone();
                let mut down = raw.clone();
                up[i] += 1e-5;
                down[i] -= 1e-5;
                let n = (objective(&up) - objective(&down)) / 2e-5;
                assert!(close(g[i], n), "{i}: {} vs {n}", g[i]);
            }
        }
    }

    #[test]
    fn actions_strictly_inside_unit_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let raw = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..2.0)];
            let head = GaussianPolicyHead::from_output(&raw).unwrap();
            let (a, _) = sample_action(&head, &[rng.random_range(-3.0..3.0)]).unwrap();
            assert!(a[0] > -1.0 && a[0] < 1.0);
        }
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut params = vec![1.0, -2.0];
        let mut adam = AdamState::new(2, 1e-3);
        adam_step(&mut adam, &mut params, &[0.0, 0.0]).unwrap();
        assert_eq!(params, vec![1.0, -2.0]);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps).
        let mut params = vec![0.0, 0.0];
        let mut adam = AdamState::new(2, 0.01);
        adam.step(&mut params, &[0.5, -3.0]).unwrap();
        assert!((params[0] + 0.01 * 0.5 / (0.5 + 1e-8)).abs() < 1e-15);
        assert!((params[1] - 0.01 * 3.0 / (3.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn adam_constant_gradient_moves_against_sign() {
        let mut params = vec![0.0, 0.0];
        let mut adam = AdamState::new(2, 0.01);
        for _ in 0..100 {
            adam.step(&mut params, &[2.0, -0.1]).unwrap();
        }
        assert!(params[0] < -0.5 && params[1] > 0.5);
        assert!(adam.step(&mut params, &[1.0]).is_err());
    }

    #[test]
    fn forward_and_sampling_are_bit_deterministic() {
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let a = Mlp::new(&[3, 5, 2], &mut r1).unwrap();
        let b = Mlp::new(&[3, 5, 2], &mut r2).unwrap();
        assert_eq!(a, b);
        let out = a.forward(&[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(out, b.forward(&[0.1, 0.2, 0.3]).unwrap());
        let head = GaussianPolicyHead::from_output(&out).unwrap();
        assert_eq!(head.sample(&[0.4]).unwrap(), head.sample(&[0.4]).unwrap());
    }
}
