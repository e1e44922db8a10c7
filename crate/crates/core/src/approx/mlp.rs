use super::ApproxError;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

/// Dense feed-forward network: rectifier on hidden layers, identity output.
///
/// Parameters live in one flat buffer, layer by layer, each layer as a
/// row-major `out x in` weight block followed by `out` biases. The same layout
/// is used for gradients, optimizer moments and checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer activations from [`Mlp::forward_cached`], input first.
#[derive(Debug, Clone)]
pub struct Forward {
    layer_sizes: Vec<usize>,
    activations: Vec<Vec<f64>>,
}

impl Forward {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("at least input and output")
    }

    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Fan-in scaled uniform initialization, `U(-1/sqrt(in), 1/sqrt(in))`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self, ApproxError> {
        let mut net = Self::zeros(sizes)?;
        let mut offset = 0;
        for w in sizes.windows(2) {
            let (fan_in, out) = (w[0], w[1]);
            let bound = 1.0 / libm::sqrt(fan_in as f64);
            for p in &mut net.params[offset..offset + fan_in * out + out] {
                *p = rng.random_range(-bound..bound);
            }
            offset += fan_in * out + out;
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self, ApproxError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(ApproxError::BadLayout);
        }
        Ok(Self { sizes: sizes.to_vec(), params: vec![0.0; param_count(sizes)] })
    }

    pub fn from_parts(sizes: &[usize], params: Vec<f64>) -> Result<Self, ApproxError> {
        let net = Self::zeros(sizes)?;
        if params.len() != net.params.len() {
            return Err(ApproxError::Shape { expected: net.params.len(), got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(ApproxError::NonFinite);
        }
        Ok(Self { sizes: sizes.to_vec(), params })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("validated")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Offsets of the weight block and bias block of layer `l` (0-based).
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let mut offset = 0;
        for w in self.sizes.windows(2).take(l) {
            offset += w[0] * w[1] + w[1];
        }
        let (fan_in, out) = (self.sizes[l], self.sizes[l + 1]);
        (offset, offset + fan_in * out)
    }

    fn check_input(&self, input: &[f64]) -> Result<(), ApproxError> {
        if input.len() != self.input_dim() {
            return Err(ApproxError::Shape { expected: self.input_dim(), got: input.len() });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, ApproxError> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let layers = self.sizes.len() - 1;
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, out) = (self.sizes[l], self.sizes[l + 1]);
            x = self.affine(offset, fan_in, out, &x, l + 1 < layers);
            offset += fan_in * out + out;
        }
        Ok(x)
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<Forward, ApproxError> {
        self.check_input(input)?;
        let layers = self.sizes.len() - 1;
        let mut activations = Vec::with_capacity(layers + 1);
        activations.push(input.to_vec());
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, out) = (self.sizes[l], self.sizes[l + 1]);
            let next = self.affine(offset, fan_in, out, &activations[l], l + 1 < layers);
            activations.push(next);
            offset += fan_in * out + out;
        }
        Ok(Forward { layer_sizes: self.sizes.clone(), activations })
    }

    #[inline]
    fn affine(&self, offset: usize, fan_in: usize, out: usize, x: &[f64], rectify: bool) -> Vec<f64> {
        let w = &self.params[offset..offset + fan_in * out];
        let b = &self.params[offset + fan_in * out..offset + fan_in * out + out];
        let mut y = Vec::with_capacity(out);
        for o in 0..out {
            let row = &w[o * fan_in..(o + 1) * fan_in];
            let mut acc = b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            y.push(if rectify && acc < 0.0 { 0.0 } else { acc });
        }
        y
    }

    /// Reverse pass for one sample. Adds `d loss / d params` into `grads` and
    /// returns `d loss / d input`.
    pub fn backward_into(&self, cache: &Forward, upstream: &[f64], grads: &mut [f64]) -> Result<Vec<f64>, ApproxError> {
        if cache.layer_sizes != self.sizes {
            return Err(ApproxError::CacheMismatch);
        }
        if upstream.len() != self.output_dim() {
            return Err(ApproxError::Shape { expected: self.output_dim(), got: upstream.len() });
        }
        if grads.len() != self.params.len() {
            return Err(ApproxError::Shape { expected: self.params.len(), got: grads.len() });
        }
        let layers = self.sizes.len() - 1;
        let mut delta = upstream.to_vec();
        for l in (0..layers).rev() {
            let (fan_in, out) = (self.sizes[l], self.sizes[l + 1]);
            let (w_off, b_off) = self.layer_offsets(l);
            if l + 1 < layers {
                // Rectifier: the cached output is zero exactly where the unit was off.
                for (d, &a) in delta.iter_mut().zip(&cache.activations[l + 1]) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let x = &cache.activations[l];
            let mut dx = vec![0.0; fan_in];
            for o in 0..out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                grads[b_off + o] += d;
                let row = w_off + o * fan_in;
                let w = &self.params[row..row + fan_in];
                let g = &mut grads[row..row + fan_in];
                for i in 0..fan_in {
                    g[i] += d * x[i];
                    dx[i] += d * w[i];
                }
            }
            delta = dx;
        }
        Ok(delta)
    }

    /// Parameter gradient of `upstream . output` for one sample.
    pub fn backward(&self, cache: &Forward, upstream: &[f64]) -> Result<Vec<f64>, ApproxError> {
        let mut grads = vec![0.0; self.params.len()];
        self.backward_into(cache, upstream, &mut grads)?;
        Ok(grads)
    }

    /// `target <- (1 - tau) target + tau self`.
    pub fn polyak_into(&self, target: &mut Mlp, tau: f64) -> Result<(), ApproxError> {
        if target.sizes != self.sizes {
            return Err(ApproxError::Shape { expected: self.params.len(), got: target.params.len() });
        }
        if tau >= 1.0 {
            target.params.copy_from_slice(&self.params);
            return Ok(());
        }
        for (t, &p) in target.params.iter_mut().zip(&self.params) {
            *t = (1.0 - tau) * *t + tau * p;
        }
        Ok(())
    }
}
