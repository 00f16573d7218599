//! Fully connected network with rectified hidden layers and a linear head,
//! stored as one flat parameter vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    /// Layer widths, input first: `[in, hidden.., out]`.
    pub sizes: Vec<usize>,
    /// Per layer: `out × in` weights (row-major) followed by `out` biases.
    pub params: Vec<f64>,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    /// Input followed by every layer's post-activation output.
    activations: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }
}

impl Mlp {
    pub fn param_count_for(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn new(sizes: &[usize], seed: u64) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output widths");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(Self::param_count_for(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] {
                params.push(rng.random_range(-bound..bound));
            }
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Mlp {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; Self::param_count_for(sizes)],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Zeroes the weights and bias of the output layer.
    pub fn zero_output_layer(&mut self) {
        let n = self.sizes.len();
        let (i, o) = (self.sizes[n - 2], self.sizes[n - 1]);
        let len = self.params.len();
        self.params[len - (i * o + o)..].iter_mut().for_each(|p| *p = 0.0);
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.forward_cached(input).activations.pop().unwrap()
    }

    pub fn forward_cached(&self, input: &[f64]) -> MlpCache {
        assert_eq!(input.len(), self.input_dim());
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(input.to_vec());
        let layers = self.sizes.len() - 1;
        let mut offset = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let bias = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let x = activations.last().unwrap();
            let mut y: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    bias[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            if l + 1 < layers {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            activations.push(y);
            offset += n_in * n_out + n_out;
        }
        MlpCache { activations }
    }

    /// Accumulates parameter gradients into `d_params` and returns the
    /// gradient w.r.t. the input.
    pub fn backward(&self, cache: &MlpCache, d_output: &[f64], d_params: &mut [f64]) -> Vec<f64> {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut grad = d_output.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < layers {
                // ReLU: the stored output is zero exactly where it was clamped.
                for (g, y) in grad.iter_mut().zip(&cache.activations[l + 1]) {
                    if *y <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let x = &cache.activations[l];
            let base = offsets[l];
            let weights = &self.params[base..base + n_in * n_out];
            let mut d_x = vec![0.0; n_in];
            for o in 0..n_out {
                let g = grad[o];
                if g == 0.0 {
                    continue;
                }
                let row = base + o * n_in;
                for i in 0..n_in {
                    d_params[row + i] += g * x[i];
                    d_x[i] += g * weights[o * n_in + i];
                }
                d_params[base + n_in * n_out + o] += g;
            }
            grad = d_x;
        }
        grad
    }
}
