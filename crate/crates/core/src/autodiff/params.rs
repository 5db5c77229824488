use rand::Rng;

use super::{AutodiffError, Tensor};

/// 1D convolution weights `(out, in, kernel)` and bias `(out)`. Stride is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Tensor,
    pub padding: usize,
}

impl ConvParams {
    /// Zero-initialized layer with "same" padding. `kernel` must be odd.
    pub fn zeros(out_channels: usize, in_channels: usize, kernel: usize) -> Result<Self, AutodiffError> {
        if kernel % 2 == 0 {
            return Err(AutodiffError::ShapeMismatch(format!("kernel {kernel} must be odd")));
        }
        Ok(Self {
            weight: Tensor::zeros(vec![out_channels, in_channels, kernel]),
            bias: Tensor::zeros(vec![out_channels]),
            padding: (kernel - 1) / 2,
        })
    }

    /// Weights uniform in `±sqrt(1 / fan_in)`, bias zero.
    pub fn fan_in_uniform(
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        rng: &mut impl Rng,
    ) -> Result<Self, AutodiffError> {
        let mut p = Self::zeros(out_channels, in_channels, kernel)?;
        let s = (1.0 / (in_channels * kernel) as f64).sqrt();
        p.weight
            .values_mut()
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-s..s));
        Ok(p)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }
}

/// Batch-norm affine parameters and running statistics for `channels` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct BnParams {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    /// Weight of the newest batch in the running averages.
    pub momentum: f64,
    pub epsilon: f64,
}

impl BnParams {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::new(vec![channels], vec![1.0; channels]).expect("shape matches"),
            beta: Tensor::zeros(vec![channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            epsilon: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Fold one training batch's statistics into the running averages.
    /// `var` is the biased batch variance over `count` values per channel.
    pub fn update_running(&mut self, mean: &[f64], var: &[f64], count: usize) {
        let unbias = if count > 1 {
            count as f64 / (count - 1) as f64
        } else {
            1.0
        };
        let m = self.momentum;
        for c in 0..self.channels() {
            self.running_mean[c] = (1.0 - m) * self.running_mean[c] + m * mean[c];
            self.running_var[c] = (1.0 - m) * self.running_var[c] + m * var[c] * unbias;
        }
    }
}

/// Fully connected layer: weight `(out, in)`, bias `(out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl AffineParams {
    pub fn zeros(out_features: usize, in_features: usize) -> Self {
        Self {
            weight: Tensor::zeros(vec![out_features, in_features]),
            bias: Tensor::zeros(vec![out_features]),
        }
    }

    pub fn fan_in_uniform(out_features: usize, in_features: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(out_features, in_features);
        let s = (1.0 / in_features as f64).sqrt();
        p.weight
            .values_mut()
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-s..s));
        p
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }
}
