//! The classifier: two convolutional blocks (conv, batch norm, ReLU) with
//! 48 and 96 channels, kernel 3 and padding 1, then flatten and a fully
//! connected layer producing two logits (HC, PD).

mod file;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AffineParams, AutodiffError, BatchStats, BnParams, ConvParams, Mode, Tape, Tensor, Var};
use crate::util::rng_for;

pub use file::{FORMAT_VERSION, MAGIC};

pub const CONV1_CHANNELS: usize = 48;
pub const CONV2_CHANNELS: usize = 96;
pub const KERNEL: usize = 3;
pub const PADDING: usize = 1;
pub const CLASSES: usize = 2;
/// Smallest chunk the kernel can cover.
pub const MIN_CHUNK_LEN: usize = KERNEL;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("chunk_len {0} is shorter than the kernel ({MIN_CHUNK_LEN})")]
    ChunkTooShort(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("model file version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("model file {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

impl ModelError {
    pub(crate) fn is_input(&self) -> bool {
        matches!(
            self,
            ModelError::VersionMismatch { .. } | ModelError::CorruptFile(_) | ModelError::Io { .. }
        )
    }
}

/// Where a parameter set came from; written into the model file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdNet {
    pub conv1: ConvParams,
    pub bn1: BnParams,
    pub conv2: ConvParams,
    pub bn2: BnParams,
    pub fc: AffineParams,
    chunk_len: usize,
    seed: u64,
    pub provenance: Provenance,
}

/// Tape handles for every trainable tensor, in [`PdNet::trainable_mut`] order.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub vars: [Var; 10],
}

/// Result of one forward pass. The tape stays alive so callers can seed a
/// backward sweep from the loss or from a single class logit.
pub struct ForwardPass {
    pub tape: Tape,
    pub input: Var,
    /// Output of the second block, `(N, 96, T)`: the maps Grad-CAM weights.
    pub activations: Var,
    /// `(N, 2)` logits.
    pub logits: Var,
    pub params: ParamVars,
    pub mode: Mode,
    bn_stats: [Option<BatchStats>; 2],
    batch: usize,
}

impl ForwardPass {
    pub fn batch_len(&self) -> usize {
        self.batch
    }

    pub fn logits(&self) -> &[f64] {
        self.tape.value(self.logits).values()
    }

    pub fn activations(&self) -> &Tensor {
        self.tape.value(self.activations)
    }
}

impl PdNet {
    /// Fan-in uniform weights, zero biases, identity batch norm. Fully determined by `seed`.
    pub fn init(chunk_len: usize, seed: u64) -> Result<Self, ModelError> {
        if chunk_len < MIN_CHUNK_LEN {
            return Err(ModelError::ChunkTooShort(chunk_len));
        }
        let mut rng = rng_for(seed, 0x1217);
        Ok(Self {
            conv1: ConvParams::fan_in_uniform(CONV1_CHANNELS, 1, KERNEL, &mut rng)?,
            bn1: BnParams::new(CONV1_CHANNELS),
            conv2: ConvParams::fan_in_uniform(CONV2_CHANNELS, CONV1_CHANNELS, KERNEL, &mut rng)?,
            bn2: BnParams::new(CONV2_CHANNELS),
            fc: AffineParams::fan_in_uniform(CLASSES, CONV2_CHANNELS * chunk_len, &mut rng),
            chunk_len,
            seed,
            provenance: Provenance::default(),
        })
    }

    pub fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of stored `f64`s (weights, biases, BN affine and running statistics).
    pub fn parameter_count(chunk_len: usize) -> usize {
        let conv1 = CONV1_CHANNELS * KERNEL + CONV1_CHANNELS;
        let bn1 = 2 * CONV1_CHANNELS * 2;
        let conv2 = CONV2_CHANNELS * CONV1_CHANNELS * KERNEL + CONV2_CHANNELS;
        let bn2 = 2 * CONV2_CHANNELS * 2;
        let fc = CLASSES * CONV2_CHANNELS * chunk_len + CLASSES;
        conv1 + bn1 + conv2 + bn2 + fc
    }

    /// Trainable tensors in a fixed order (matches [`ParamVars`]).
    pub fn trainable_mut(&mut self) -> [&mut Tensor; 10] {
        [
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.bn1.gamma,
            &mut self.bn1.beta,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
            &mut self.fc.weight,
            &mut self.fc.bias,
        ]
    }

    pub fn trainable(&self) -> [&Tensor; 10] {
        [
            &self.conv1.weight,
            &self.conv1.bias,
            &self.bn1.gamma,
            &self.bn1.beta,
            &self.conv2.weight,
            &self.conv2.bias,
            &self.bn2.gamma,
            &self.bn2.beta,
            &self.fc.weight,
            &self.fc.bias,
        ]
    }

    pub fn zero_grad(&mut self) {
        self.trainable_mut().into_iter().for_each(Tensor::zero_grad);
    }

    /// Forward a batch of fitted chunks. `Eval` uses running BN statistics and
    /// treats samples independently; `Train` uses batch statistics, which the
    /// caller folds in with [`PdNet::apply_batch_stats`].
    pub fn forward(&self, batch: &[&[f64]], mode: Mode) -> Result<ForwardPass, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::ShapeMismatch("empty batch".into()));
        }
        let t = self.chunk_len;
        if let Some((i, c)) = batch.iter().enumerate().find(|(_, c)| c.len() != t) {
            return Err(ModelError::ShapeMismatch(format!(
                "chunk {i} has {} samples, network expects {t}",
                c.len()
            )));
        }
        let n = batch.len();
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![n, 1, t], batch.concat())?);
        let p = self.trainable().map(|p| tape.leaf(p.detached()));

        let h = tape.conv1d(x, p[0], p[1], self.conv1.padding)?;
        let (h, s1) = tape.batchnorm(
            h,
            p[2],
            p[3],
            (&self.bn1.running_mean, &self.bn1.running_var),
            self.bn1.epsilon,
            mode,
        )?;
        let h = tape.relu(h)?;
        let h = tape.conv1d(h, p[4], p[5], self.conv2.padding)?;
        let (h, s2) = tape.batchnorm(
            h,
            p[6],
            p[7],
            (&self.bn2.running_mean, &self.bn2.running_var),
            self.bn2.epsilon,
            mode,
        )?;
        let activations = tape.relu(h)?;
        let flat = tape.flatten(activations)?;
        let logits = tape.affine(flat, p[8], p[9])?;
        Ok(ForwardPass {
            tape,
            input: x,
            activations,
            logits,
            params: ParamVars { vars: p },
            mode,
            bn_stats: [s1, s2],
            batch: n,
        })
    }

    /// Fold a training pass's batch statistics into the running averages.
    pub fn apply_batch_stats(&mut self, pass: &ForwardPass) {
        if let Some(s) = &pass.bn_stats[0] {
            self.bn1.update_running(&s.mean, &s.var, s.count);
        }
        if let Some(s) = &pass.bn_stats[1] {
            self.bn2.update_running(&s.mean, &s.var, s.count);
        }
    }

    /// Add the tape's parameter gradients into this network's gradient buffers.
    pub fn accumulate_grads(&mut self, pass: &ForwardPass) {
        let vars = pass.params.vars;
        for (p, v) in self.trainable_mut().into_iter().zip(vars) {
            p.grad_mut()
                .iter_mut()
                .zip(pass.tape.grad(v))
                .for_each(|(a, &b)| *a += b);
        }
    }

    /// Eval-mode logits, `(N, 2)` row-major.
    pub fn predict_logits(&self, batch: &[&[f64]]) -> Result<Vec<f64>, ModelError> {
        Ok(self.forward(batch, Mode::Eval)?.logits().to_vec())
    }
}
