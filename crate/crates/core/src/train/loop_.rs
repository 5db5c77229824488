use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{SplitPlan, TrainError};
use crate::autodiff::{Mode, Tensor};
use crate::model::PdNet;
use crate::segment::SpeechChunk;
use crate::util::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub early_stop_patience: usize,
    /// Share of training chunks held out for early stopping; 0 disables it.
    pub val_frac: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 20,
            batch_size: 16,
            early_stop_patience: 4,
            val_frac: 0.1,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidHyper(m.into()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.val_frac) {
            return bad("val_frac must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Mean training loss per completed epoch.
    pub losses: Vec<f64>,
    /// Eval-mode validation loss per epoch (empty without a validation set).
    pub val_losses: Vec<f64>,
    /// Epoch (0-based) whose parameters were kept.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    /// Subjects whose chunks were used for gradient steps or validation.
    pub used_subjects: BTreeSet<String>,
    pub train_chunks: usize,
    pub val_chunks: usize,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    fn new(net: &PdNet) -> Self {
        let z: Vec<Vec<f64>> = net.trainable().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: z.clone(),
            v: z,
            step: 0,
        }
    }

    fn update(&mut self, params: [&mut Tensor; 10], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        for (i, p) in params.into_iter().enumerate() {
            let g = p.grad().to_vec();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, w) in p.values_mut().iter_mut().enumerate() {
                m[j] = BETA1 * m[j] + (1.0 - BETA1) * g[j];
                v[j] = BETA2 * v[j] + (1.0 - BETA2) * g[j] * g[j];
                *w -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Eval-mode mean cross-entropy over `chunks`.
pub fn mean_loss(net: &PdNet, chunks: &[&SpeechChunk]) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for batch in chunks.chunks(32) {
        let refs: Vec<&[f64]> = batch.iter().map(|c| c.samples.as_slice()).collect();
        let targets: Vec<usize> = batch.iter().map(|c| c.label.index()).collect();
        let mut pass = net.forward(&refs, Mode::Eval)?;
        let (loss, _) = pass
            .tape
            .softmax_xent(pass.logits, &targets)
            .map_err(crate::model::ModelError::from)?;
        total += pass.tape.value(loss).values()[0] * batch.len() as f64;
    }
    Ok(total / chunks.len() as f64)
}

/// Train `net` in place on the chunks of `plan.train_subjects`. Chunks from
/// any other subject are ignored; a chunk from a test subject reaching the
/// optimizer is reported as leakage.
pub fn train(
    net: &mut PdNet,
    chunks: &[SpeechChunk],
    plan: &SplitPlan,
    hyper: &Hyper,
) -> Result<TrainOutcome, TrainError> {
    hyper.validate()?;
    let mut pool: Vec<&SpeechChunk> = chunks
        .iter()
        .filter(|c| plan.train_subjects.contains(&c.subject_id))
        .collect();
    if pool.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if let Some(c) = pool.iter().find(|c| plan.test_subjects.contains(&c.subject_id)) {
        return Err(TrainError::Leakage(c.subject_id.clone()));
    }
    if let Some(c) = pool.iter().find(|c| c.samples.len() != net.chunk_len()) {
        return Err(crate::model::ModelError::ShapeMismatch(format!(
            "chunk of {} samples, network expects {}",
            c.samples.len(),
            net.chunk_len()
        ))
        .into());
    }

    let mut rng = rng_for(plan.seed, 0x7_0000);
    pool.shuffle(&mut rng);
    let n_val = if hyper.val_frac > 0.0 && pool.len() >= 2 {
        ((pool.len() as f64 * hyper.val_frac).round() as usize).clamp(1, pool.len() - 1)
    } else {
        0
    };
    let val: Vec<&SpeechChunk> = pool.drain(..n_val).collect();
    let mut train_set = pool;
    let used_subjects = train_set
        .iter()
        .chain(&val)
        .map(|c| c.subject_id.clone())
        .collect();

    let mut adam = Adam::new(net);
    let mut out = TrainOutcome {
        losses: Vec::new(),
        val_losses: Vec::new(),
        best_epoch: None,
        stopped_early: false,
        used_subjects,
        train_chunks: train_set.len(),
        val_chunks: val.len(),
    };
    let mut best: Option<(f64, PdNet)> = None;
    let mut since_best = 0;

    for epoch in 0..hyper.epochs {
        train_set.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_set.chunks(hyper.batch_size) {
            let refs: Vec<&[f64]> = batch.iter().map(|c| c.samples.as_slice()).collect();
            let targets: Vec<usize> = batch.iter().map(|c| c.label.index()).collect();
            let mut pass = net.forward(&refs, Mode::Train)?;
            let (loss, _) = pass
                .tape
                .softmax_xent(pass.logits, &targets)
                .map_err(crate::model::ModelError::from)?;
            let l = pass.tape.value(loss).values()[0];
            if !l.is_finite() {
                return Err(TrainError::DivergenceDetected { epoch, loss: l });
            }
            epoch_loss += l * batch.len() as f64;
            pass.tape.backward(loss, &[1.0]).map_err(crate::model::ModelError::from)?;
            net.zero_grad();
            net.accumulate_grads(&pass);
            net.apply_batch_stats(&pass);
            adam.update(net.trainable_mut(), hyper.lr);
        }
        out.losses.push(epoch_loss / train_set.len() as f64);

        if val.is_empty() {
            out.best_epoch = Some(epoch);
            continue;
        }
        let vl = mean_loss(net, &val)?;
        if !vl.is_finite() {
            return Err(TrainError::DivergenceDetected { epoch, loss: vl });
        }
        out.val_losses.push(vl);
        if best.as_ref().map_or(true, |(b, _)| vl < *b) {
            best = Some((vl, net.clone()));
            out.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= hyper.early_stop_patience {
                out.stopped_early = true;
                break;
            }
        }
    }
    if let Some((_, b)) = best {
        *net = b;
    }
    net.zero_grad();
    Ok(out)
}
