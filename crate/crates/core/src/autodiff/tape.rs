use std::sync::atomic::{AtomicU64, Ordering};

use super::ops::{self, BnSaved, ConvDims};
use super::{AutodiffError, Mode, Tensor};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a tensor slot on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

/// Batch statistics produced by a training-mode batch norm, to be folded
/// into running averages by the owner of the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// Values per channel (batch x time).
    pub count: usize,
}

enum Op {
    Conv1d {
        x: usize,
        w: usize,
        b: usize,
        padding: usize,
    },
    BatchNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        train: bool,
        saved: BnSaved,
    },
    Relu {
        x: usize,
    },
    Flatten {
        x: usize,
    },
    Affine {
        x: usize,
        w: usize,
        b: usize,
    },
    SoftmaxXent {
        logits: usize,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
}

struct Node {
    out: usize,
    op: Op,
}

/// Recording of one forward computation. Nodes are stored in creation order,
/// which is a topological order, so the backward sweep is a reverse scan.
pub struct Tape {
    id: u64,
    slots: Vec<Tensor>,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            slots: Vec::new(),
            nodes: Vec::new(),
        }
    }

    fn slot(&self, v: Var) -> Result<usize, AutodiffError> {
        if v.tape != self.id || v.index >= self.slots.len() {
            return Err(AutodiffError::TapeCorrupted(format!(
                "variable {} does not belong to this tape",
                v.index
            )));
        }
        Ok(v.index)
    }

    fn push(&mut self, t: Tensor) -> Var {
        self.slots.push(t);
        Var {
            tape: self.id,
            index: self.slots.len() - 1,
        }
    }

    fn push_node(&mut self, shape: Vec<usize>, values: Vec<f64>, op: Op, inputs: &[usize]) -> Var {
        debug_assert!(
            inputs.iter().any(|&i| self.slots[i].values().iter().any(|v| !v.is_finite()))
                || values.iter().all(|v| v.is_finite()),
            "non-finite output from finite inputs"
        );
        let v = self.push(Tensor::new(shape, values).expect("op produced consistent shape"));
        self.nodes.push(Node { out: v.index, op });
        v
    }

    /// Register an input or parameter. The tensor's gradient buffer is reset.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t.detached())
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.slots[self.slot(v).expect("variable from this tape")]
    }

    pub fn grad(&self, v: Var) -> &[f64] {
        self.value(v).grad()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.slots.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Cross-correlation with zero padding and stride 1. `x` is `(C_in, T)` or
    /// `(N, C_in, T)`, `w` is `(C_out, C_in, K)`, `b` is `(C_out)`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, padding: usize) -> Result<Var, AutodiffError> {
        let (xi, wi, bi) = (self.slot(x)?, self.slot(w)?, self.slot(b)?);
        let xs = self.slots[xi].shape().to_vec();
        let (n, cin, t) = ops::nct(&xs)
            .ok_or_else(|| AutodiffError::ShapeMismatch(format!("conv1d input shape {xs:?}")))?;
        let (cout, wcin, k) = match *self.slots[wi].shape() {
            [o, i, k] => (o, i, k),
            ref s => return Err(AutodiffError::ShapeMismatch(format!("conv1d weight shape {s:?}"))),
        };
        if wcin != cin {
            return Err(AutodiffError::ShapeMismatch(format!(
                "conv1d expects {wcin} input channels, got {cin}"
            )));
        }
        if self.slots[bi].shape() != [cout] {
            return Err(AutodiffError::ShapeMismatch(format!(
                "conv1d bias shape {:?}, expected [{cout}]",
                self.slots[bi].shape()
            )));
        }
        if t == 0 || 2 * padding + 1 != k {
            return Err(AutodiffError::ShapeMismatch(format!(
                "conv1d needs T >= 1 and padding (K-1)/2; got T={t}, K={k}, padding={padding}"
            )));
        }
        let d = ConvDims {
            n,
            cin,
            cout,
            t,
            k,
            padding,
        };
        let out = ops::conv1d_forward(
            &d,
            self.slots[xi].values(),
            self.slots[wi].values(),
            self.slots[bi].values(),
        );
        let shape = if xs.len() == 2 { vec![cout, t] } else { vec![n, cout, t] };
        Ok(self.push_node(
            shape,
            out,
            Op::Conv1d {
                x: xi,
                w: wi,
                b: bi,
                padding,
            },
            &[xi, wi, bi],
        ))
    }

    /// Batch normalization over batch x time per channel. In `Train` mode the
    /// batch statistics are returned; `running` supplies (mean, var) for `Eval`.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: (&[f64], &[f64]),
        epsilon: f64,
        mode: Mode,
    ) -> Result<(Var, Option<BatchStats>), AutodiffError> {
        let (xi, gi, bi) = (self.slot(x)?, self.slot(gamma)?, self.slot(beta)?);
        let xs = self.slots[xi].shape().to_vec();
        let dims = ops::nct(&xs)
            .ok_or_else(|| AutodiffError::ShapeMismatch(format!("batchnorm input shape {xs:?}")))?;
        let (n, c, t) = dims;
        if n == 0 || t == 0 {
            return Err(AutodiffError::EmptyBatch);
        }
        if self.slots[gi].len() != c || self.slots[bi].len() != c || running.0.len() != c || running.1.len() != c {
            return Err(AutodiffError::ShapeMismatch(format!("batchnorm parameters must have {c} channels")));
        }
        let train = mode == Mode::Train;
        let (out, saved) = ops::batchnorm_forward(
            dims,
            self.slots[xi].values(),
            self.slots[gi].values(),
            self.slots[bi].values(),
            if train { None } else { Some(running) },
            epsilon,
        );
        let stats = train.then(|| BatchStats {
            mean: saved.batch_mean.clone(),
            var: saved.batch_var.clone(),
            count: n * t,
        });
        let v = self.push_node(
            xs,
            out,
            Op::BatchNorm {
                x: xi,
                gamma: gi,
                beta: bi,
                train,
                saved,
            },
            &[xi, gi, bi],
        );
        Ok((v, stats))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let xi = self.slot(x)?;
        let shape = self.slots[xi].shape().to_vec();
        let out = self.slots[xi].values().iter().map(|&v| if v < 0.0 { 0.0 } else { v }).collect();
        Ok(self.push_node(shape, out, Op::Relu { x: xi }, &[xi]))
    }

    /// `(N, C, T)` to `(N, C*T)`, or `(C, T)` to `(C*T)`.
    pub fn flatten(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let xi = self.slot(x)?;
        let shape = match *self.slots[xi].shape() {
            [c, t] => vec![c * t],
            [n, c, t] => vec![n, c * t],
            ref s => return Err(AutodiffError::ShapeMismatch(format!("flatten input shape {s:?}"))),
        };
        let out = self.slots[xi].values().to_vec();
        Ok(self.push_node(shape, out, Op::Flatten { x: xi }, &[xi]))
    }

    /// `y = W x + b` for `x` of shape `(F)` or `(N, F)`, `W` `(O, F)`, `b` `(O)`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, AutodiffError> {
        let (xi, wi, bi) = (self.slot(x)?, self.slot(w)?, self.slot(b)?);
        let xs = self.slots[xi].shape().to_vec();
        let (n, f) = ops::nf(&xs)
            .ok_or_else(|| AutodiffError::ShapeMismatch(format!("affine input shape {xs:?}")))?;
        let (o, wf) = match *self.slots[wi].shape() {
            [o, f] => (o, f),
            ref s => return Err(AutodiffError::ShapeMismatch(format!("affine weight shape {s:?}"))),
        };
        if wf != f || self.slots[bi].shape() != [o] {
            return Err(AutodiffError::ShapeMismatch(format!(
                "affine weight {:?} / bias {:?} incompatible with {f} input features",
                self.slots[wi].shape(),
                self.slots[bi].shape()
            )));
        }
        let out = ops::affine_forward(
            (n, f),
            o,
            self.slots[xi].values(),
            self.slots[wi].values(),
            self.slots[bi].values(),
        );
        let shape = if xs.len() == 1 { vec![o] } else { vec![n, o] };
        Ok(self.push_node(shape, out, Op::Affine { x: xi, w: wi, b: bi }, &[xi, wi, bi]))
    }

    /// Mean cross-entropy of softmax(logits) against `targets` (one per row).
    /// Returns the scalar loss and the row-major probabilities.
    pub fn softmax_xent(&mut self, logits: Var, targets: &[usize]) -> Result<(Var, Vec<f64>), AutodiffError> {
        let li = self.slot(logits)?;
        let ls = self.slots[li].shape().to_vec();
        let (n, k) = ops::nf(&ls)
            .ok_or_else(|| AutodiffError::ShapeMismatch(format!("logits shape {ls:?}")))?;
        if targets.len() != n {
            return Err(AutodiffError::ShapeMismatch(format!(
                "{} targets for {n} rows",
                targets.len()
            )));
        }
        if n == 0 {
            return Err(AutodiffError::EmptyBatch);
        }
        if let Some(&class) = targets.iter().find(|&&c| c >= k) {
            return Err(AutodiffError::InvalidTarget { class, classes: k });
        }
        let (loss, probs) = ops::softmax_xent_forward((n, k), self.slots[li].values(), targets);
        let v = self.push_node(
            vec![1],
            vec![loss],
            Op::SoftmaxXent {
                logits: li,
                targets: targets.to_vec(),
                probs: probs.clone(),
            },
            &[li],
        );
        Ok((v, probs))
    }

    /// Reverse sweep from `seed`, accumulating into every reachable gradient buffer.
    pub fn backward(&mut self, seed: Var, seed_grad: &[f64]) -> Result<(), AutodiffError> {
        self.sweep(seed, seed_grad, None)
    }

    /// Like [`Tape::backward`] but stops once `target`'s gradient is complete,
    /// skipping the nodes that produced it. Slots created before `target`
    /// receive only partial gradients.
    pub fn backward_to(&mut self, seed: Var, seed_grad: &[f64], target: Var) -> Result<(), AutodiffError> {
        let t = self.slot(target)?;
        self.sweep(seed, seed_grad, Some(t))
    }

    fn sweep(&mut self, seed: Var, seed_grad: &[f64], stop_at: Option<usize>) -> Result<(), AutodiffError> {
        let si = self.slot(seed)?;
        let expected = self.slots[si].len();
        if seed_grad.len() != expected {
            return Err(AutodiffError::SeedShapeMismatch {
                expected,
                got: seed_grad.len(),
            });
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.slots.len()];
        adj[si] = Some(seed_grad.to_vec());

        for node in self.nodes.iter().rev() {
            if stop_at.is_some_and(|s| node.out <= s) {
                break;
            }
            let Some(g) = adj[node.out].take() else { continue };
            let slots = &self.slots;
            let buf = |i: usize, adj: &mut Vec<Option<Vec<f64>>>| -> Result<(), AutodiffError> {
                if i >= node.out {
                    return Err(AutodiffError::TapeCorrupted(format!(
                        "node {} reads slot {i} created after it",
                        node.out
                    )));
                }
                if adj[i].is_none() {
                    adj[i] = Some(vec![0.0; slots[i].len()]);
                }
                Ok(())
            };
            match &node.op {
                Op::Conv1d { x, w, b, padding } => {
                    for i in [*x, *w, *b] {
                        buf(i, &mut adj)?;
                    }
                    let (n, cin, t) = ops::nct(slots[*x].shape()).expect("checked in forward");
                    let ws = slots[*w].shape();
                    let d = ConvDims {
                        n,
                        cin,
                        cout: ws[0],
                        t,
                        k: ws[2],
                        padding: *padding,
                    };
                    let mut dx = adj[*x].take().expect("allocated");
                    let mut dw = adj[*w].take().expect("allocated");
                    let mut db = adj[*b].take().expect("allocated");
                    ops::conv1d_backward(&d, slots[*x].values(), slots[*w].values(), &g, Some(&mut dx), &mut dw, &mut db);
                    adj[*x] = Some(dx);
                    adj[*w] = Some(dw);
                    adj[*b] = Some(db);
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    train,
                    saved,
                } => {
                    for i in [*x, *gamma, *beta] {
                        buf(i, &mut adj)?;
                    }
                    let dims = ops::nct(slots[*x].shape()).expect("checked in forward");
                    let mut dx = adj[*x].take().expect("allocated");
                    let mut dg = adj[*gamma].take().expect("allocated");
                    let mut dbeta = adj[*beta].take().expect("allocated");
                    ops::batchnorm_backward(
                        dims,
                        saved,
                        slots[*gamma].values(),
                        *train,
                        &g,
                        Some(&mut dx),
                        &mut dg,
                        &mut dbeta,
                    );
                    adj[*x] = Some(dx);
                    adj[*gamma] = Some(dg);
                    adj[*beta] = Some(dbeta);
                }
                Op::Relu { x } => {
                    buf(*x, &mut adj)?;
                    let dx = adj[*x].as_mut().expect("allocated");
                    for ((d, &xv), &gv) in dx.iter_mut().zip(slots[*x].values()).zip(&g) {
                        if xv > 0.0 {
                            *d += gv;
                        }
                    }
                }
                Op::Flatten { x } => {
                    buf(*x, &mut adj)?;
                    let dx = adj[*x].as_mut().expect("allocated");
                    dx.iter_mut().zip(&g).for_each(|(d, &gv)| *d += gv);
                }
                Op::Affine { x, w, b } => {
                    for i in [*x, *w, *b] {
                        buf(i, &mut adj)?;
                    }
                    let dims = ops::nf(slots[*x].shape()).expect("checked in forward");
                    let o = slots[*w].shape()[0];
                    let mut dx = adj[*x].take().expect("allocated");
                    let mut dw = adj[*w].take().expect("allocated");
                    let mut db = adj[*b].take().expect("allocated");
                    ops::affine_backward(dims, o, slots[*x].values(), slots[*w].values(), &g, Some(&mut dx), &mut dw, &mut db);
                    adj[*x] = Some(dx);
                    adj[*w] = Some(dw);
                    adj[*b] = Some(db);
                }
                Op::SoftmaxXent { logits, targets, probs } => {
                    buf(*logits, &mut adj)?;
                    let n = targets.len();
                    let k = probs.len() / n;
                    let scale = g[0] / n as f64;
                    let dl = adj[*logits].as_mut().expect("allocated");
                    for (s, &tgt) in targets.iter().enumerate() {
                        for j in 0..k {
                            let onehot = if j == tgt { 1.0 } else { 0.0 };
                            dl[s * k + j] += scale * (probs[s * k + j] - onehot);
                        }
                    }
                }
            }
            // every consumer of this slot sits later on the tape, so `g` is final
            self.slots[node.out]
                .grad_mut()
                .iter_mut()
                .zip(&g)
                .for_each(|(a, &b)| *a += b);
        }
        for (i, a) in adj.into_iter().enumerate() {
            if let Some(a) = a {
                self.slots[i]
                    .grad_mut()
                    .iter_mut()
                    .zip(&a)
                    .for_each(|(d, &v)| *d += v);
            }
        }
        Ok(())
    }
}
