//! Numeric kernels. Shapes are validated by the tape before these run.
//! Backward kernels add into the provided adjoint buffers.

/// `(n, c, t)` view of a rank-2 or rank-3 activation shape.
pub(super) fn nct(shape: &[usize]) -> Option<(usize, usize, usize)> {
    match *shape {
        [c, t] => Some((1, c, t)),
        [n, c, t] => Some((n, c, t)),
        _ => None,
    }
}

/// `(n, f)` view of a rank-1 or rank-2 feature shape.
pub(super) fn nf(shape: &[usize]) -> Option<(usize, usize)> {
    match *shape {
        [f] => Some((1, f)),
        [n, f] => Some((n, f)),
        _ => None,
    }
}

/// Valid output range `[lo, hi)` for kernel tap `k` with zero padding.
#[inline]
fn tap_range(k: usize, padding: usize, t: usize) -> (usize, usize, isize) {
    let shift = k as isize - padding as isize;
    let lo = (-shift).max(0) as usize;
    let hi = (t as isize - shift).clamp(0, t as isize) as usize;
    (lo, hi.max(lo), shift)
}

pub(super) struct ConvDims {
    pub n: usize,
    pub cin: usize,
    pub cout: usize,
    pub t: usize,
    pub k: usize,
    pub padding: usize,
}

pub(super) fn conv1d_forward(d: &ConvDims, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; d.n * d.cout * d.t];
    for n in 0..d.n {
        for co in 0..d.cout {
            let row = &mut out[(n * d.cout + co) * d.t..(n * d.cout + co + 1) * d.t];
            row.iter_mut().for_each(|v| *v = b[co]);
            for ci in 0..d.cin {
                let xrow = &x[(n * d.cin + ci) * d.t..(n * d.cin + ci + 1) * d.t];
                for k in 0..d.k {
                    let wv = w[(co * d.cin + ci) * d.k + k];
                    let (lo, hi, shift) = tap_range(k, d.padding, d.t);
                    let src = &xrow[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
                    for (o, &xv) in row[lo..hi].iter_mut().zip(src) {
                        *o += wv * xv;
                    }
                }
            }
        }
    }
    out
}

pub(super) fn conv1d_backward(
    d: &ConvDims,
    x: &[f64],
    w: &[f64],
    g: &[f64],
    dx: Option<&mut [f64]>,
    dw: &mut [f64],
    db: &mut [f64],
) {
    let mut dx = dx;
    for n in 0..d.n {
        for co in 0..d.cout {
            let grow = &g[(n * d.cout + co) * d.t..(n * d.cout + co + 1) * d.t];
            db[co] += grow.iter().sum::<f64>();
            for ci in 0..d.cin {
                let base = (n * d.cin + ci) * d.t;
                let xrow = &x[base..base + d.t];
                for k in 0..d.k {
                    let widx = (co * d.cin + ci) * d.k + k;
                    let (lo, hi, shift) = tap_range(k, d.padding, d.t);
                    let s_lo = (lo as isize + shift) as usize;
                    let s_hi = (hi as isize + shift) as usize;
                    let gs = &grow[lo..hi];
                    dw[widx] += gs.iter().zip(&xrow[s_lo..s_hi]).map(|(a, b)| a * b).sum::<f64>();
                    if let Some(dx) = dx.as_deref_mut() {
                        let wv = w[widx];
                        for (dxv, &gv) in dx[base + s_lo..base + s_hi].iter_mut().zip(gs) {
                            *dxv += wv * gv;
                        }
                    }
                }
            }
        }
    }
}

/// Saved forward state for batch norm.
pub(super) struct BnSaved {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

/// Per-channel normalization. With `running = None` the batch statistics
/// (biased variance over batch x time) are used, otherwise the given running mean/var.
pub(super) fn batchnorm_forward(
    (n, c, t): (usize, usize, usize),
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
    running: Option<(&[f64], &[f64])>,
    eps: f64,
) -> (Vec<f64>, BnSaved) {
    let m = (n * t) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    match running {
        Some((rm, rv)) => {
            mean.copy_from_slice(rm);
            var.copy_from_slice(rv);
        }
        None => {
            for ch in 0..c {
                let mut s = 0.0;
                for b in 0..n {
                    s += x[(b * c + ch) * t..(b * c + ch + 1) * t].iter().sum::<f64>();
                }
                let mu = s / m;
                let mut v = 0.0;
                for b in 0..n {
                    v += x[(b * c + ch) * t..(b * c + ch + 1) * t]
                        .iter()
                        .map(|&xv| (xv - mu) * (xv - mu))
                        .sum::<f64>();
                }
                mean[ch] = mu;
                var[ch] = v / m;
            }
        }
    }
    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for ch in 0..c {
            let r = (b * c + ch) * t..(b * c + ch + 1) * t;
            for i in r {
                let h = (x[i] - mean[ch]) * inv_std[ch];
                xhat[i] = h;
                out[i] = gamma[ch] * h + beta[ch];
            }
        }
    }
    (
        out,
        BnSaved {
            xhat,
            inv_std,
            batch_mean: mean,
            batch_var: var,
        },
    )
}

#[allow(clippy::too_many_arguments)]
pub(super) fn batchnorm_backward(
    (n, c, t): (usize, usize, usize),
    saved: &BnSaved,
    gamma: &[f64],
    train: bool,
    g: &[f64],
    dx: Option<&mut [f64]>,
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) {
    let m = (n * t) as f64;
    let mut sum_g = vec![0.0; c];
    let mut sum_gx = vec![0.0; c];
    for b in 0..n {
        for ch in 0..c {
            for i in (b * c + ch) * t..(b * c + ch + 1) * t {
                sum_g[ch] += g[i];
                sum_gx[ch] += g[i] * saved.xhat[i];
            }
        }
    }
    for ch in 0..c {
        dgamma[ch] += sum_gx[ch];
        dbeta[ch] += sum_g[ch];
    }
    let Some(dx) = dx else { return };
    for b in 0..n {
        for ch in 0..c {
            let k = gamma[ch] * saved.inv_std[ch];
            for i in (b * c + ch) * t..(b * c + ch + 1) * t {
                dx[i] += if train {
                    // mean and variance both depend on every input in the channel
                    k * (g[i] - sum_g[ch] / m - saved.xhat[i] * sum_gx[ch] / m)
                } else {
                    k * g[i]
                };
            }
        }
    }
}

pub(super) fn affine_forward((n, f): (usize, usize), out: usize, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n * out];
    for s in 0..n {
        let xs = &x[s * f..(s + 1) * f];
        for o in 0..out {
            let wr = &w[o * f..(o + 1) * f];
            y[s * out + o] = b[o] + wr.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub(super) fn affine_backward(
    (n, f): (usize, usize),
    out: usize,
    x: &[f64],
    w: &[f64],
    g: &[f64],
    dx: Option<&mut [f64]>,
    dw: &mut [f64],
    db: &mut [f64],
) {
    let mut dx = dx;
    for s in 0..n {
        let xs = &x[s * f..(s + 1) * f];
        for o in 0..out {
            let gv = g[s * out + o];
            if gv == 0.0 {
                continue;
            }
            db[o] += gv;
            for (d, &xv) in dw[o * f..(o + 1) * f].iter_mut().zip(xs) {
                *d += gv * xv;
            }
            if let Some(dx) = dx.as_deref_mut() {
                for (d, &wv) in dx[s * f..(s + 1) * f].iter_mut().zip(&w[o * f..(o + 1) * f]) {
                    *d += gv * wv;
                }
            }
        }
    }
}

/// Max-subtracted softmax per row. Returns (mean loss, probabilities).
pub(super) fn softmax_xent_forward((n, k): (usize, usize), logits: &[f64], targets: &[usize]) -> (f64, Vec<f64>) {
    let mut probs = vec![0.0; n * k];
    let mut loss = 0.0;
    for s in 0..n {
        let row = &logits[s * k..(s + 1) * k];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = z.ln() + max;
        for j in 0..k {
            probs[s * k + j] = (row[j] - log_z).exp();
        }
        loss += log_z - row[targets[s]];
    }
    (loss / n as f64, probs)
}
