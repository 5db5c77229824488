//! Independent oracles shared by the integration suites: central finite
//! differences, a continued-fraction Student t CDF, a brute-force nearest
//! neighbour vote and hand confusion-matrix formulas. None of these call into
//! the code paths they check.

#![allow(dead_code)]

use pdcam::autodiff::{Tape, Tensor, Var};
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// Elementwise relative error with a small floor so exact zeros compare cleanly.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], coords: &[usize]) -> Vec<f64> {
    let mut xp = x.to_vec();
    coords
        .iter()
        .map(|&i| {
            let orig = xp[i];
            xp[i] = orig + FD_STEP;
            let up = f(&xp);
            xp[i] = orig - FD_STEP;
            let down = f(&xp);
            xp[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn random_tensor(rng: &mut impl Rng, shape: Vec<usize>, scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Gradient check of a graph built from `inputs` by `build`. The scalar
/// objective is a random projection `sum(r * out)` of the output. Returns the
/// max relative error over every input coordinate.
pub fn check_graph(
    rng: &mut impl Rng,
    inputs: &[Tensor],
    build: &dyn Fn(&mut Tape, &[Var]) -> Var,
) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars);
    let r: Vec<f64> = (0..tape.value(out).len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    tape.backward(out, &r).unwrap();

    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = tape.grad(vars[k]).to_vec();
        let mut f = |x: &[f64]| {
            let mut t = Tape::new();
            let vs: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(j, inp)| {
                    if j == k {
                        t.leaf(Tensor::new(inp.shape().to_vec(), x.to_vec()).unwrap())
                    } else {
                        t.leaf(inp.clone())
                    }
                })
                .collect();
            let o = build(&mut t, &vs);
            t.value(o).values().iter().zip(&r).map(|(a, b)| a * b).sum()
        };
        let coords: Vec<usize> = (0..input.len()).collect();
        let numeric = central_difference(&mut f, input.values(), &coords);
        worst = worst.max(max_rel_err(&analytic, &numeric));
    }
    worst
}

// ---------------------------------------------------------------------------
// Student t distribution via the regularized incomplete beta function
// (Lentz continued fraction). Two-sided p for statistic t with df degrees of
// freedom is I_{df/(df+t^2)}(df/2, 1/2).

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7, n = 9
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
}

/// Paired t-test p-value computed from scratch.
pub fn paired_t_oracle(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let t = mean / (var / n).sqrt();
    t_two_sided_p(t, n - 1.0)
}

// ---------------------------------------------------------------------------

/// Hand formulas for (accuracy, precision, recall, f1) with PD positive;
/// undefined ratios are 0.
pub fn hand_metrics(tp: usize, fp: usize, fn_: usize, tn: usize) -> (f64, f64, f64, f64) {
    let total = (tp + fp + fn_ + tn) as f64;
    let acc = (tp + tn) as f64 / total;
    let prec = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let rec = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
    (acc, prec, rec, f1)
}

/// k-NN by repeated minimum extraction (no sorting): distances are squared
/// Euclidean, ties go to the lower index, majority of 0/1 labels wins.
pub fn brute_force_knn(train: &[(Vec<f64>, usize)], query: &[f64], k: usize) -> usize {
    let dist: Vec<f64> = train
        .iter()
        .map(|(x, _)| x.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    let mut taken = vec![false; train.len()];
    let mut votes = [0usize; 2];
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for i in 0..train.len() {
            if taken[i] {
                continue;
            }
            if best.map_or(true, |b| dist[i] < dist[b]) {
                best = Some(i);
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        votes[train[b].1] += 1;
    }
    if votes[1] > votes[0] {
        1
    } else {
        0
    }
}
