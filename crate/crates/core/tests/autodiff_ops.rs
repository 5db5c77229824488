mod common;

use common::{check_graph, random_tensor, FD_TOLERANCE};
use pdcam::autodiff::{AutodiffError, Mode, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t(shape: Vec<usize>, v: Vec<f64>) -> Tensor {
    Tensor::new(shape, v).unwrap()
}

fn conv(tape: &mut Tape, x: Vec<f64>, k: Vec<f64>, b: f64) -> Vec<f64> {
    let n = x.len();
    let kl = k.len();
    let xv = tape.leaf(t(vec![1, n], x));
    let wv = tape.leaf(t(vec![1, 1, kl], k));
    let bv = tape.leaf(t(vec![1], vec![b]));
    let y = tape.conv1d(xv, wv, bv, (kl - 1) / 2).unwrap();
    tape.value(y).values().to_vec()
}

#[test]
fn conv_direct_summation() {
    let mut tape = Tape::new();
    assert_eq!(conv(&mut tape, vec![1.0, 0.0, 0.0], vec![1.0, 2.0, 3.0], 0.0), vec![2.0, 1.0, 0.0]);
}

#[test]
fn conv_identity_kernel_and_zero_input() {
    let mut tape = Tape::new();
    let x = vec![0.3, -1.2, 4.0, 0.5];
    assert_eq!(conv(&mut tape, x.clone(), vec![0.0, 1.0, 0.0], 0.0), x);
    assert_eq!(conv(&mut tape, vec![0.0; 5], vec![0.4, -0.2, 0.9], 1.5), vec![1.5; 5]);
}

#[test]
fn conv_preserves_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for t_len in 1..20 {
        let mut tape = Tape::new();
        let x = tape.leaf(random_tensor(&mut rng, vec![2, 3, t_len], 1.0));
        let w = tape.leaf(random_tensor(&mut rng, vec![4, 3, 3], 1.0));
        let b = tape.leaf(random_tensor(&mut rng, vec![4], 1.0));
        let y = tape.conv1d(x, w, b, 1).unwrap();
        assert_eq!(tape.value(y).shape(), &[2, 4, t_len]);
    }
}

#[test]
fn conv_shape_mismatch() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros(vec![2, 5]));
    let w = tape.leaf(Tensor::zeros(vec![4, 3, 3]));
    let b = tape.leaf(Tensor::zeros(vec![4]));
    assert!(matches!(tape.conv1d(x, w, b, 1), Err(AutodiffError::ShapeMismatch(_))));
}

#[test]
fn conv_scalar_hand_derivative() {
    // T = 1, kernel 1: y = w x + b
    let mut tape = Tape::new();
    let x = tape.leaf(t(vec![1, 1], vec![3.0]));
    let w = tape.leaf(t(vec![1, 1, 1], vec![-2.0]));
    let b = tape.leaf(t(vec![1], vec![0.5]));
    let y = tape.conv1d(x, w, b, 0).unwrap();
    tape.backward(y, &[1.0]).unwrap();
    assert_eq!(tape.grad(w), &[3.0]);
    assert_eq!(tape.grad(x), &[-2.0]);
    assert_eq!(tape.grad(b), &[1.0]);
}

#[test]
fn zero_upstream_gives_zero_grads() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tape = Tape::new();
    let x = tape.leaf(random_tensor(&mut rng, vec![2, 3, 6], 1.0));
    let w = tape.leaf(random_tensor(&mut rng, vec![4, 3, 3], 1.0));
    let b = tape.leaf(random_tensor(&mut rng, vec![4], 1.0));
    let g = tape.leaf(random_tensor(&mut rng, vec![4], 1.0));
    let be = tape.leaf(random_tensor(&mut rng, vec![4], 1.0));
    let y = tape.conv1d(x, w, b, 1).unwrap();
    let (z, _) = tape.batchnorm(y, g, be, (&[0.0; 4], &[1.0; 4]), 1e-5, Mode::Train).unwrap();
    let n = tape.value(z).len();
    tape.backward(z, &vec![0.0; n]).unwrap();
    for v in [x, w, b, g, be, y, z] {
        assert!(tape.grad(v).iter().all(|&d| d == 0.0));
    }
}

#[test]
fn conv_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let t_len = rng.gen_range(1..7);
        let inputs = vec![
            random_tensor(&mut rng, vec![2, 3, t_len], 1.0),
            random_tensor(&mut rng, vec![4, 3, 3], 1.0),
            random_tensor(&mut rng, vec![4], 1.0),
        ];
        let err = check_graph(&mut rng, &inputs, &|tp: &mut Tape, v: &[Var]| tp.conv1d(v[0], v[1], v[2], 1).unwrap());
        assert!(err < FD_TOLERANCE, "conv max rel err {err}");
    }
}

fn bn_out(batch: Tensor, gamma: Vec<f64>, beta: Vec<f64>, mode: Mode) -> Vec<f64> {
    let c = gamma.len();
    let mut tape = Tape::new();
    let x = tape.leaf(batch);
    let g = tape.leaf(t(vec![c], gamma));
    let b = tape.leaf(t(vec![c], beta));
    let (y, _) = tape.batchnorm(x, g, b, (&vec![0.0; c], &vec![1.0; c]), 1e-10, mode).unwrap();
    tape.value(y).values().to_vec()
}

#[test]
fn bn_identity_on_standardized_batch() {
    // two samples, one channel, time 2: values {-1, 1, -1, 1} have mean 0, var 1
    let x = vec![-1.0, 1.0, 1.0, -1.0];
    let y = bn_out(t(vec![2, 1, 2], x.clone()), vec![1.0], vec![0.0], Mode::Train);
    for (a, b) in x.iter().zip(&y) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn bn_constant_channel_gives_beta() {
    let y = bn_out(t(vec![3, 1, 4], vec![2.5; 12]), vec![1.7], vec![-0.3], Mode::Train);
    assert!(y.iter().all(|&v| (v + 0.3).abs() < 1e-9));
}

#[test]
fn bn_output_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let (n, c, tl) = (4, 3, 5);
        let x = random_tensor(&mut rng, vec![n, c, tl], 3.0);
        let gamma: Vec<f64> = (0..c).map(|_| rng.gen_range(0.5..2.0)).collect();
        let beta: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = bn_out(x, gamma.clone(), beta.clone(), Mode::Train);
        for ch in 0..c {
            let vals: Vec<f64> = (0..n)
                .flat_map(|b| y[(b * c + ch) * tl..(b * c + ch + 1) * tl].to_vec())
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!((m - beta[ch]).abs() < 1e-4);
            assert!((v - gamma[ch] * gamma[ch]).abs() < 1e-4);
        }
    }
}

#[test]
fn bn_eval_single_element_is_affine() {
    let (rm, rv, gamma, eps) = (0.4, 2.25, 1.5, 1e-5);
    let mut tape = Tape::new();
    let x = tape.leaf(t(vec![1, 1, 1], vec![1.3]));
    let g = tape.leaf(t(vec![1], vec![gamma]));
    let b = tape.leaf(t(vec![1], vec![0.2]));
    let (y, stats) = tape.batchnorm(x, g, b, (&[rm], &[rv]), eps, Mode::Eval).unwrap();
    assert!(stats.is_none());
    tape.backward(y, &[0.7]).unwrap();
    let expect = 0.7 * gamma / (rv + eps).sqrt();
    assert!((tape.grad(x)[0] - expect).abs() < 1e-15);
}

#[test]
fn bn_finite_differences_train_and_eval() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for mode in [Mode::Train, Mode::Eval] {
        for _ in 0..10 {
            let inputs = vec![
                random_tensor(&mut rng, vec![3, 2, 4], 2.0),
                random_tensor(&mut rng, vec![2], 2.0),
                random_tensor(&mut rng, vec![2], 2.0),
            ];
            let rm = [0.3, -0.2];
            let rv = [1.4, 0.6];
            let err = check_graph(&mut rng, &inputs, &|tp: &mut Tape, v: &[Var]| {
                tp.batchnorm(v[0], v[1], v[2], (&rm, &rv), 1e-5, mode).unwrap().0
            });
            assert!(err < FD_TOLERANCE, "{mode:?} bn max rel err {err}");
        }
    }
}

#[test]
fn relu_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::from_vec(vec![-1.0, 0.0, 2.0]));
    let y = tape.relu(x).unwrap();
    assert_eq!(tape.value(y).values(), &[0.0, 0.0, 2.0]);
    tape.backward(y, &[5.0, 5.0, 5.0]).unwrap();
    // subgradient at exactly zero is zero
    assert_eq!(tape.grad(x), &[0.0, 0.0, 5.0]);

    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::from_vec(vec![0.5, 3.0]));
    let y = tape.relu(x).unwrap();
    assert_eq!(tape.value(y).values(), &[0.5, 3.0]);
    tape.backward(y, &[0.25, -4.0]).unwrap();
    assert_eq!(tape.grad(x), &[0.25, -4.0]);
}

#[test]
fn relu_finite_differences_away_from_kink() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let vals: Vec<f64> = (0..12)
            .map(|_| loop {
                let v: f64 = rng.gen_range(-2.0..2.0);
                if v.abs() >= 1e-3 {
                    break v;
                }
            })
            .collect();
        let inputs = vec![t(vec![3, 4], vals)];
        let err = check_graph(&mut rng, &inputs, &|tp: &mut Tape, v: &[Var]| tp.relu(v[0]).unwrap());
        assert!(err < FD_TOLERANCE);
    }
}

#[test]
fn affine_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::from_vec(vec![1.0, 1.0]));
    let w = tape.leaf(t(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
    let b = tape.leaf(Tensor::zeros(vec![2]));
    let y = tape.affine(x, w, b).unwrap();
    assert_eq!(tape.value(y).values(), &[3.0, 7.0]);

    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::from_vec(vec![0.3, -0.7, 2.0]));
    let w = tape.leaf(t(vec![3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
    let b = tape.leaf(Tensor::zeros(vec![3]));
    let y = tape.affine(x, w, b).unwrap();
    assert_eq!(tape.value(y).values(), &[0.3, -0.7, 2.0]);
}

#[test]
fn affine_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let inputs = vec![
            random_tensor(&mut rng, vec![3, 5], 1.0),
            random_tensor(&mut rng, vec![2, 5], 1.0),
            random_tensor(&mut rng, vec![2], 1.0),
        ];
        let err = check_graph(&mut rng, &inputs, &|tp: &mut Tape, v: &[Var]| tp.affine(v[0], v[1], v[2]).unwrap());
        assert!(err < FD_TOLERANCE);
    }
}

#[test]
fn softmax_examples() {
    let mut tape = Tape::new();
    let l = tape.leaf(Tensor::from_vec(vec![0.0, 0.0]));
    let (loss, probs) = tape.softmax_xent(l, &[0]).unwrap();
    assert_eq!(probs, vec![0.5, 0.5]);
    assert!((tape.value(loss).values()[0] - std::f64::consts::LN_2).abs() < 1e-15);

    let mut tape = Tape::new();
    let l = tape.leaf(Tensor::from_vec(vec![1000.0, 0.0]));
    let (loss, probs) = tape.softmax_xent(l, &[0]).unwrap();
    let v = tape.value(loss).values()[0];
    assert!(v.is_finite() && v.abs() < 1e-12);
    assert!(probs.iter().all(|p| p.is_finite()));
    tape.backward(loss, &[1.0]).unwrap();
    assert!(tape.grad(l).iter().all(|g| g.is_finite()));
}

#[test]
fn softmax_probs_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let k = rng.gen_range(2..6);
        let mut tape = Tape::new();
        let l = tape.leaf(random_tensor(&mut rng, vec![k], 30.0));
        let (_, probs) = tape.softmax_xent(l, &[rng.gen_range(0..k)]).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(probs.iter().all(|&p| p > 0.0));
    }
}

#[test]
fn softmax_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let targets: Vec<usize> = (0..3).map(|_| rng.gen_range(0..2)).collect();
        let inputs = vec![random_tensor(&mut rng, vec![3, 2], 3.0)];
        let err = check_graph(&mut rng, &inputs, &|tp: &mut Tape, v: &[Var]| tp.softmax_xent(v[0], &targets).unwrap().0);
        assert!(err < FD_TOLERANCE);
    }
}

#[test]
fn backward_accumulates_linearly() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut tape = Tape::new();
    let x = tape.leaf(random_tensor(&mut rng, vec![2, 1, 5], 1.0));
    let w = tape.leaf(random_tensor(&mut rng, vec![3, 1, 3], 1.0));
    let b = tape.leaf(random_tensor(&mut rng, vec![3], 1.0));
    let h = tape.conv1d(x, w, b, 1).unwrap();
    let h = tape.relu(h).unwrap();
    let f = tape.flatten(h).unwrap();
    let fw = tape.leaf(random_tensor(&mut rng, vec![2, 15], 1.0));
    let fb = tape.leaf(random_tensor(&mut rng, vec![2], 1.0));
    let logits = tape.affine(f, fw, fb).unwrap();
    let (loss, _) = tape.softmax_xent(logits, &[0, 1]).unwrap();

    tape.backward(loss, &[1.0]).unwrap();
    let once: Vec<Vec<f64>> = [x, w, b, fw, fb, h].iter().map(|&v| tape.grad(v).to_vec()).collect();
    tape.backward(loss, &[1.0]).unwrap();
    for (v, g1) in [x, w, b, fw, fb, h].iter().zip(&once) {
        let g2 = tape.grad(*v);
        for (a, b) in g1.iter().zip(g2) {
            assert_eq!(2.0 * a, *b);
        }
    }
    tape.zero_grad();
    tape.backward(loss, &[1.0]).unwrap();
    for (v, g1) in [x, w, b, fw, fb, h].iter().zip(&once) {
        assert_eq!(tape.grad(*v), g1.as_slice());
    }
}

#[test]
fn seed_errors() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]));
    assert_eq!(
        tape.backward(x, &[1.0]),
        Err(AutodiffError::SeedShapeMismatch { expected: 2, got: 1 })
    );
    let mut other = Tape::new();
    let y = other.leaf(Tensor::from_vec(vec![1.0]));
    let _ = y;
    let foreign = {
        let mut t3 = Tape::new();
        t3.leaf(Tensor::from_vec(vec![1.0, 2.0]))
    };
    assert!(matches!(tape.backward(foreign, &[1.0, 1.0]), Err(AutodiffError::TapeCorrupted(_))));
}
