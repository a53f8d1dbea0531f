mod support;

use pathroute::nn::{Conv2dOpts, Tape, Tensor};
use pathroute::Error;
use rand::Rng;
use support::{away_from_zero, direct_conv, grad_check, random_tensor, rng};

const EPS: f32 = 1e-3;
const TOL: f64 = 1e-3;
const INSTANCES: u64 = 20;

#[test]
fn conv2d_matches_direct_loops() {
    for seed in 0..10 {
        let mut r = rng(seed);
        let (c, oc) = (r.random_range(1..4), r.random_range(1..4));
        let (h, w) = (r.random_range(5..9), r.random_range(5..9));
        let stride = r.random_range(1..3);
        let dilation = r.random_range(1..3);
        let padding = r.random_range(0..3);
        let x = random_tensor(&mut r, [2, c, h, w], 1.0);
        let wt = random_tensor(&mut r, [oc, c, 3, 3], 1.0);
        let b: Vec<f32> = (0..oc).map(|_| r.random_range(-1.0..1.0)).collect();
        let want = direct_conv(&x, &wt, &b, stride, padding, dilation);

        let mut tape = Tape::new();
        let (xv, wv) = (tape.leaf(x), tape.leaf(wt));
        let bv = tape.leaf(Tensor::vectors(1, oc, b).unwrap());
        let y = tape
            .conv2d(
                xv,
                wv,
                bv,
                Conv2dOpts {
                    stride,
                    padding,
                    dilation,
                },
            )
            .unwrap();
        assert_eq!(tape.shape(y), want.shape());
        for (a, e) in tape.value(y).data().iter().zip(want.data()) {
            assert!((a - e).abs() < 1e-5);
        }
    }
}

#[test]
fn conv2d_hand_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new([1, 1, 3, 3], (1..=9).map(|v| v as f32).collect()).unwrap());
    let w = tape.leaf(Tensor::full([1, 1, 3, 3], 1.0));
    let b = tape.leaf(Tensor::zeros([1, 1, 1, 1]));
    let y = tape.conv2d(x, w, b, Conv2dOpts::same(3)).unwrap();
    assert_eq!(tape.value(y).at(0, 0, 1, 1), 45.0);

    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros([1, 2, 5, 5]));
    let w = tape.leaf(Tensor::full([3, 2, 3, 3], 0.7));
    let b = tape.leaf(Tensor::vectors(1, 3, vec![0.5, -1.0, 2.0]).unwrap());
    let y = tape.conv2d(x, w, b, Conv2dOpts::same(3)).unwrap();
    for c in 0..3 {
        for v in tape.value(y).item(0).data()[c * 25..(c + 1) * 25].iter() {
            assert_eq!(*v, [0.5, -1.0, 2.0][c]);
        }
    }

    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros([2, 32, 63, 63]));
    let w = tape.leaf(Tensor::zeros([64, 32, 3, 3]));
    let b = tape.leaf(Tensor::zeros([1, 64, 1, 1]));
    let y = tape.conv2d(x, w, b, Conv2dOpts::same(3)).unwrap();
    assert_eq!(tape.shape(y), [2, 64, 63, 63]);
}

#[test]
fn conv2d_rejects_channel_mismatch() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros([1, 2, 5, 5]));
    let w = tape.leaf(Tensor::zeros([1, 3, 3, 3]));
    let b = tape.leaf(Tensor::zeros([1, 1, 1, 1]));
    assert!(matches!(
        tape.conv2d(x, w, b, Conv2dOpts::same(3)),
        Err(Error::Config(_))
    ));
}

#[test]
fn conv2d_reports_non_finite_output() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::full([1, 1, 3, 3], f32::MAX));
    let w = tape.leaf(Tensor::full([1, 1, 3, 3], f32::MAX));
    let b = tape.leaf(Tensor::zeros([1, 1, 1, 1]));
    assert!(matches!(
        tape.conv2d(x, w, b, Conv2dOpts::same(3)),
        Err(Error::Numeric(_))
    ));
}

#[test]
fn gradcheck_conv2d() {
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let (c, oc) = (r.random_range(1..4), r.random_range(1..4));
        let (h, w) = (r.random_range(5..9), r.random_range(5..9));
        let opts = Conv2dOpts {
            stride: r.random_range(1..3),
            padding: r.random_range(0..3),
            dilation: r.random_range(1..3),
        };
        let n = r.random_range(1..3);
        let inputs = [
            random_tensor(&mut r, [n, c, h, w], 1.0),
            random_tensor(&mut r, [oc, c, 3, 3], 1.0),
            random_tensor(&mut r, [1, oc, 1, 1], 1.0),
        ];
        let check = grad_check(&inputs, EPS, seed + 100, |t, v| {
            t.conv2d(v[0], v[1], v[2], opts).unwrap()
        });
        assert!(check.max_rel_err < TOL, "seed {seed}: {check:?}");
    }
}

#[test]
fn gradcheck_relu() {
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let x = away_from_zero(&mut r, [1, 3, 4, 5], 0.01);
        let check = grad_check(&[x], EPS, seed, |t, v| t.relu(v[0]));
        assert!(check.max_rel_err < TOL, "seed {seed}: {check:?}");
    }
}

#[test]
fn relu_values_and_subgradient() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new([1, 4, 1, 1], vec![-1.0, 2.5, 3.0, 0.0]).unwrap());
    let y = tape.relu(x);
    assert_eq!(tape.value(y).data(), &[0.0, 2.5, 3.0, 0.0]);
    let w = tape.leaf(Tensor::new([1, 4, 1, 1], vec![0.7, 0.7, 0.7, 0.7]).unwrap());
    // d/dy of mse(y, y - w) is 2w/n per element
    let shifted = tape.scale(w, -1.0);
    let target = tape.add(y, shifted).unwrap();
    let target = tape.detach(target);
    let loss = tape.mse(y, target).unwrap();
    let g = tape.backward(loss).unwrap().wrt(x);
    let up = 2.0 * 0.7 / 4.0;
    for (got, want) in g.iter().zip([0.0, up, up, 0.0]) {
        assert!((got - want).abs() < 1e-6);
    }
    assert_eq!((g[0], g[3]), (0.0, 0.0));
}

#[test]
fn gradcheck_add_and_scale() {
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let inputs = [
            random_tensor(&mut r, [2, 2, 3, 3], 1.0),
            random_tensor(&mut r, [2, 2, 3, 3], 1.0),
        ];
        let factor = r.random_range(-2.0..2.0);
        let check = grad_check(&inputs, EPS, seed, |t, v| {
            let s = t.scale(v[1], factor);
            t.add(v[0], s).unwrap()
        });
        assert!(check.max_rel_err < TOL, "seed {seed}: {check:?}");
    }
}

#[test]
fn gradcheck_linear() {
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let (rows, fin, out) = (r.random_range(1..4), r.random_range(1..8), r.random_range(1..8));
        let inputs = [
            random_tensor(&mut r, [rows, fin, 1, 1], 1.0),
            random_tensor(&mut r, [out, fin, 1, 1], 1.0),
            random_tensor(&mut r, [1, out, 1, 1], 1.0),
        ];
        let check = grad_check(&inputs, EPS, seed, |t, v| t.linear(v[0], v[1], v[2]).unwrap());
        assert!(check.max_rel_err < TOL, "seed {seed}: {check:?}");
    }
}

#[test]
fn linear_hand_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::vectors(1, 2, vec![1.0, 2.0]).unwrap());
    let w = tape.leaf(Tensor::new([2, 2, 1, 1], vec![1.0, 1.0, 2.0, -1.0]).unwrap());
    let b = tape.leaf(Tensor::zeros([1, 2, 1, 1]));
    let y = tape.linear(x, w, b).unwrap();
    assert_eq!(tape.value(y).data(), &[3.0, 0.0]);

    let x = tape.leaf(Tensor::vectors(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap());
    let eye = tape.leaf(Tensor::new([3, 3, 1, 1], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap());
    let zero_b = tape.leaf(Tensor::zeros([1, 3, 1, 1]));
    let y = tape.linear(x, eye, zero_b).unwrap();
    assert_eq!(tape.value(y).data(), tape.value(x).data());

    let zero_w = tape.leaf(Tensor::zeros([3, 3, 1, 1]));
    let bias = tape.leaf(Tensor::vectors(1, 3, vec![0.1, 0.2, 0.3]).unwrap());
    let y = tape.linear(x, zero_w, bias).unwrap();
    assert_eq!(tape.value(y).data(), &[0.1, 0.2, 0.3, 0.1, 0.2, 0.3]);

    let bad = tape.leaf(Tensor::zeros([3, 4, 1, 1]));
    assert!(tape.linear(x, bad, bias).is_err());
}

#[test]
fn gradcheck_lstm_step() {
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let (rows, fin, hid) = (r.random_range(1..3), r.random_range(1..6), r.random_range(1..5));
        let inputs = [
            random_tensor(&mut r, [rows, fin, 1, 1], 1.0),
            random_tensor(&mut r, [rows, hid, 1, 1], 1.0),
            random_tensor(&mut r, [rows, hid, 1, 1], 1.0),
            random_tensor(&mut r, [4 * hid, fin, 1, 1], 1.0),
            random_tensor(&mut r, [4 * hid, hid, 1, 1], 1.0),
            random_tensor(&mut r, [1, 4 * hid, 1, 1], 1.0),
        ];
        // both outputs reach the loss
        let check = grad_check(&inputs, EPS, seed, |t, v| {
            let (h, c) = t.lstm_step(v[0], v[1], v[2], v[3], v[4], v[5]).unwrap();
            let c = t.scale(c, 0.5);
            t.add(h, c).unwrap()
        });
        assert!(check.max_rel_err < TOL, "seed {seed}: {check:?}");
    }
}

#[test]
fn lstm_closed_forms() {
    let step = |c0: f32| {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros([1, 1, 1, 1]));
        let h = tape.leaf(Tensor::zeros([1, 1, 1, 1]));
        let c = tape.leaf(Tensor::full([1, 1, 1, 1], c0));
        let wi = tape.leaf(Tensor::zeros([4, 1, 1, 1]));
        let wh = tape.leaf(Tensor::zeros([4, 1, 1, 1]));
        let b = tape.leaf(Tensor::zeros([1, 4, 1, 1]));
        let (h1, c1) = tape.lstm_step(x, h, c, wi, wh, b).unwrap();
        (tape.scalar(h1), tape.scalar(c1))
    };
    assert_eq!(step(0.0), (0.0, 0.0));
    let (h1, c1) = step(2.0);
    assert_eq!(c1, 1.0);
    assert!((h1 - 0.5 * 1.0f32.tanh()).abs() < 1e-7);

    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros([1, 16, 1, 1]));
    let h = tape.leaf(Tensor::zeros([1, 32, 1, 1]));
    let c = tape.leaf(Tensor::zeros([1, 32, 1, 1]));
    let wi = tape.leaf(Tensor::zeros([128, 16, 1, 1]));
    let wh = tape.leaf(Tensor::zeros([128, 32, 1, 1]));
    let b = tape.leaf(Tensor::zeros([1, 128, 1, 1]));
    let (h1, c1) = tape.lstm_step(x, h, c, wi, wh, b).unwrap();
    assert_eq!(tape.value(h1).len(), 32);
    assert_eq!(tape.value(c1).len(), 32);
    assert!(tape.lstm_step(x, h, c, wh, wh, b).is_err());
}

#[test]
fn gradcheck_softmax_and_log_softmax() {
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let m = r.random_range(2..6);
        let rows = r.random_range(1..3);
        let x = random_tensor(&mut r, [rows, m, 1, 1], 1.0);
        let check = grad_check(std::slice::from_ref(&x), EPS, seed, |t, v| t.softmax(v[0]).unwrap());
        assert!(check.max_rel_err < TOL, "softmax seed {seed}: {check:?}");
        let check = grad_check(&[x], EPS, seed, |t, v| t.log_softmax(v[0]).unwrap());
        assert!(check.max_rel_err < TOL, "log_softmax seed {seed}: {check:?}");
    }
}

#[test]
fn softmax_closed_forms() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::vectors(1, 2, vec![0.7, 0.7]).unwrap());
    let p = tape.softmax(x).unwrap();
    assert_eq!(tape.value(p).data(), &[0.5, 0.5]);
    let x = tape.leaf(Tensor::vectors(1, 2, vec![0.0, 3.0f32.ln()]).unwrap());
    let p = tape.softmax(x).unwrap();
    let v = tape.value(p).data();
    assert!((v[0] - 0.25).abs() < 1e-7 && (v[1] - 0.75).abs() < 1e-7);
}

#[test]
fn gradcheck_pick_narrow_pool() {
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let x = random_tensor(&mut r, [2, 5, 3, 4], 1.0);
        let check = grad_check(std::slice::from_ref(&x), EPS, seed, |t, v| {
            t.narrow(v[0], 1, 3).unwrap()
        });
        assert!(check.max_rel_err < TOL, "narrow seed {seed}: {check:?}");
        let check = grad_check(std::slice::from_ref(&x), EPS, seed, |t, v| t.global_avg_pool(v[0]));
        assert!(check.max_rel_err < TOL, "pool seed {seed}: {check:?}");
        let (row, feat) = (r.random_range(0..2), r.random_range(0..60));
        let check = grad_check(&[x], EPS, seed, |t, v| t.pick(v[0], row, feat).unwrap());
        assert!(check.max_rel_err < TOL, "pick seed {seed}: {check:?}");
    }
}

#[test]
fn gradcheck_mse() {
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let inputs = [
            random_tensor(&mut r, [1, 2, 3, 3], 1.0),
            random_tensor(&mut r, [1, 2, 3, 3], 1.0),
        ];
        let check = grad_check(&inputs, EPS, seed, |t, v| t.mse(v[0], v[1]).unwrap());
        assert!(check.max_rel_err < TOL, "seed {seed}: {check:?}");
    }
}

#[test]
fn mse_examples_and_analytic_gradient() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::vectors(1, 2, vec![0.0, 0.0]).unwrap());
    let b = tape.leaf(Tensor::vectors(1, 2, vec![1.0, 3.0]).unwrap());
    let l = tape.mse(a, b).unwrap();
    assert_eq!(tape.scalar(l), 5.0);
    let same = tape.mse(b, b).unwrap();
    assert_eq!(tape.scalar(same), 0.0);
    let g = tape.backward(l).unwrap();
    // 2(x - const)/n
    assert_eq!(g.wrt(a), vec![-1.0, -3.0]);

    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::scalar(0.0));
    let b = tape.leaf(Tensor::scalar(1.0));
    let l = tape.mse(a, b).unwrap();
    assert_eq!(tape.scalar(l), 1.0);
    let c = tape.leaf(Tensor::zeros([1, 3, 1, 1]));
    assert!(tape.mse(a, c).is_err());
}

#[test]
fn global_avg_pool_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new([1, 2, 2, 2], vec![1.0, 3.0, 5.0, 7.0, 2.0, 2.0, 2.0, 2.0]).unwrap());
    let p = tape.global_avg_pool(x);
    assert_eq!(tape.value(p).data(), &[4.0, 2.0]);
    let x = tape.leaf(Tensor::zeros([1, 32, 16, 16]));
    let p = tape.global_avg_pool(x);
    assert_eq!(tape.value(p).len(), 32);
}

#[test]
fn gradcheck_small_conv_net() {
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let inputs = [
            random_tensor(&mut r, [1, 2, 7, 7], 1.0),
            random_tensor(&mut r, [3, 2, 3, 3], 0.5),
            random_tensor(&mut r, [1, 3, 1, 1], 0.5),
            random_tensor(&mut r, [2, 3, 3, 3], 0.5),
            random_tensor(&mut r, [1, 2, 1, 1], 0.5),
        ];
        let check = grad_check(&inputs, EPS, seed, |t, v| {
            let h = t.conv2d(v[0], v[1], v[2], Conv2dOpts::same(3)).unwrap();
            let h = t.relu(h);
            let y = t.conv2d(h, v[3], v[4], Conv2dOpts::same(3)).unwrap();
            t.add(y, v[0]).unwrap()
        });
        assert!(check.max_rel_err < TOL, "seed {seed}: {check:?}");
    }
}

#[test]
fn backward_twice_is_a_usage_error() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::scalar(1.0));
    let b = tape.leaf(Tensor::scalar(0.0));
    let l = tape.mse(a, b).unwrap();
    tape.backward(l).unwrap();
    assert!(matches!(tape.backward(l), Err(Error::Usage(_))));
}

#[test]
fn disconnected_inputs_get_exact_zero_gradient() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::scalar(1.0));
    let stray = tape.leaf(Tensor::full([1, 3, 1, 1], 4.0));
    let b = tape.leaf(Tensor::scalar(0.0));
    let l = tape.mse(a, b).unwrap();
    assert_eq!(tape.backward(l).unwrap().wrt(stray), vec![0.0; 3]);
}

#[test]
fn forward_and_backward_are_deterministic() {
    let run = || {
        let mut r = rng(7);
        let x = random_tensor(&mut r, [1, 3, 8, 8], 1.0);
        let w = random_tensor(&mut r, [4, 3, 3, 3], 1.0);
        let mut tape = Tape::new();
        let (xv, wv) = (tape.leaf(x), tape.leaf(w));
        let b = tape.leaf(Tensor::zeros([1, 4, 1, 1]));
        let y = tape.conv2d(xv, wv, b, Conv2dOpts::same(3)).unwrap();
        let p = tape.global_avg_pool(y);
        let z = tape.leaf(Tensor::zeros([1, 4, 1, 1]));
        let l = tape.mse(p, z).unwrap();
        let out = tape.value(y).data().to_vec();
        (out, tape.backward(l).unwrap().wrt(wv))
    };
    assert_eq!(run(), run());
}
