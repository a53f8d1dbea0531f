//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use pathroute::nn::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: [usize; 4], scale: f32) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::new(shape, data).unwrap()
}

/// Straight nested-loop convolution, zero padding, `(out, in, k, k)` weights.
pub fn direct_conv(
    input: &Tensor,
    weight: &Tensor,
    bias: &[f32],
    stride: usize,
    padding: usize,
    dilation: usize,
) -> Tensor {
    let [n, c, h, w] = input.shape();
    let [oc, ic, k, _] = weight.shape();
    assert_eq!(ic, c);
    let span = dilation * (k - 1) + 1;
    let oh = (h + 2 * padding - span) / stride + 1;
    let ow = (w + 2 * padding - span) / stride + 1;
    let mut out = vec![0.0f32; n * oc * oh * ow];
    for b in 0..n {
        for o in 0..oc {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = bias[o] as f64;
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (y * stride + ky * dilation) as isize - padding as isize;
                                let ix = (x * stride + kx * dilation) as isize - padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc +=
                                    input.at(b, ci, iy as usize, ix as usize) as f64 * weight.at(o, ci, ky, kx) as f64;
                            }
                        }
                    }
                    out[((b * oc + o) * oh + y) * ow + x] = acc as f32;
                }
            }
        }
    }
    Tensor::new([n, oc, oh, ow], out).unwrap()
}

/// Outcome of comparing a reverse-mode gradient with central differences.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub compared: usize,
}

/// Checks the gradient of `loss = mean((f(inputs) - target)^2)` with respect
/// to every input, using central differences of step `eps`.
///
/// The differenced loss is reduced in f64 straight from the forward values, so
/// it shares nothing with the tape's backward code. The reported error is
/// `max_i |analytic_i - numeric_i|` relative to the largest gradient
/// magnitude: f32 forward values resolve a difference quotient only to about
/// `ulp(loss)/eps`, which swamps tiny components under a per-entry ratio.
pub fn grad_check<F>(inputs: &[Tensor], eps: f32, target_seed: u64, f: F) -> GradCheck
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let forward = |inputs: &[Tensor]| -> (Tape, Vec<Var>, Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars);
        (tape, vars, out)
    };

    let (probe, _, out) = forward(inputs);
    let mut trng = rng(target_seed);
    let target = random_tensor(&mut trng, probe.shape(out), 1.0);
    let loss64 = |inputs: &[Tensor]| -> f64 {
        let (tape, _, out) = forward(inputs);
        let v = tape.value(out);
        v.data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| {
                let d = *a as f64 - *b as f64;
                d * d
            })
            .sum::<f64>()
            / v.len() as f64
    };

    let (mut tape, vars, out) = forward(inputs);
    let t = tape.leaf(target.clone());
    let loss = tape.mse(out, t).unwrap();
    let grads = tape.backward(loss).unwrap();

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (i, var) in vars.iter().enumerate() {
        let g = grads.wrt(*var);
        for (j, gj) in g.iter().enumerate() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += eps;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= eps;
            // the step actually taken after f32 rounding
            let step = plus[i].data()[j] as f64 - minus[i].data()[j] as f64;
            let fd = (loss64(&plus) - loss64(&minus)) / step;
            analytic.push(*gj as f64);
            numeric.push(fd);
        }
    }
    let scale = analytic
        .iter()
        .chain(&numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    if std::env::var("GRADCHECK_DEBUG").is_ok() {
        for (a, n) in analytic.iter().zip(&numeric) {
            eprintln!(
                "{a:+.6e} {n:+.6e} abs {:.2e} rel/scale {:.2e}",
                (a - n).abs(),
                (a - n).abs() / scale
            );
        }
    }
    let max_rel_err = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / scale)
        .fold(0.0, f64::max);
    GradCheck {
        max_rel_err,
        compared: analytic.len(),
    }
}

/// Random values kept at least `gap` away from zero, for ops with a kink there.
pub fn away_from_zero(rng: &mut ChaCha8Rng, shape: [usize; 4], gap: f32) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let mag = rng.random_range(gap..1.0);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

pub fn tiny_config(blocks: usize, paths: usize) -> pathroute::model::ModelConfig {
    pathroute::model::ModelConfig {
        blocks,
        paths,
        pathfinder_convs: 1,
        features: 3,
        hidden: 4,
        pathfinder_width: 2,
        channels: 1,
        patch: 11,
    }
}

pub fn unit_patch(rng: &mut ChaCha8Rng, channels: usize, h: usize, w: usize) -> Tensor {
    let data = (0..channels * h * w).map(|_| rng.random::<f32>()).collect();
    Tensor::new([1, channels, h, w], data).unwrap()
}

/// Overwrites every parameter whose name starts with `prefix` with values in `±scale`.
pub fn randomize(model: &mut pathroute::model::Model, prefix: &str, scale: f32, seed: u64) {
    let mut r = rng(seed);
    let ids: Vec<_> = model
        .params()
        .iter()
        .filter(|(_, p)| p.name.starts_with(prefix))
        .map(|(id, _)| id)
        .collect();
    for id in ids {
        let p = model.params_mut().get_mut(id);
        for v in p.value.data_mut() {
            *v = r.random_range(-scale..scale);
        }
    }
}

pub fn set_param(model: &mut pathroute::model::Model, name: &str, values: &[f32]) {
    let id = model.params().id(name).unwrap_or_else(|| panic!("no parameter {name}"));
    let p = model.params_mut().get_mut(id);
    assert_eq!(p.value.len(), values.len(), "{name}");
    p.value.data_mut().copy_from_slice(values);
}

pub fn snapshot(model: &pathroute::model::Model, ids: &[pathroute::nn::ParamId]) -> Vec<Vec<f32>> {
    ids.iter()
        .map(|id| model.params().get(*id).value.data().to_vec())
        .collect()
}
