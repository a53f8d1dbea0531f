//! Tape-based reverse-mode differentiation.
//!
//! Every op appends a node holding its forward value. `backward` walks the
//! tape once in reverse, so a tape is built per forward pass and thrown away.

use super::kernels::{self, ConvGeometry};
use super::param::{ParamId, ParamStore};
use super::tensor::{ensure_finite, Shape, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dOpts {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl Conv2dOpts {
    /// Stride 1 with the padding that keeps spatial extents for a `k×k` kernel.
    pub fn same(kernel: usize) -> Self {
        Conv2dOpts {
            stride: 1,
            padding: (kernel - 1) / 2,
            dilation: 1,
        }
    }

    pub fn dilated(kernel: usize, dilation: usize) -> Self {
        Conv2dOpts {
            stride: 1,
            padding: dilation * (kernel - 1) / 2,
            dilation,
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        geom: ConvGeometry,
    },
    Relu(Var),
    Add(Var, Var),
    Scale(Var, f32),
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Lstm {
        input: Var,
        h: Var,
        c: Var,
        w_ih: Var,
        w_hh: Var,
        bias: Var,
        // post-activation gates (i, f, g, o) per row, then the new cell
        gates: Vec<f32>,
    },
    Narrow {
        input: Var,
        start: usize,
    },
    Softmax(Var),
    LogSoftmax(Var),
    Pick {
        input: Var,
        offset: usize,
    },
    Mse(Var, Var),
    GlobalAvgPool(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Linear record of one forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f32 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant input; gradients still flow into it.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let mut value = value;
        value.set_grad(None).expect("clearing a grad never fails");
        self.push(value, Op::Leaf)
    }

    /// Snapshot of a trainable parameter; its gradient is reported under `id`.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let value = Tensor::new(store.get(id).value.shape(), store.get(id).value.data().to_vec())
            .expect("parameter extents are validated on insert");
        self.push(value, Op::Param(id))
    }

    /// Copies `v` into a fresh leaf, cutting the gradient path behind it.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.leaf(value)
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, opts: Conv2dOpts) -> Result<Var> {
        let [n, c, h, w] = self.shape(input);
        let [oc, ic, kh, kw] = self.shape(weight);
        if kh != kw || kh % 2 == 0 {
            return Err(Error::config(format!(
                "conv kernel must be square and odd, got {kh}x{kw}"
            )));
        }
        if ic != c {
            return Err(Error::config(format!("conv expects {ic} input channels, got {c}")));
        }
        if self.value(bias).len() != oc {
            return Err(Error::config(format!(
                "conv bias has {} entries for {oc} outputs",
                self.value(bias).len()
            )));
        }
        if opts.stride == 0 || opts.dilation == 0 {
            return Err(Error::config("conv stride and dilation must be positive"));
        }
        let geom = ConvGeometry {
            in_ch: c,
            out_ch: oc,
            kernel: kh,
            stride: opts.stride,
            padding: opts.padding,
            dilation: opts.dilation,
            in_h: h,
            in_w: w,
        };
        if !geom.fits() {
            return Err(Error::config(format!(
                "{h}x{w} input is smaller than the conv receptive field"
            )));
        }
        let out = kernels::conv_forward(
            &geom,
            n,
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
        );
        ensure_finite(&out, "conv2d output")?;
        let value = Tensor::new([n, oc, geom.out_h(), geom.out_w()], out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            },
        ))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|v| v.max(0.0)).collect();
        let value = Tensor::new(x.shape(), data).expect("same extents");
        self.push(value, Op::Relu(input))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::config(format!("add of {:?} and {:?}", va.shape(), vb.shape())));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(va.shape(), data)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn scale(&mut self, input: Var, factor: f32) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|v| v * factor).collect();
        let value = Tensor::new(x.shape(), data).expect("same extents");
        self.push(value, Op::Scale(input, factor))
    }

    /// Sum of same-shaped nodes.
    pub fn sum(&mut self, vars: &[Var]) -> Result<Var> {
        let (first, rest) = vars.split_first().ok_or_else(|| Error::usage("sum of an empty list"))?;
        rest.iter().try_fold(*first, |acc, v| self.add(acc, *v))
    }

    /// `input·weightᵀ + bias` over rows of `(batch, in, 1, 1)`; `weight` is `(out, in, 1, 1)`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let rows = self.value(input).batch();
        let fin = features(self.value(input));
        let [out, win, _, _] = self.shape(weight);
        if features(self.value(weight)) != fin || win != fin {
            return Err(Error::config(format!(
                "linear weight {:?} for {fin} input features",
                self.shape(weight)
            )));
        }
        if self.value(bias).len() != out {
            return Err(Error::config(format!(
                "linear bias has {} entries for {out} outputs",
                self.value(bias).len()
            )));
        }
        let mut y = Vec::with_capacity(rows * out);
        for _ in 0..rows {
            y.extend_from_slice(self.value(bias).data());
        }
        kernels::gemm(
            rows,
            fin,
            out,
            self.value(input).data(),
            false,
            self.value(weight).data(),
            true,
            1.0,
            &mut y,
        );
        ensure_finite(&y, "linear output")?;
        let value = Tensor::vectors(rows, out, y)?;
        Ok(self.push(value, Op::Linear { input, weight, bias }))
    }

    /// One gated recurrent update. Returns `(h', c')`.
    ///
    /// Gate rows of `w_ih` (`4H × in`), `w_hh` (`4H × H`) and `bias` (`4H`) are
    /// ordered input, forget, candidate, output.
    pub fn lstm_step(&mut self, input: Var, h: Var, c: Var, w_ih: Var, w_hh: Var, bias: Var) -> Result<(Var, Var)> {
        let rows = self.value(input).batch();
        let fin = features(self.value(input));
        let hidden = features(self.value(h));
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(format!("lstm_step: {what}")))
            }
        };
        check(
            self.value(h).batch() == rows && self.value(c).batch() == rows,
            "batch mismatch",
        )?;
        check(features(self.value(c)) == hidden, "cell and hidden extents differ")?;
        check(
            self.shape(w_ih)[0] == 4 * hidden && features(self.value(w_ih)) == fin,
            "input weight extents",
        )?;
        check(
            self.shape(w_hh)[0] == 4 * hidden && features(self.value(w_hh)) == hidden,
            "recurrent weight extents",
        )?;
        check(self.value(bias).len() == 4 * hidden, "bias extents")?;

        let g4 = 4 * hidden;
        let mut pre = Vec::with_capacity(rows * g4);
        for _ in 0..rows {
            pre.extend_from_slice(self.value(bias).data());
        }
        kernels::gemm(
            rows,
            fin,
            g4,
            self.value(input).data(),
            false,
            self.value(w_ih).data(),
            true,
            1.0,
            &mut pre,
        );
        kernels::gemm(
            rows,
            hidden,
            g4,
            self.value(h).data(),
            false,
            self.value(w_hh).data(),
            true,
            1.0,
            &mut pre,
        );

        let cell = self.value(c).data();
        let mut gates = vec![0.0; rows * 5 * hidden];
        let mut out = vec![0.0; rows * 2 * hidden];
        for r in 0..rows {
            let p = &pre[r * g4..(r + 1) * g4];
            let gsave = &mut gates[r * 5 * hidden..(r + 1) * 5 * hidden];
            for j in 0..hidden {
                let i = sigmoid(p[j]);
                let f = sigmoid(p[hidden + j]);
                let g = p[2 * hidden + j].tanh();
                let o = sigmoid(p[3 * hidden + j]);
                let c_next = f * cell[r * hidden + j] + i * g;
                gsave[j] = i;
                gsave[hidden + j] = f;
                gsave[2 * hidden + j] = g;
                gsave[3 * hidden + j] = o;
                gsave[4 * hidden + j] = c_next;
                out[r * 2 * hidden + j] = o * c_next.tanh();
                out[r * 2 * hidden + hidden + j] = c_next;
            }
        }
        ensure_finite(&out, "lstm_step output")?;
        let value = Tensor::vectors(rows, 2 * hidden, out)?;
        let joint = self.push(
            value,
            Op::Lstm {
                input,
                h,
                c,
                w_ih,
                w_hh,
                bias,
                gates,
            },
        );
        let h_next = self.narrow(joint, 0, hidden)?;
        let c_next = self.narrow(joint, hidden, hidden)?;
        Ok((h_next, c_next))
    }

    /// Channels `start..start+len` of `input`.
    pub fn narrow(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let [n, c, h, w] = self.shape(input);
        if start + len > c {
            return Err(Error::config(format!("narrow {start}+{len} past {c} channels")));
        }
        let plane = h * w;
        let src = self.value(input).data();
        let mut data = Vec::with_capacity(n * len * plane);
        for b in 0..n {
            let base = (b * c + start) * plane;
            data.extend_from_slice(&src[base..base + len * plane]);
        }
        let value = Tensor::new([n, len, h, w], data)?;
        Ok(self.push(value, Op::Narrow { input, start }))
    }

    /// Softmax across features of each row.
    pub fn softmax(&mut self, logits: Var) -> Result<Var> {
        let x = self.value(logits);
        let (rows, m) = (x.batch(), features(x));
        if m == 0 {
            return Err(Error::config("softmax over zero entries"));
        }
        let mut data = Vec::with_capacity(rows * m);
        for row in x.data().chunks(m) {
            data.extend(softmax_row(row));
        }
        ensure_finite(&data, "softmax")?;
        let value = Tensor::new(x.shape(), data)?;
        Ok(self.push(value, Op::Softmax(logits)))
    }

    pub fn log_softmax(&mut self, logits: Var) -> Result<Var> {
        let x = self.value(logits);
        let (rows, m) = (x.batch(), features(x));
        if m == 0 {
            return Err(Error::config("log_softmax over zero entries"));
        }
        let mut data = Vec::with_capacity(rows * m);
        for row in x.data().chunks(m) {
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f32>().ln();
            data.extend(row.iter().map(|v| v - lse));
        }
        ensure_finite(&data, "log_softmax")?;
        let value = Tensor::new(x.shape(), data)?;
        Ok(self.push(value, Op::LogSoftmax(logits)))
    }

    /// Single entry `(row, feature)` of a vector batch, as a scalar node.
    pub fn pick(&mut self, input: Var, row: usize, feature: usize) -> Result<Var> {
        let x = self.value(input);
        let m = features(x);
        if row >= x.batch() || feature >= m {
            return Err(Error::usage(format!("pick ({row}, {feature}) outside {:?}", x.shape())));
        }
        let offset = row * m + feature;
        let value = Tensor::scalar(x.data()[offset]);
        Ok(self.push(value, Op::Pick { input, offset }))
    }

    /// Mean squared difference over every element.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = mse(self.value(a), self.value(b))?;
        Ok(self.push(Tensor::scalar(value), Op::Mse(a, b)))
    }

    /// Per-channel spatial mean, `(n, c, h, w) -> (n, c, 1, 1)`.
    pub fn global_avg_pool(&mut self, input: Var) -> Var {
        let [n, c, h, w] = self.shape(input);
        let plane = (h * w).max(1);
        let data = self
            .value(input)
            .data()
            .chunks(plane)
            .map(|ch| ch.iter().sum::<f32>() / plane as f32)
            .collect();
        let value = Tensor::new([n, c, 1, 1], data).expect("same channel count");
        self.push(value, Op::GlobalAvgPool(input))
    }

    /// Reverse sweep from the scalar `loss`. A tape can be swept only once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::usage("backward on a tape that was already consumed"));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::usage(format!("backward from non-scalar {:?}", self.shape(loss))));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f32>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Param(_) => {}
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    geom,
                } => {
                    let n = self.value(*input).batch();
                    let cg = kernels::conv_backward(geom, n, self.value(*input).data(), self.value(*weight).data(), &g);
                    accumulate(&mut grads, *input, &cg.input);
                    accumulate(&mut grads, *weight, &cg.weight);
                    accumulate(&mut grads, *bias, &cg.bias);
                }
                Op::Relu(input) => {
                    let x = self.value(*input).data();
                    let gi: Vec<f32> = g.iter().zip(x).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect();
                    accumulate(&mut grads, *input, &gi);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, &g);
                    accumulate(&mut grads, *b, &g);
                }
                Op::Scale(input, factor) => {
                    let gi: Vec<f32> = g.iter().map(|v| v * factor).collect();
                    accumulate(&mut grads, *input, &gi);
                }
                Op::Linear { input, weight, bias } => {
                    let x = self.value(*input);
                    let w = self.value(*weight);
                    let (rows, fin, out) = (x.batch(), features(x), w.batch());
                    let mut gx = vec![0.0; rows * fin];
                    kernels::gemm(rows, out, fin, &g, false, w.data(), false, 0.0, &mut gx);
                    let mut gw = vec![0.0; out * fin];
                    kernels::gemm(out, rows, fin, &g, true, x.data(), false, 0.0, &mut gw);
                    let gb = column_sums(&g, out);
                    accumulate(&mut grads, *input, &gx);
                    accumulate(&mut grads, *weight, &gw);
                    accumulate(&mut grads, *bias, &gb);
                }
                Op::Lstm {
                    input,
                    h,
                    c,
                    w_ih,
                    w_hh,
                    bias,
                    gates,
                } => {
                    let x = self.value(*input);
                    let hv = self.value(*h);
                    let cv = self.value(*c);
                    let (rows, fin, hidden) = (x.batch(), features(x), features(hv));
                    let g4 = 4 * hidden;
                    let mut dpre = vec![0.0; rows * g4];
                    let mut dc_prev = vec![0.0; rows * hidden];
                    for r in 0..rows {
                        let gs = &gates[r * 5 * hidden..(r + 1) * 5 * hidden];
                        let up = &g[r * 2 * hidden..(r + 1) * 2 * hidden];
                        for j in 0..hidden {
                            let (i, f, gg, o, cn) = (
                                gs[j],
                                gs[hidden + j],
                                gs[2 * hidden + j],
                                gs[3 * hidden + j],
                                gs[4 * hidden + j],
                            );
                            let dh = up[j];
                            let tc = cn.tanh();
                            let dc = up[hidden + j] + dh * o * (1.0 - tc * tc);
                            let d = &mut dpre[r * g4..(r + 1) * g4];
                            d[j] = dc * gg * i * (1.0 - i);
                            d[hidden + j] = dc * cv.data()[r * hidden + j] * f * (1.0 - f);
                            d[2 * hidden + j] = dc * i * (1.0 - gg * gg);
                            d[3 * hidden + j] = dh * tc * o * (1.0 - o);
                            dc_prev[r * hidden + j] = dc * f;
                        }
                    }
                    let mut gx = vec![0.0; rows * fin];
                    kernels::gemm(
                        rows,
                        g4,
                        fin,
                        &dpre,
                        false,
                        self.value(*w_ih).data(),
                        false,
                        0.0,
                        &mut gx,
                    );
                    let mut gh = vec![0.0; rows * hidden];
                    kernels::gemm(
                        rows,
                        g4,
                        hidden,
                        &dpre,
                        false,
                        self.value(*w_hh).data(),
                        false,
                        0.0,
                        &mut gh,
                    );
                    let mut gwi = vec![0.0; g4 * fin];
                    kernels::gemm(g4, rows, fin, &dpre, true, x.data(), false, 0.0, &mut gwi);
                    let mut gwh = vec![0.0; g4 * hidden];
                    kernels::gemm(g4, rows, hidden, &dpre, true, hv.data(), false, 0.0, &mut gwh);
                    let gb = column_sums(&dpre, g4);
                    accumulate(&mut grads, *input, &gx);
                    accumulate(&mut grads, *h, &gh);
                    accumulate(&mut grads, *c, &dc_prev);
                    accumulate(&mut grads, *w_ih, &gwi);
                    accumulate(&mut grads, *w_hh, &gwh);
                    accumulate(&mut grads, *bias, &gb);
                }
                Op::Narrow { input, start } => {
                    let [n, c, h, w] = self.shape(*input);
                    let len = node.value.channels();
                    let plane = h * w;
                    let mut gi = vec![0.0; n * c * plane];
                    for b in 0..n {
                        let dst = (b * c + start) * plane;
                        let src = b * len * plane;
                        gi[dst..dst + len * plane].copy_from_slice(&g[src..src + len * plane]);
                    }
                    accumulate(&mut grads, *input, &gi);
                }
                Op::Softmax(input) => {
                    let m = features(&node.value);
                    let mut gi = Vec::with_capacity(g.len());
                    for (p, up) in node.value.data().chunks(m).zip(g.chunks(m)) {
                        let dot: f32 = p.iter().zip(up).map(|(a, b)| a * b).sum();
                        gi.extend(p.iter().zip(up).map(|(p, u)| p * (u - dot)));
                    }
                    accumulate(&mut grads, *input, &gi);
                }
                Op::LogSoftmax(input) => {
                    let m = features(&node.value);
                    let mut gi = Vec::with_capacity(g.len());
                    for (lp, up) in node.value.data().chunks(m).zip(g.chunks(m)) {
                        let total: f32 = up.iter().sum();
                        gi.extend(lp.iter().zip(up).map(|(l, u)| u - l.exp() * total));
                    }
                    accumulate(&mut grads, *input, &gi);
                }
                Op::Pick { input, offset } => {
                    let mut gi = vec![0.0; self.value(*input).len()];
                    gi[*offset] = g[0];
                    accumulate(&mut grads, *input, &gi);
                }
                Op::Mse(a, b) => {
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    let k = 2.0 * g[0] / va.len() as f32;
                    let ga: Vec<f32> = va.iter().zip(vb).map(|(x, y)| k * (x - y)).collect();
                    let gb: Vec<f32> = ga.iter().map(|v| -v).collect();
                    accumulate(&mut grads, *a, &ga);
                    accumulate(&mut grads, *b, &gb);
                }
                Op::GlobalAvgPool(input) => {
                    let [_, _, h, w] = self.shape(*input);
                    let plane = h * w;
                    let inv = 1.0 / plane as f32;
                    let gi: Vec<f32> = g.iter().flat_map(|v| std::iter::repeat_n(v * inv, plane)).collect();
                    accumulate(&mut grads, *input, &gi);
                }
            }
            grads[idx] = Some(g);
        }

        for g in grads.iter().flatten() {
            ensure_finite(g, "gradient")?;
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(id) => Some((id, Var(i))),
                _ => None,
            })
            .collect();
        let lens = self.nodes.iter().map(|n| n.value.len()).collect();
        Ok(Gradients { grads, params, lens })
    }
}

/// Result of a reverse sweep.
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
    params: Vec<(ParamId, Var)>,
    lens: Vec<usize>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`; zeros when `v` does not reach the loss.
    pub fn wrt(&self, v: Var) -> Vec<f32> {
        self.grads[v.0].clone().unwrap_or_else(|| vec![0.0; self.lens[v.0]])
    }

    /// `(parameter, gradient)` for every parameter snapshot on the tape.
    /// Parameters used more than once appear once per use.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, Vec<f32>)> + '_ {
        self.params.iter().map(|(id, v)| (*id, self.wrt(*v)))
    }
}

fn features(t: &Tensor) -> usize {
    let [_, c, h, w] = t.shape();
    c * h * w
}

fn accumulate(grads: &mut [Option<Vec<f32>>], v: Var, g: &[f32]) {
    match &mut grads[v.0] {
        Some(buf) => buf.iter_mut().zip(g).for_each(|(b, x)| *b += x),
        slot @ None => *slot = Some(g.to_vec()),
    }
}

fn column_sums(g: &[f32], cols: usize) -> Vec<f32> {
    let mut out = vec![0.0; cols];
    for row in g.chunks(cols) {
        out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
    }
    out
}

pub(crate) fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Max-shifted softmax of one row.
pub fn softmax_row(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f32> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f32 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Mean squared difference of two same-shaped tensors.
pub fn mse(a: &Tensor, b: &Tensor) -> Result<f32> {
    if a.shape() != b.shape() {
        return Err(Error::config(format!("mse of {:?} and {:?}", a.shape(), b.shape())));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = (*x - *y) as f64;
            d * d
        })
        .sum();
    Ok((total / a.len() as f64) as f32)
}
