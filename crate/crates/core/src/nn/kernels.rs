//! Raw compute kernels over flat slices: row-major GEMM and the im2col
//! convolution built on it.

/// `c = a·b + beta·c` for row-major operands. `a` is `m×k` (or `k×m` when
/// `a_t`), `b` is `k×n` (or `n×k` when `b_t`).
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f32], a_t: bool, b: &[f32], b_t: bool, beta: f32, c: &mut [f32]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: extents were checked against the slice lengths above and the
    // strides describe a dense row-major layout inside those bounds.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub in_h: usize,
    pub in_w: usize,
}

impl ConvGeometry {
    pub fn out_extent(&self, size: usize) -> usize {
        let span = self.dilation * (self.kernel - 1) + 1;
        (size + 2 * self.padding).saturating_sub(span) / self.stride + 1
    }

    pub fn out_h(&self) -> usize {
        self.out_extent(self.in_h)
    }

    pub fn out_w(&self) -> usize {
        self.out_extent(self.in_w)
    }

    pub fn patch_len(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }

    pub fn fits(&self) -> bool {
        let span = self.dilation * (self.kernel - 1) + 1;
        self.in_h + 2 * self.padding >= span && self.in_w + 2 * self.padding >= span
    }
}

/// Expands one `(in_ch, h, w)` plane into `(in_ch·k·k, out_h·out_w)` columns.
pub fn im2col(g: &ConvGeometry, input: &[f32], cols: &mut [f32]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let k = g.kernel;
    let plane = g.in_h * g.in_w;
    for c in 0..g.in_ch {
        let src = &input[c * plane..(c + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                let dy = (ky * g.dilation) as isize - g.padding as isize;
                let dx = (kx * g.dilation) as isize - g.padding as isize;
                for oy in 0..oh {
                    let iy = (oy * g.stride) as isize + dy;
                    let out_row = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= g.in_h as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src_row = &src[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    if g.stride == 1 {
                        // contiguous span of valid columns
                        let lo = (-dx).clamp(0, ow as isize) as usize;
                        let hi = (g.in_w as isize - dx).clamp(0, ow as isize) as usize;
                        out_row[..lo].fill(0.0);
                        if hi > lo {
                            let s = (lo as isize + dx) as usize;
                            out_row[lo..hi].copy_from_slice(&src_row[s..s + hi - lo]);
                        }
                        out_row[hi.max(lo)..].fill(0.0);
                    } else {
                        for (ox, v) in out_row.iter_mut().enumerate() {
                            let ix = (ox * g.stride) as isize + dx;
                            *v = if ix < 0 || ix >= g.in_w as isize {
                                0.0
                            } else {
                                src_row[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `out`.
pub fn col2im(g: &ConvGeometry, cols: &[f32], out: &mut [f32]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let k = g.kernel;
    let plane = g.in_h * g.in_w;
    for c in 0..g.in_ch {
        let dst = &mut out[c * plane..(c + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                let dy = (ky * g.dilation) as isize - g.padding as isize;
                let dx = (kx * g.dilation) as isize - g.padding as isize;
                for oy in 0..oh {
                    let iy = (oy * g.stride) as isize + dy;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst_row = &mut dst[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    let src_row = &src[oy * ow..(oy + 1) * ow];
                    for (ox, v) in src_row.iter().enumerate() {
                        let ix = (ox * g.stride) as isize + dx;
                        if ix >= 0 && ix < g.in_w as isize {
                            dst_row[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Batched forward convolution. `weight` is `(out_ch, in_ch·k·k)` row-major.
pub fn conv_forward(g: &ConvGeometry, batch: usize, input: &[f32], weight: &[f32], bias: &[f32]) -> Vec<f32> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let spatial = oh * ow;
    let in_stride = g.in_ch * g.in_h * g.in_w;
    let out_stride = g.out_ch * spatial;
    let mut out = vec![0.0; batch * out_stride];
    let mut cols = vec![0.0; g.patch_len() * spatial];
    for n in 0..batch {
        let dst = &mut out[n * out_stride..(n + 1) * out_stride];
        for (o, b) in bias.iter().enumerate() {
            dst[o * spatial..(o + 1) * spatial].fill(*b);
        }
        im2col(g, &input[n * in_stride..(n + 1) * in_stride], &mut cols);
        gemm(g.out_ch, g.patch_len(), spatial, weight, false, &cols, false, 1.0, dst);
    }
    out
}

pub struct ConvGrads {
    pub input: Vec<f32>,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

pub fn conv_backward(g: &ConvGeometry, batch: usize, input: &[f32], weight: &[f32], grad_out: &[f32]) -> ConvGrads {
    let spatial = g.out_h() * g.out_w();
    let in_stride = g.in_ch * g.in_h * g.in_w;
    let out_stride = g.out_ch * spatial;
    let kk = g.patch_len();
    let mut grads = ConvGrads {
        input: vec![0.0; batch * in_stride],
        weight: vec![0.0; g.out_ch * kk],
        bias: vec![0.0; g.out_ch],
    };
    let mut cols = vec![0.0; kk * spatial];
    for n in 0..batch {
        let go = &grad_out[n * out_stride..(n + 1) * out_stride];
        for (o, gb) in grads.bias.iter_mut().enumerate() {
            *gb += go[o * spatial..(o + 1) * spatial].iter().sum::<f32>();
        }
        im2col(g, &input[n * in_stride..(n + 1) * in_stride], &mut cols);
        // dW += dY · colsᵀ
        gemm(g.out_ch, spatial, kk, go, false, &cols, true, 1.0, &mut grads.weight);
        // dcols = Wᵀ · dY
        gemm(kk, g.out_ch, spatial, weight, true, go, false, 0.0, &mut cols);
        col2im(g, &cols, &mut grads.input[n * in_stride..(n + 1) * in_stride]);
    }
    grads
}
