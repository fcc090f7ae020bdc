//! Per-layer forward and backward kernels on flat row-major buffers.
//!
//! Activations are `[n, per_example]` with NCHW order inside an example.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{axpy, dot};

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeom {
    pub fn oh(&self) -> usize {
        self.h - self.kh + 1
    }
    pub fn ow(&self) -> usize {
        self.w - self.kw + 1
    }
    /// Length of one unrolled receptive field.
    pub fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }
    pub fn positions(&self) -> usize {
        self.oh() * self.ow()
    }
}

/// Unrolls every receptive field of one example into a row of `cols`
/// (`[positions, patch]`), matching the `[f, c, kh, kw]` kernel layout.
fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let (oh, ow, patch) = (g.oh(), g.ow(), g.patch());
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &mut cols[(oy * ow + ox) * patch..][..patch];
            let mut k = 0;
            for ci in 0..g.c {
                let plane = &x[ci * g.h * g.w..];
                for ky in 0..g.kh {
                    let src = &plane[(oy + ky) * g.w + ox..][..g.kw];
                    row[k..k + g.kw].copy_from_slice(src);
                    k += g.kw;
                }
            }
        }
    }
}

fn col2im_add(dcols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let (oh, ow, patch) = (g.oh(), g.ow(), g.patch());
    for oy in 0..oh {
        for ox in 0..ow {
            let row = &dcols[(oy * ow + ox) * patch..][..patch];
            let mut k = 0;
            for ci in 0..g.c {
                for ky in 0..g.kh {
                    let dst = &mut dx[ci * g.h * g.w + (oy + ky) * g.w + ox..][..g.kw];
                    for (d, &v) in dst.iter_mut().zip(&row[k..k + g.kw]) {
                        *d += v;
                    }
                    k += g.kw;
                }
            }
        }
    }
}

/// Returns `(output, cols)`; `cols` is kept for the backward pass.
pub(crate) fn conv_forward(
    x: &[f64],
    n: usize,
    g: &ConvGeom,
    kernel: &[f64],
    bias: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (in_size, p, patch) = (g.c * g.h * g.w, g.positions(), g.patch());
    let mut out = vec![0.0; n * g.f * p];
    let mut cols = vec![0.0; n * p * patch];
    for s in 0..n {
        let col = &mut cols[s * p * patch..][..p * patch];
        im2col(&x[s * in_size..][..in_size], g, col);
        let o = &mut out[s * g.f * p..][..g.f * p];
        for f in 0..g.f {
            let wf = &kernel[f * patch..][..patch];
            for (pos, y) in o[f * p..][..p].iter_mut().enumerate() {
                *y = bias[f] + dot(wf, &col[pos * patch..][..patch]);
            }
        }
    }
    (out, cols)
}

/// Accumulates into `dkernel`/`dbias`; returns the input gradient when asked.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    dout: &[f64],
    cols: &[f64],
    n: usize,
    g: &ConvGeom,
    kernel: &[f64],
    dkernel: &mut [f64],
    dbias: &mut [f64],
    need_dx: bool,
) -> Option<Vec<f64>> {
    let (in_size, p, patch) = (g.c * g.h * g.w, g.positions(), g.patch());
    let mut dx = need_dx.then(|| vec![0.0; n * in_size]);
    let mut dcol = vec![0.0; if need_dx { p * patch } else { 0 }];
    for s in 0..n {
        let col = &cols[s * p * patch..][..p * patch];
        let d = &dout[s * g.f * p..][..g.f * p];
        if need_dx {
            dcol.iter_mut().for_each(|v| *v = 0.0);
        }
        for f in 0..g.f {
            let wf = &kernel[f * patch..][..patch];
            let dwf = &mut dkernel[f * patch..][..patch];
            for pos in 0..p {
                let gv = d[f * p + pos];
                dbias[f] += gv;
                axpy(gv, &col[pos * patch..][..patch], dwf);
                if need_dx {
                    axpy(gv, wf, &mut dcol[pos * patch..][..patch]);
                }
            }
        }
        if let Some(dx) = dx.as_mut() {
            col2im_add(&dcol, g, &mut dx[s * in_size..][..in_size]);
        }
    }
    dx
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PoolGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
}

impl PoolGeom {
    pub fn oh(&self) -> usize {
        (self.h - self.kh) / self.sh + 1
    }
    pub fn ow(&self) -> usize {
        (self.w - self.kw) / self.sw + 1
    }
}

/// Max pooling. Also returns, per output, the flat input index (within the
/// batch) that won; ties go to the lowest flat index.
pub(crate) fn pool_forward(x: &[f64], n: usize, g: &PoolGeom) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (g.oh(), g.ow());
    let total = n * g.c * oh * ow;
    let mut out = Vec::with_capacity(total);
    let mut arg = Vec::with_capacity(total);
    for plane in 0..n * g.c {
        let base = plane * g.h * g.w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * g.sh * g.w + ox * g.sw;
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let idx = base + (oy * g.sh + ky) * g.w + ox * g.sw + kx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

pub(crate) fn pool_backward(dout: &[f64], arg: &[usize], input_len: usize) -> Vec<f64> {
    let mut dx = vec![0.0; input_len];
    for (&g, &i) in dout.iter().zip(arg) {
        dx[i] += g;
    }
    dx
}

/// `y = x Wᵀ + b` with `W` stored `[out, in]`.
pub(crate) fn linear_forward(
    x: &[f64],
    n: usize,
    fan_in: usize,
    fan_out: usize,
    weight: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let mut y = Vec::with_capacity(n * fan_out);
    for s in 0..n {
        let xs = &x[s * fan_in..][..fan_in];
        for o in 0..fan_out {
            y.push(bias[o] + dot(&weight[o * fan_in..][..fan_in], xs));
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward(
    dy: &[f64],
    x: &[f64],
    n: usize,
    fan_in: usize,
    fan_out: usize,
    weight: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
    need_dx: bool,
) -> Option<Vec<f64>> {
    let mut dx = need_dx.then(|| vec![0.0; n * fan_in]);
    for s in 0..n {
        let xs = &x[s * fan_in..][..fan_in];
        for o in 0..fan_out {
            let g = dy[s * fan_out + o];
            dbias[o] += g;
            axpy(g, xs, &mut dweight[o * fan_in..][..fan_in]);
            if let Some(dx) = dx.as_mut() {
                axpy(g, &weight[o * fan_in..][..fan_in], &mut dx[s * fan_in..][..fan_in]);
            }
        }
    }
    dx
}

pub(crate) fn relu_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
}

pub(crate) fn relu_backward(dy: &[f64], y: &[f64]) -> Vec<f64> {
    dy.iter()
        .zip(y)
        .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
        .collect()
}

/// Mean cross-entropy of a row-wise softmax. Returns `(loss, probabilities)`.
pub(crate) fn softmax_loss_forward(logits: &[f64], labels: &[usize], classes: usize) -> (f64, Vec<f64>) {
    let n = labels.len();
    let mut probs = vec![0.0; logits.len()];
    let mut total = 0.0;
    for (s, &label) in labels.iter().enumerate() {
        let z = &logits[s * classes..][..classes];
        let p = &mut probs[s * classes..][..classes];
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (pi, &zi) in p.iter_mut().zip(z) {
            *pi = libm::exp(zi - max);
            sum += *pi;
        }
        for pi in p.iter_mut() {
            *pi /= sum;
        }
        total += -(z[label] - max - libm::log(sum));
    }
    (total / n as f64, probs)
}

/// Gradient of the batch-mean loss with respect to the logits.
pub(crate) fn softmax_loss_backward(probs: &[f64], labels: &[usize], classes: usize) -> Vec<f64> {
    let inv_n = 1.0 / labels.len() as f64;
    let mut d: Vec<f64> = probs.iter().map(|&p| p * inv_n).collect();
    for (s, &label) in labels.iter().enumerate() {
        d[s * classes + label] -= inv_n;
    }
    d
}
