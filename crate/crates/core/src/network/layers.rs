//! Forward and backward kernels on CHW activations.

use super::spec::LrnParams;

/// `c = beta * c + a' * b'` where `a'` is `a` (m x k) or its transpose and
/// `b'` is `b` (k x n) or its transpose. All matrices are row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_transposed: bool,
    b: &[f64],
    b_transposed: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_transposed { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index dgemm touches given these
    // strides.
    unsafe {
        matrixmultiply::dgemm(
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

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn col_rows(&self) -> usize {
        self.c * self.kernel * self.kernel
    }

    pub fn col_cols(&self) -> usize {
        self.oh * self.ow
    }
}

pub(crate) fn im2col(input: &[f64], g: &ConvGeom, col: &mut [f64]) {
    let cols = g.col_cols();
    for c in 0..g.c {
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..g.oh {
                    let y = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if y < 0 || y >= g.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &input[(c * g.h + y as usize) * g.w..(c * g.h + y as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let x = (ox * g.stride + kj) as isize - g.pad as isize;
                        *v = if x < 0 || x >= g.w as isize { 0.0 } else { src[x as usize] };
                    }
                }
            }
        }
    }
}

pub(crate) fn col2im(col: &[f64], g: &ConvGeom, grad_input: &mut [f64]) {
    let cols = g.col_cols();
    for c in 0..g.c {
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..g.oh {
                    let y = (oy * g.stride + ki) as isize - g.pad as isize;
                    if y < 0 || y >= g.h as isize {
                        continue;
                    }
                    let base = (c * g.h + y as usize) * g.w;
                    for ox in 0..g.ow {
                        let x = (ox * g.stride + kj) as isize - g.pad as isize;
                        if x >= 0 && (x as usize) < g.w {
                            grad_input[base + x as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Convolution forward. `weight` is `out x (c*k*k)`. Fills `col` for reuse
/// in the backward pass.
pub(crate) fn conv_forward(
    input: &[f64],
    g: &ConvGeom,
    weight: &[f64],
    bias: &[f64],
    col: &mut Vec<f64>,
    out: &mut [f64],
) {
    let outputs = bias.len();
    col.resize(g.col_rows() * g.col_cols(), 0.0);
    im2col(input, g, col);
    let n = g.col_cols();
    for (o, b) in bias.iter().enumerate() {
        out[o * n..(o + 1) * n].fill(*b);
    }
    gemm(outputs, g.col_rows(), n, weight, false, col, false, 1.0, out);
}

/// Accumulates weight and bias gradients and writes the input gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    grad_out: &[f64],
    g: &ConvGeom,
    weight: &[f64],
    col: &[f64],
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
    grad_input: Option<&mut [f64]>,
) {
    let outputs = grad_bias.len();
    let n = g.col_cols();
    let rows = g.col_rows();
    for (o, gb) in grad_bias.iter_mut().enumerate() {
        *gb += grad_out[o * n..(o + 1) * n].iter().sum::<f64>();
    }
    gemm(outputs, n, rows, grad_out, false, col, true, 1.0, grad_weight);
    if let Some(gi) = grad_input {
        let mut gcol = vec![0.0; rows * n];
        gemm(rows, outputs, n, weight, true, grad_out, false, 0.0, &mut gcol);
        gi.fill(0.0);
        col2im(&gcol, g, gi);
    }
}

/// Max pooling; ties resolve to the first position in scan order. Stores the
/// flat input index of each maximum in `argmax`.
pub(crate) fn maxpool_forward(
    input: &[f64],
    g: &ConvGeom,
    out: &mut [f64],
    argmax: &mut Vec<usize>,
) {
    argmax.clear();
    for c in 0..g.c {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = usize::MAX;
                for ki in 0..g.kernel {
                    let y = (oy * g.stride + ki) as isize - g.pad as isize;
                    if y < 0 || y >= g.h as isize {
                        continue;
                    }
                    for kj in 0..g.kernel {
                        let x = (ox * g.stride + kj) as isize - g.pad as isize;
                        if x < 0 || x >= g.w as isize {
                            continue;
                        }
                        let idx = (c * g.h + y as usize) * g.w + x as usize;
                        if input[idx] > best || best_idx == usize::MAX {
                            best = input[idx];
                            best_idx = idx;
                        }
                    }
                }
                out[(c * g.oh + oy) * g.ow + ox] = best;
                argmax.push(best_idx);
            }
        }
    }
}

pub(crate) fn maxpool_backward(grad_out: &[f64], argmax: &[usize], grad_input: &mut [f64]) {
    grad_input.fill(0.0);
    for (g, &i) in grad_out.iter().zip(argmax) {
        grad_input[i] += g;
    }
}

fn lrn_window(c: usize, channels: usize, size: usize) -> (usize, usize) {
    let half = size / 2;
    let lo = c.saturating_sub(half);
    let hi = (c + size - half - 1).min(channels - 1);
    (lo, hi)
}

/// Cross-channel LRN. `scale` receives `k + alpha/size * sum a^2` per element.
pub(crate) fn lrn_forward(
    input: &[f64],
    channels: usize,
    plane: usize,
    p: &LrnParams,
    out: &mut [f64],
    scale: &mut Vec<f64>,
) {
    scale.resize(input.len(), 0.0);
    let a = p.alpha / p.size as f64;
    for c in 0..channels {
        let (lo, hi) = lrn_window(c, channels, p.size);
        for i in 0..plane {
            let mut s = 0.0;
            for j in lo..=hi {
                let v = input[j * plane + i];
                s += v * v;
            }
            let sc = p.k + a * s;
            scale[c * plane + i] = sc;
            out[c * plane + i] = input[c * plane + i] * sc.powf(-p.beta);
        }
    }
}

pub(crate) fn lrn_backward(
    grad_out: &[f64],
    input: &[f64],
    scale: &[f64],
    channels: usize,
    plane: usize,
    p: &LrnParams,
    grad_input: &mut [f64],
) {
    let coef = 2.0 * p.alpha * p.beta / p.size as f64;
    // t_c = g_c * a_c * scale_c^(-beta-1)
    let t: Vec<f64> = (0..input.len())
        .map(|i| grad_out[i] * input[i] * scale[i].powf(-p.beta - 1.0))
        .collect();
    for c in 0..channels {
        // channels whose window contains c: window is symmetric up to the
        // even-size offset, so invert it explicitly
        let half = p.size / 2;
        let lo = c.saturating_sub(p.size - half - 1);
        let hi = (c + half).min(channels - 1);
        for i in 0..plane {
            let mut s = 0.0;
            for j in lo..=hi {
                s += t[j * plane + i];
            }
            let idx = c * plane + i;
            grad_input[idx] = grad_out[idx] * scale[idx].powf(-p.beta) - coef * input[idx] * s;
        }
    }
}

/// `out = W x + b` with `W` of shape `out x in`.
pub(crate) fn fc_forward(input: &[f64], weight: &[f64], bias: &[f64], out: &mut [f64]) {
    out.copy_from_slice(bias);
    gemm(bias.len(), input.len(), 1, weight, false, input, false, 1.0, out);
}

pub(crate) fn fc_backward(
    grad_out: &[f64],
    input: &[f64],
    weight: &[f64],
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
    grad_input: Option<&mut [f64]>,
) {
    let n_out = grad_out.len();
    let n_in = input.len();
    for (gb, g) in grad_bias.iter_mut().zip(grad_out) {
        *gb += g;
    }
    gemm(n_out, 1, n_in, grad_out, false, input, false, 1.0, grad_weight);
    if let Some(gi) = grad_input {
        gemm(n_in, n_out, 1, weight, true, grad_out, false, 0.0, gi);
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln()
}
