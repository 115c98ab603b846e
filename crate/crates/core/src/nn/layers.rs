//! Batched kernels: convolution (im2col + GEMM), batch normalisation,
//! ReLU, global average pooling and the dense head.
//!
//! Convolutions fan out over samples; per-sample weight gradients are
//! reduced in sample order so results do not depend on thread scheduling.

use rayon::prelude::*;

use super::tensor::Tensor;

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_side(&self, side: usize) -> usize {
        (side + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn patch_len(&self) -> usize {
        self.in_c * self.k * self.k
    }

    pub fn weight_len(&self) -> usize {
        self.out_c * self.patch_len()
    }
}

fn im2col(x: &[f64], h: usize, w: usize, g: &ConvGeom, oh: usize, ow: usize, cols: &mut [f64]) {
    let opix = oh * ow;
    let mut row = 0;
    for ci in 0..g.in_c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let dst = &mut cols[row * opix..(row + 1) * opix];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

fn col2im(cols: &[f64], h: usize, w: usize, g: &ConvGeom, oh: usize, ow: usize, dx: &mut [f64]) {
    let opix = oh * ow;
    let mut row = 0;
    for ci in 0..g.in_c {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let src = &cols[row * opix..(row + 1) * opix];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let line = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < w as isize {
                            line[ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// `c[m x n] = beta * c + a[m x k] * b[k x n]`, all row-major unless the
/// strides say otherwise.
#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: slice lengths cover the strided extents used by the caller;
    // `c` does not alias `a` or `b`.
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

pub(crate) fn conv_forward(x: &Tensor, weight: &[f64], g: &ConvGeom) -> Tensor {
    debug_assert_eq!(x.c, g.in_c);
    debug_assert_eq!(x.h, x.w);
    let oh = g.out_side(x.h);
    let ow = g.out_side(x.w);
    let opix = oh * ow;
    let q = g.patch_len();
    let mut out = Tensor::zeros(x.n, g.out_c, oh, ow);
    let sample_out = g.out_c * opix;
    out.data
        .par_chunks_mut(sample_out)
        .enumerate()
        .for_each_init(Vec::new, |cols, (i, dst)| {
            cols.resize(q * opix, 0.0);
            im2col(x.sample(i), x.h, x.w, g, oh, ow, cols);
            gemm(g.out_c, q, opix, weight, (q as isize, 1), cols, (opix as isize, 1), 0.0, dst);
        });
    out
}

/// Returns `(dx, dweight)`; either may be skipped.
pub(crate) fn conv_backward(
    x: &Tensor,
    weight: &[f64],
    g: &ConvGeom,
    dy: &Tensor,
    need_dx: bool,
    need_dw: bool,
) -> (Option<Tensor>, Option<Vec<f64>>) {
    let oh = dy.h;
    let ow = dy.w;
    let opix = oh * ow;
    let q = g.patch_len();
    let wlen = g.weight_len();
    let per_sample: Vec<(Option<Vec<f64>>, Option<Vec<f64>>)> = (0..x.n)
        .into_par_iter()
        .map(|i| {
            let dyi = dy.sample(i);
            let mut cols = vec![0.0; q * opix];
            let dw = need_dw.then(|| {
                im2col(x.sample(i), x.h, x.w, g, oh, ow, &mut cols);
                let mut dw = vec![0.0; wlen];
                // dW[co, p] = sum_pix dy[co, pix] * cols[p, pix]
                gemm(g.out_c, opix, q, dyi, (opix as isize, 1), &cols, (1, opix as isize), 0.0, &mut dw);
                dw
            });
            let dx = need_dx.then(|| {
                // dcols[p, pix] = sum_co W[co, p] * dy[co, pix]
                gemm(q, g.out_c, opix, weight, (1, q as isize), dyi, (opix as isize, 1), 0.0, &mut cols);
                let mut dx = vec![0.0; x.sample_len()];
                col2im(&cols, x.h, x.w, g, oh, ow, &mut dx);
                dx
            });
            (dx, dw)
        })
        .collect();

    let dw = need_dw.then(|| {
        let mut acc = vec![0.0; wlen];
        for (_, dw) in &per_sample {
            for (a, b) in acc.iter_mut().zip(dw.as_ref().expect("dw computed")) {
                *a += b;
            }
        }
        acc
    });
    let dx = need_dx.then(|| {
        let mut data = Vec::with_capacity(x.data.len());
        for (dx, _) in &per_sample {
            data.extend_from_slice(dx.as_ref().expect("dx computed"));
        }
        Tensor::from_vec(x.n, x.c, x.h, x.w, data)
    });
    (dx, dw)
}

/// Which statistics a batch-norm layer normalises with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BnMode {
    Batch,
    Running,
}

#[derive(Debug, Clone)]
pub(crate) struct BnCache {
    pub mode: BnMode,
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    /// Unbiased batch variance, the value folded into the running estimate.
    pub batch_var: Vec<f64>,
}

pub(crate) fn bn_forward(
    x: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
    mode: BnMode,
) -> (Tensor, BnCache) {
    let plane = x.plane();
    let count = (x.n * plane) as f64;
    let mut mean = vec![0.0; x.c];
    let mut var = vec![0.0; x.c];
    let mut unbiased = vec![0.0; x.c];
    let inv_std: Vec<f64> = match mode {
        BnMode::Batch => {
            for c in 0..x.c {
                let mut s = 0.0;
                for i in 0..x.n {
                    s += x.sample(i)[c * plane..(c + 1) * plane].iter().sum::<f64>();
                }
                let mu = s / count;
                let mut ss = 0.0;
                for i in 0..x.n {
                    ss += x.sample(i)[c * plane..(c + 1) * plane]
                        .iter()
                        .map(|v| (v - mu) * (v - mu))
                        .sum::<f64>();
                }
                mean[c] = mu;
                var[c] = ss / count;
                unbiased[c] = if count > 1.0 { ss / (count - 1.0) } else { var[c] };
            }
            var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect()
        }
        BnMode::Running => {
            mean.copy_from_slice(running_mean);
            running_var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect()
        }
    };
    let mut xhat = Tensor::zeros(x.n, x.c, x.h, x.w);
    let mut y = Tensor::zeros(x.n, x.c, x.h, x.w);
    for i in 0..x.n {
        let src = x.sample(i);
        let base = i * x.sample_len();
        for c in 0..x.c {
            for p in c * plane..(c + 1) * plane {
                let xh = (src[p] - mean[c]) * inv_std[c];
                xhat.data[base + p] = xh;
                y.data[base + p] = gamma[c] * xh + beta[c];
            }
        }
    }
    let cache = BnCache {
        mode,
        xhat,
        inv_std,
        batch_mean: mean,
        batch_var: unbiased,
    };
    (y, cache)
}

/// Returns `(dx, dgamma, dbeta)`.
pub(crate) fn bn_backward(cache: &BnCache, gamma: &[f64], dy: &Tensor) -> (Tensor, Vec<f64>, Vec<f64>) {
    let xhat = &cache.xhat;
    let plane = dy.plane();
    let count = (dy.n * plane) as f64;
    let mut dgamma = vec![0.0; dy.c];
    let mut dbeta = vec![0.0; dy.c];
    for i in 0..dy.n {
        let d = dy.sample(i);
        let xh = xhat.sample(i);
        for c in 0..dy.c {
            for p in c * plane..(c + 1) * plane {
                dgamma[c] += d[p] * xh[p];
                dbeta[c] += d[p];
            }
        }
    }
    let mut dx = Tensor::zeros(dy.n, dy.c, dy.h, dy.w);
    for i in 0..dy.n {
        let d = dy.sample(i);
        let xh = xhat.sample(i);
        let base = i * dy.sample_len();
        for c in 0..dy.c {
            let scale = gamma[c] * cache.inv_std[c];
            match cache.mode {
                BnMode::Running => {
                    for p in c * plane..(c + 1) * plane {
                        dx.data[base + p] = d[p] * scale;
                    }
                }
                BnMode::Batch => {
                    // dx = gamma * inv_std / m * (m * dy - sum(dy) - xhat * sum(dy * xhat))
                    let (sd, sdx) = (dbeta[c], dgamma[c]);
                    for p in c * plane..(c + 1) * plane {
                        dx.data[base + p] = scale / count * (count * d[p] - sd - xh[p] * sdx);
                    }
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

pub(crate) fn relu_inplace(x: &mut Tensor) {
    for v in &mut x.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Masks `grad` where the ReLU output was not positive.
pub(crate) fn relu_backward_inplace(out: &Tensor, grad: &mut Tensor) {
    for (g, &o) in grad.data.iter_mut().zip(&out.data) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

pub(crate) fn global_avg_pool(x: &Tensor) -> Vec<f64> {
    let plane = x.plane();
    let mut out = Vec::with_capacity(x.n * x.c);
    for i in 0..x.n {
        let s = x.sample(i);
        for c in 0..x.c {
            out.push(s[c * plane..(c + 1) * plane].iter().sum::<f64>() / plane as f64);
        }
    }
    out
}

pub(crate) fn global_avg_pool_backward(dpooled: &[f64], n: usize, c: usize, h: usize, w: usize) -> Tensor {
    let plane = h * w;
    let mut dx = Tensor::zeros(n, c, h, w);
    for i in 0..n {
        let dst = dx.sample_mut(i);
        for ch in 0..c {
            let g = dpooled[i * c + ch] / plane as f64;
            dst[ch * plane..(ch + 1) * plane].fill(g);
        }
    }
    dx
}

/// `logits[i, k] = sum_c W[k, c] * x[i, c] + b[k]`.
pub(crate) fn dense_forward(x: &[f64], n: usize, in_f: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let out_f = bias.len();
    let mut out = Vec::with_capacity(n * out_f);
    for i in 0..n {
        let xi = &x[i * in_f..(i + 1) * in_f];
        for k in 0..out_f {
            let wk = &weight[k * in_f..(k + 1) * in_f];
            out.push(wk.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() + bias[k]);
        }
    }
    out
}

/// Returns `(dx, dweight, dbias)`.
pub(crate) fn dense_backward(
    x: &[f64],
    n: usize,
    in_f: usize,
    weight: &[f64],
    dout: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let out_f = dout.len() / n;
    let mut dx = vec![0.0; n * in_f];
    let mut dw = vec![0.0; out_f * in_f];
    let mut db = vec![0.0; out_f];
    for i in 0..n {
        let xi = &x[i * in_f..(i + 1) * in_f];
        for k in 0..out_f {
            let g = dout[i * out_f + k];
            db[k] += g;
            for c in 0..in_f {
                dw[k * in_f + c] += g * xi[c];
                dx[i * in_f + c] += g * weight[k * in_f + c];
            }
        }
    }
    (dx, dw, db)
}
