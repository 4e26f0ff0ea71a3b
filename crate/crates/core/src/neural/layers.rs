use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{rows, rows_mut, transposed, Scalar, Strided, StridedMut, Tensor};
use crate::error::{Error, Result};

/// Activation batch in `[C, N, H, W]` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Act<T> {
    pub c: usize,
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Act<T> {
    pub fn zeros(c: usize, n: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            n,
            h,
            w,
            data: vec![T::zero(); c * n * h * w],
        }
    }

    /// Converts an `[N, C, H, W]` batch.
    pub fn from_nchw(data: &[T], n: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        let hw = h * w;
        if data.len() != n * c * hw {
            return Err(Error::ShapeMismatch {
                expected: vec![n, c, h, w],
                found: vec![data.len()],
            });
        }
        let mut out = Self::zeros(c, n, h, w);
        for s in 0..n {
            for ch in 0..c {
                let src = &data[(s * c + ch) * hw..(s * c + ch + 1) * hw];
                out.data[(ch * n + s) * hw..(ch * n + s + 1) * hw].copy_from_slice(src);
            }
        }
        Ok(out)
    }

    /// Back to `[N, C, H, W]`.
    pub fn to_nchw(&self) -> Vec<T> {
        let hw = self.h * self.w;
        let mut out = vec![T::zero(); self.data.len()];
        for s in 0..self.n {
            for ch in 0..self.c {
                out[(s * self.c + ch) * hw..(s * self.c + ch + 1) * hw]
                    .copy_from_slice(&self.data[(ch * self.n + s) * hw..(ch * self.n + s + 1) * hw]);
            }
        }
        out
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.c, self.n, self.h, self.w]
    }
}

fn uniform_init<T: Scalar, R: Rng + ?Sized>(t: &mut Tensor<T>, fan_in: usize, rng: &mut R) {
    let bound = 1.0 / libm::sqrt(fan_in as f64);
    for v in &mut t.data {
        *v = T::of(rng.random_range(-bound..bound));
    }
}

/// 3x3 convolution with padding 1 and no bias. Weight shape
/// `[out, in, 3, 3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
    pub weight: Tensor<T>,
}

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, stride: usize, rng: &mut R) -> Self {
        let mut weight = Tensor::zeros(&[out_ch, in_ch, KERNEL, KERNEL]);
        uniform_init(&mut weight, in_ch * TAPS, rng);
        Self {
            in_ch,
            out_ch,
            stride,
            weight,
        }
    }

    pub fn out_size(&self, size: usize) -> usize {
        (size + 2 - KERNEL) / self.stride + 1
    }

    /// For every tap and output position, the input offset it reads, or
    /// `u32::MAX` where the kernel overlaps the zero padding.
    fn gather_table(&self, h: usize, w: usize) -> (Vec<u32>, usize, usize) {
        let (ho, wo) = (self.out_size(h), self.out_size(w));
        let mut table = Vec::with_capacity(TAPS * ho * wo);
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let iy = (oy * self.stride + ky).checked_sub(1).filter(|&y| y < h);
                        let ix = (ox * self.stride + kx).checked_sub(1).filter(|&x| x < w);
                        table.push(match (iy, ix) {
                            (Some(y), Some(x)) => (y * w + x) as u32,
                            _ => u32::MAX,
                        });
                    }
                }
            }
        }
        (table, ho, wo)
    }

    /// `[in*9, N*Ho*Wo]` patch matrix.
    fn im2col(&self, x: &Act<T>) -> (Vec<T>, usize, usize) {
        let (table, ho, wo) = self.gather_table(x.h, x.w);
        let out = ho * wo;
        let ncol = x.n * out;
        let mut cols = Vec::with_capacity(self.in_ch * TAPS * ncol);
        let hw = x.h * x.w;
        for ci in 0..self.in_ch {
            let plane = &x.data[ci * x.n * hw..(ci + 1) * x.n * hw];
            for tap in 0..TAPS {
                let taps = &table[tap * out..(tap + 1) * out];
                for src in plane.chunks_exact(hw) {
                    cols.extend(taps.iter().map(|&i| src.get(i as usize).copied().unwrap_or_else(T::zero)));
                }
            }
        }
        (cols, ho, wo)
    }

    fn col2im(&self, dcols: &[T], n: usize, h: usize, w: usize) -> Act<T> {
        let (table, ho, wo) = self.gather_table(h, w);
        let out = ho * wo;
        let ncol = n * out;
        let mut dx = Act::zeros(self.in_ch, n, h, w);
        let hw = h * w;
        for ci in 0..self.in_ch {
            for tap in 0..TAPS {
                let taps = &table[tap * out..(tap + 1) * out];
                let row = &dcols[(ci * TAPS + tap) * ncol..][..ncol];
                for (s, src) in row.chunks_exact(out).enumerate() {
                    let dst = &mut dx.data[(ci * n + s) * hw..][..hw];
                    for (&g, &i) in src.iter().zip(taps) {
                        if let Some(d) = dst.get_mut(i as usize) {
                            *d = *d + g;
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward(&self, x: &Act<T>) -> Result<Act<T>> {
        if x.c != self.in_ch {
            return Err(Error::ShapeMismatch {
                expected: vec![self.in_ch],
                found: vec![x.c],
            });
        }
        let (cols, ho, wo) = self.im2col(x);
        let ncol = x.n * ho * wo;
        let mut out = Act::zeros(self.out_ch, x.n, ho, wo);
        let k = self.in_ch * TAPS;
        T::gemm(
            self.out_ch,
            k,
            ncol,
            T::one(),
            rows(&self.weight.data, k),
            rows(&cols, ncol),
            T::zero(),
            rows_mut(&mut out.data, ncol),
        );
        Ok(out)
    }

    /// Accumulates the weight gradient from the layer input `x` and output
    /// gradient `dy`; returns the input gradient when asked.
    pub fn backward(&mut self, x: &Act<T>, dy: &Act<T>, input_grad: bool) -> Option<Act<T>> {
        let (cols, _, _) = self.im2col(x);
        let ncol = dy.n * dy.h * dy.w;
        let k = self.in_ch * TAPS;
        T::gemm(
            self.out_ch,
            ncol,
            k,
            T::one(),
            rows(&dy.data, ncol),
            transposed(&cols, ncol),
            T::one(),
            rows_mut(&mut self.weight.grad, k),
        );
        if !input_grad {
            return None;
        }
        let mut dcols = cols;
        T::gemm(
            k,
            self.out_ch,
            ncol,
            T::one(),
            transposed(&self.weight.data, k),
            rows(&dy.data, ncol),
            T::zero(),
            rows_mut(&mut dcols, ncol),
        );
        Some(self.col2im(&dcols, x.n, x.h, x.w))
    }
}

/// Per-channel batch normalization with learned scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
}

/// Saved values of a batch-norm forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub train: bool,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        let mut gamma = Tensor::zeros(&[channels]);
        gamma.data.fill(T::one());
        Self {
            gamma,
            beta: Tensor::zeros(&[channels]),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    /// Train mode normalizes with batch statistics and updates the running
    /// ones; eval mode uses the running statistics.
    pub fn forward(&mut self, x: &Act<T>, train: bool) -> Result<(Act<T>, BnCache<T>)> {
        let c = self.channels();
        if x.c != c {
            return Err(Error::ShapeMismatch {
                expected: vec![c],
                found: vec![x.c],
            });
        }
        let m = x.n * x.h * x.w;
        if train && m == 0 {
            return Err(Error::Empty("batch-norm batch"));
        }
        let mut out = x.clone();
        let mut xhat = vec![T::zero(); x.data.len()];
        let mut inv_std = vec![T::zero(); c];
        let eps = T::of(self.eps);
        for ch in 0..c {
            let xs = &x.data[ch * m..(ch + 1) * m];
            let (mean, var) = if train {
                let mf = T::of(m as f64);
                let mean = xs.iter().fold(T::zero(), |a, &v| a + v) / mf;
                let var = xs.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / mf;
                let mom = T::of(self.momentum);
                let unbiased = if m > 1 { var * mf / T::of((m - 1) as f64) } else { var };
                self.running_mean[ch] = (T::one() - mom) * self.running_mean[ch] + mom * mean;
                self.running_var[ch] = (T::one() - mom) * self.running_var[ch] + mom * unbiased;
                (mean, var)
            } else {
                (self.running_mean[ch], self.running_var[ch])
            };
            let is = T::one() / (var + eps).sqrt();
            inv_std[ch] = is;
            let (g, b) = (self.gamma.data[ch], self.beta.data[ch]);
            // Same arithmetic as `forward_eval` so both paths agree bit for bit.
            let (scale, shift) = (g * is, b - mean * g * is);
            for i in 0..m {
                let h = (xs[i] - mean) * is;
                xhat[ch * m + i] = h;
                out.data[ch * m + i] = if train { g * h + b } else { xs[i] * scale + shift };
            }
        }
        Ok((out, BnCache { xhat, inv_std, train }))
    }

    /// Eval-mode output without touching any state.
    pub fn forward_eval(&self, x: &Act<T>) -> Result<Act<T>> {
        let c = self.channels();
        if x.c != c {
            return Err(Error::ShapeMismatch {
                expected: vec![c],
                found: vec![x.c],
            });
        }
        let m = x.n * x.h * x.w;
        let mut out = x.clone();
        let eps = T::of(self.eps);
        for ch in 0..c {
            let is = T::one() / (self.running_var[ch] + eps).sqrt();
            let g = self.gamma.data[ch];
            let (scale, shift) = (g * is, self.beta.data[ch] - self.running_mean[ch] * g * is);
            for v in &mut out.data[ch * m..(ch + 1) * m] {
                *v = *v * scale + shift;
            }
        }
        Ok(out)
    }

    pub fn backward(&mut self, cache: &BnCache<T>, dy: &Act<T>) -> Act<T> {
        let c = self.channels();
        let m = dy.n * dy.h * dy.w;
        let mut dx = dy.clone();
        let mf = T::of(m as f64);
        for ch in 0..c {
            let dys = &dy.data[ch * m..(ch + 1) * m];
            let xh = &cache.xhat[ch * m..(ch + 1) * m];
            let sum_dy = dys.iter().fold(T::zero(), |a, &v| a + v);
            let sum_dy_xh = dys.iter().zip(xh).fold(T::zero(), |a, (&d, &h)| a + d * h);
            self.gamma.grad[ch] = self.gamma.grad[ch] + sum_dy_xh;
            self.beta.grad[ch] = self.beta.grad[ch] + sum_dy;
            let g = self.gamma.data[ch];
            let is = cache.inv_std[ch];
            let out = &mut dx.data[ch * m..(ch + 1) * m];
            if cache.train {
                let k = g * is / mf;
                for i in 0..m {
                    out[i] = k * (mf * dys[i] - sum_dy - xh[i] * sum_dy_xh);
                }
            } else {
                for i in 0..m {
                    out[i] = g * is * dys[i];
                }
            }
        }
        dx
    }
}

/// Rectified linear unit; the gradient at exactly zero is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Relu;

impl Relu {
    pub fn forward<T: Scalar>(x: &Act<T>) -> Act<T> {
        let mut out = x.clone();
        for v in &mut out.data {
            if !(*v > T::zero()) {
                *v = T::zero();
            }
        }
        out
    }

    /// Uses the forward output `y` to mask the gradient.
    pub fn backward<T: Scalar>(y: &Act<T>, dy: &Act<T>) -> Act<T> {
        let mut dx = dy.clone();
        for (d, &v) in dx.data.iter_mut().zip(&y.data) {
            if !(v > T::zero()) {
                *d = T::zero();
            }
        }
        dx
    }
}

/// Dense layer on `[N, F]` rows: `y = x W^T + b`, weight shape `[out, F]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    /// Uniform weights scaled by fan-in, zero bias.
    pub fn new<R: Rng + ?Sized>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        let mut weight = Tensor::zeros(&[out_features, in_features]);
        uniform_init(&mut weight, in_features, rng);
        Self {
            weight,
            bias: Tensor::zeros(&[out_features]),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &[T], n: usize) -> Result<Vec<T>> {
        let (f, o) = (self.in_features(), self.out_features());
        if x.len() != n * f {
            return Err(Error::ShapeMismatch {
                expected: vec![n, f],
                found: vec![x.len()],
            });
        }
        let mut y = vec![T::zero(); n * o];
        for row in y.chunks_mut(o) {
            row.copy_from_slice(&self.bias.data);
        }
        T::gemm(n, f, o, T::one(), rows(x, f), transposed(&self.weight.data, f), T::one(), rows_mut(&mut y, o));
        Ok(y)
    }

    pub fn backward(&mut self, x: &[T], dy: &[T], n: usize) -> Vec<T> {
        let (f, o) = (self.in_features(), self.out_features());
        T::gemm(
            o,
            n,
            f,
            T::one(),
            Strided { data: dy, rs: 1, cs: o },
            rows(x, f),
            T::one(),
            StridedMut { data: &mut self.weight.grad, rs: f, cs: 1 },
        );
        for row in dy.chunks(o) {
            for (g, &d) in self.bias.grad.iter_mut().zip(row) {
                *g = *g + d;
            }
        }
        let mut dx = vec![T::zero(); n * f];
        T::gemm(n, o, f, T::one(), rows(dy, o), rows(&self.weight.data, f), T::zero(), rows_mut(&mut dx, f));
        dx
    }
}
