//! Minimal f64 layers with explicit reverse-mode passes.
//!
//! Activations are stored channel-major (`c x h x w`). Every forward call
//! returns the cache its backward pass needs; weight gradients are
//! accumulated into a caller-owned buffer of the same shape as the layer.

use rand::Rng;

/// Channel-major activation volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w, data: vec![0.0; c * h * w] }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), c * h * w, "tensor data length");
        Self { c, h, w, data }
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }
}

/// `C = A·B + beta·C` with explicit row/column strides.
///
/// Slices are bounds-checked against the strides before the unsafe call.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    assert!(c.len() > last(m, n, rsc, csc));
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                c[i * rsc + j * csc] *= beta;
            }
        }
        return;
    }
    assert!(a.len() > last(m, k, rsa, csa));
    assert!(b.len() > last(k, n, rsb, csb));
    // SAFETY: every index touched by dgemm lies within the lengths asserted above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Glorot/Xavier uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn uniform_vec<R: Rng + ?Sized>(rng: &mut R, len: usize, bound: f64) -> Vec<f64> {
    (0..len).map(|_| bound * (2.0 * rng.gen::<f64>() - 1.0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// `out x (in·k·k)`, row-major over `(in, ky, kx)`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

pub struct ConvCache {
    cols: Vec<f64>,
    in_shape: (usize, usize, usize),
    out_hw: (usize, usize),
}

impl Conv2d {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            weight: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let mut conv = Self::zeros(in_channels, out_channels, kernel, stride, pad);
        let kk = kernel * kernel;
        conv.weight = uniform_vec(rng, conv.weight.len(), glorot_bound(in_channels * kk, out_channels * kk));
        conv
    }

    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let span = |n: usize| (n + 2 * self.pad).checked_sub(self.kernel).map_or(0, |v| v / self.stride + 1);
        (span(h), span(w))
    }

    fn im2col(&self, x: &Tensor, oh: usize, ow: usize) -> Vec<f64> {
        let p = oh * ow;
        let mut cols = vec![0.0; self.patch_len() * p];
        let k = self.kernel;
        for ci in 0..self.in_channels {
            let plane = &x.data[ci * x.plane()..(ci + 1) * x.plane()];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((ci * k + ky) * k + kx) * p..][..p];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= x.h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * x.w..][..x.w];
                        let dst = &mut row[oy * ow..][..ow];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < x.w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &[f64], shape: (usize, usize, usize), oh: usize, ow: usize) -> Tensor {
        let (c, h, w) = shape;
        let mut dx = Tensor::zeros(c, h, w);
        let p = oh * ow;
        let k = self.kernel;
        for ci in 0..c {
            let plane = &mut dx.data[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &dcols[((ci * k + ky) * k + kx) * p..][..p];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..][..w];
                        for (ox, g) in row[oy * ow..][..ow].iter().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += g;
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward(&self, x: &Tensor) -> (Tensor, ConvCache) {
        assert_eq!(x.c, self.in_channels, "conv input channels");
        let (oh, ow) = self.output_hw(x.h, x.w);
        let p = oh * ow;
        let cols = self.im2col(x, oh, ow);
        let mut out = Tensor::zeros(self.out_channels, oh, ow);
        for (o, b) in self.bias.iter().enumerate() {
            out.data[o * p..(o + 1) * p].fill(*b);
        }
        let kl = self.patch_len();
        gemm(self.out_channels, kl, p, &self.weight, (kl, 1), &cols, (p, 1), 1.0, &mut out.data, (p, 1));
        (out, ConvCache { cols, in_shape: x.shape(), out_hw: (oh, ow) })
    }

    /// Accumulates weight/bias gradients into `grad` and returns the input
    /// gradient when `need_input` is set.
    pub fn backward(&self, cache: &ConvCache, dout: &Tensor, grad: &mut Conv2d, need_input: bool) -> Option<Tensor> {
        let (oh, ow) = cache.out_hw;
        let p = oh * ow;
        let kl = self.patch_len();
        for o in 0..self.out_channels {
            grad.bias[o] += dout.data[o * p..(o + 1) * p].iter().sum::<f64>();
        }
        // dW (out x kl) += dout (out x p) · colsᵀ (p x kl)
        gemm(self.out_channels, p, kl, &dout.data, (p, 1), &cache.cols, (1, p), 1.0, &mut grad.weight, (kl, 1));
        if !need_input {
            return None;
        }
        // dcols (kl x p) = Wᵀ (kl x out) · dout (out x p)
        let mut dcols = vec![0.0; kl * p];
        gemm(kl, self.out_channels, p, &self.weight, (1, kl), &dout.data, (p, 1), 0.0, &mut dcols, (p, 1));
        Some(self.col2im(&dcols, cache.in_shape, oh, ow))
    }
}

/// In-place ReLU; the output itself serves as the backward mask.
pub fn relu_inplace(x: &mut Tensor) {
    x.data.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Zeroes gradient entries whose forward output was not positive.
pub fn relu_backward(output: &[f64], grad: &mut [f64]) {
    for (g, y) in grad.iter_mut().zip(output) {
        if *y <= 0.0 {
            *g = 0.0;
        }
    }
}

/// 2x2 stride-2 max pooling. Ties resolve to the first maximum in row-major
/// window order.
pub struct MaxPoolCache {
    argmax: Vec<usize>,
    in_shape: (usize, usize, usize),
}

pub fn maxpool2_forward(x: &Tensor) -> (Tensor, MaxPoolCache) {
    let (oh, ow) = (x.h / 2, x.w / 2);
    let mut out = Tensor::zeros(x.c, oh, ow);
    let mut argmax = vec![0; x.c * oh * ow];
    for c in 0..x.c {
        let base = c * x.plane();
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = base + 2 * oy * x.w + 2 * ox;
                let mut best = x.data[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * x.w + 2 * ox + dx;
                    if x.data[idx] > best {
                        best = x.data[idx];
                        best_idx = idx;
                    }
                }
                let o = (c * oh + oy) * ow + ox;
                out.data[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    (out, MaxPoolCache { argmax, in_shape: x.shape() })
}

pub fn maxpool2_backward(cache: &MaxPoolCache, dout: &Tensor) -> Tensor {
    let (c, h, w) = cache.in_shape;
    let mut dx = Tensor::zeros(c, h, w);
    for (g, &idx) in dout.data.iter().zip(&cache.argmax) {
        dx.data[idx] += g;
    }
    dx
}

/// Fully connected layer `y = W·x + b`, `W` stored `out x in` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weight: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let mut l = Self::zeros(inputs, outputs);
        l.weight = uniform_vec(rng, l.weight.len(), glorot_bound(inputs, outputs));
        l
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.inputs, "linear input length");
        self.weight
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear, need_input: bool) -> Option<Vec<f64>> {
        for (o, g) in dy.iter().enumerate() {
            grad.bias[o] += g;
            if *g != 0.0 {
                for (gw, v) in grad.weight[o * self.inputs..(o + 1) * self.inputs].iter_mut().zip(x) {
                    *gw += g * v;
                }
            }
        }
        if !need_input {
            return None;
        }
        let mut dx = vec![0.0; self.inputs];
        for (row, g) in self.weight.chunks_exact(self.inputs).zip(dy) {
            if *g != 0.0 {
                for (d, w) in dx.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
        Some(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop convolution used as an oracle for the im2col path.
    fn conv_direct(conv: &Conv2d, x: &Tensor) -> Tensor {
        let (oh, ow) = conv.output_hw(x.h, x.w);
        let k = conv.kernel;
        let mut out = Tensor::zeros(conv.out_channels, oh, ow);
        for o in 0..conv.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = conv.bias[o];
                    for ci in 0..conv.in_channels {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * conv.stride + ky) as isize - conv.pad as isize;
                                let ix = (ox * conv.stride + kx) as isize - conv.pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < x.h && (ix as usize) < x.w {
                                    acc += conv.weight[((o * conv.in_channels + ci) * k + ky) * k + kx]
                                        * x.data[(ci * x.h + iy as usize) * x.w + ix as usize];
                                }
                            }
                        }
                    }
                    out.data[(o * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    fn random_tensor(c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn conv_matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(cin, cout, k, stride, pad, h, w) in
            &[(3, 4, 3, 1, 1, 6, 5), (2, 3, 7, 2, 3, 8, 8), (4, 2, 5, 1, 2, 4, 4), (1, 1, 3, 1, 0, 5, 5)]
        {
            let mut conv = Conv2d::glorot(cin, cout, k, stride, pad, &mut rng);
            conv.bias = (0..cout).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let x = random_tensor(cin, h, w, &mut rng);
            let (fast, _) = conv.forward(&x);
            let slow = conv_direct(&conv, &x);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data.iter().zip(&slow.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn impulse_response_is_flipped_kernel() {
        let mut conv = Conv2d::zeros(1, 1, 3, 1, 1);
        conv.weight = (1..=9).map(|v| v as f64).collect();
        let mut x = Tensor::zeros(1, 5, 5);
        x.data[2 * 5 + 2] = 1.0;
        let (y, _) = conv.forward(&x);
        // output(oy, ox) = sum w[ky,kx]·x[oy+ky-1, ox+kx-1]; impulse at (2,2)
        for ky in 0..3 {
            for kx in 0..3 {
                let (oy, ox) = (2 + 1 - ky, 2 + 1 - kx);
                assert_eq!(y.data[oy * 5 + ox], conv.weight[ky * 3 + kx]);
            }
        }
    }

    fn scalar_loss(y: &Tensor, probe: &[f64]) -> f64 {
        y.data.iter().zip(probe).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let conv = Conv2d::glorot(2, 3, 5, 2, 2, &mut rng);
        let x = random_tensor(2, 7, 6, &mut rng);
        let (y, cache) = conv.forward(&x);
        let probe: Vec<f64> = (0..y.data.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dout = Tensor::from_vec(y.c, y.h, y.w, probe.clone());
        let mut grad = Conv2d::zeros(2, 3, 5, 2, 2);
        let dx = conv.backward(&cache, &dout, &mut grad, true).unwrap();
        let eps = 1e-6;
        for idx in (0..conv.weight.len()).step_by(7) {
            let mut plus = conv.clone();
            plus.weight[idx] += eps;
            let mut minus = conv.clone();
            minus.weight[idx] -= eps;
            let num = (scalar_loss(&plus.forward(&x).0, &probe) - scalar_loss(&minus.forward(&x).0, &probe)) / (2.0 * eps);
            assert!((num - grad.weight[idx]).abs() < 1e-7, "{num} vs {}", grad.weight[idx]);
        }
        for idx in 0..x.data.len() {
            let mut xp = x.clone();
            xp.data[idx] += eps;
            let mut xm = x.clone();
            xm.data[idx] -= eps;
            let num = (scalar_loss(&conv.forward(&xp).0, &probe) - scalar_loss(&conv.forward(&xm).0, &probe)) / (2.0 * eps);
            assert!((num - dx.data[idx]).abs() < 1e-7);
        }
    }

    #[test]
    fn maxpool_ties_pick_first() {
        let x = Tensor::from_vec(1, 2, 2, vec![1.0, 1.0, 1.0, 1.0]);
        let (y, cache) = maxpool2_forward(&x);
        assert_eq!(y.data, vec![1.0]);
        let dx = maxpool2_backward(&cache, &Tensor::from_vec(1, 1, 1, vec![2.0]));
        assert_eq!(dx.data, vec![2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn linear_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let l = Linear::glorot(5, 3, &mut rng);
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dy = vec![0.5, -1.0, 2.0];
        let mut g = Linear::zeros(5, 3);
        let dx = l.backward(&x, &dy, &mut g, true).unwrap();
        for i in 0..5 {
            let expect: f64 = (0..3).map(|o| l.weight[o * 5 + i] * dy[o]).sum();
            assert!((dx[i] - expect).abs() < 1e-15);
        }
        assert_eq!(g.bias, dy);
        assert_eq!(g.weight[2 * 5 + 4], dy[2] * x[4]);
    }
}
