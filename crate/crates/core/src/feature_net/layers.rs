//! Forward and backward kernels for the network's building blocks. Tensors
//! are single-sample, planar `C x H x W`, row-major.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::scalar::Scalar;

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: (usize, usize),
    /// `out x (in * kh * kw)`, row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Output extent of a convolution along one axis; `None` if non-positive.
pub fn conv_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: (usize, usize), stride: usize, padding: (usize, usize)) -> Self {
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight: vec![T::zero(); out_channels * in_channels * kernel.0 * kernel.1],
            bias: vec![T::zero(); out_channels],
        }
    }

    /// He-normal weights, zero bias, with the standard deviation multiplied
    /// by `gain`.
    pub fn init_he(&mut self, rng: &mut impl Rng, gain: f64) {
        let fan_in = self.fan_in() as f64;
        let normal = Normal::new(0.0, gain * (2.0 / fan_in).sqrt()).expect("finite std");
        for w in &mut self.weight {
            *w = T::from_f64(normal.sample(rng));
        }
        self.bias.iter_mut().for_each(|b| *b = T::zero());
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel.0 * self.kernel.1
    }

    pub fn num_parameters(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn output_dims(&self, input: Dims) -> Option<Dims> {
        Some(Dims {
            c: self.out_channels,
            h: conv_extent(input.h, self.kernel.0, self.stride, self.padding.0)?,
            w: conv_extent(input.w, self.kernel.1, self.stride, self.padding.1)?,
        })
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == (1, 1) && self.stride == 1 && self.padding == (0, 0)
    }

    /// Unfolds `input` into a `(in * kh * kw) x (ho * wo)` patch matrix.
    fn im2col(&self, input: &[T], din: Dims, dout: Dims) -> Vec<T> {
        let (kh, kw) = self.kernel;
        let (ph, pw) = self.padding;
        let n = dout.plane();
        let mut col = vec![T::zero(); self.fan_in() * n];
        for c in 0..din.c {
            let plane = &input[c * din.plane()..(c + 1) * din.plane()];
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = ((c * kh + ki) * kw + kj) * n;
                    for oy in 0..dout.h {
                        let iy = (oy * self.stride + ki) as isize - ph as isize;
                        if iy < 0 || iy >= din.h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * din.w..(iy as usize + 1) * din.w];
                        let dst = &mut col[row + oy * dout.w..row + (oy + 1) * dout.w];
                        if self.stride == 1 && pw == 0 {
                            dst.copy_from_slice(&src[kj..kj + dout.w]);
                        } else {
                            for (ox, d) in dst.iter_mut().enumerate() {
                                let ix = (ox * self.stride + kj) as isize - pw as isize;
                                if ix >= 0 && ix < din.w as isize {
                                    *d = src[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        col
    }

    /// Adjoint of [`Conv2d::im2col`]: scatters patch gradients back.
    fn col2im(&self, col: &[T], din: Dims, dout: Dims) -> Vec<T> {
        let (kh, kw) = self.kernel;
        let (ph, pw) = self.padding;
        let n = dout.plane();
        let mut out = vec![T::zero(); din.len()];
        for c in 0..din.c {
            let plane = &mut out[c * din.plane()..(c + 1) * din.plane()];
            for ki in 0..kh {
                for kj in 0..kw {
                    let row = ((c * kh + ki) * kw + kj) * n;
                    for oy in 0..dout.h {
                        let iy = (oy * self.stride + ki) as isize - ph as isize;
                        if iy < 0 || iy >= din.h as isize {
                            continue;
                        }
                        let src = &col[row + oy * dout.w..row + (oy + 1) * dout.w];
                        let dst = &mut plane[iy as usize * din.w..(iy as usize + 1) * din.w];
                        for (ox, &g) in src.iter().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - pw as isize;
                            if ix >= 0 && ix < din.w as isize {
                                dst[ix as usize] += g;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn forward(&self, input: &[T], din: Dims) -> (Vec<T>, Dims) {
        let dout = self.output_dims(din).expect("validated at build time");
        let n = dout.plane();
        let k = self.fan_in();
        let mut out = vec![T::zero(); dout.len()];
        for (oc, row) in out.chunks_exact_mut(n).enumerate() {
            row.iter_mut().for_each(|v| *v = self.bias[oc]);
        }
        let owned;
        let col: &[T] = if self.is_pointwise() {
            input
        } else {
            owned = self.im2col(input, din, dout);
            &owned
        };
        T::gemm(
            self.out_channels,
            k,
            n,
            T::one(),
            &self.weight,
            k as isize,
            1,
            col,
            n as isize,
            1,
            T::one(),
            &mut out,
            n as isize,
            1,
        );
        (out, dout)
    }

    /// Accumulates weight and bias gradients into `dw`/`db` and returns the
    /// input gradient when `need_input_grad`.
    pub fn backward(
        &self,
        input: &[T],
        din: Dims,
        grad_out: &[T],
        dw: &mut [T],
        db: &mut [T],
        need_input_grad: bool,
    ) -> Option<Vec<T>> {
        let dout = self.output_dims(din).expect("validated at build time");
        let n = dout.plane();
        let k = self.fan_in();
        for (oc, row) in grad_out.chunks_exact(n).enumerate() {
            db[oc] += row.iter().copied().sum::<T>();
        }
        let owned;
        let col: &[T] = if self.is_pointwise() {
            input
        } else {
            owned = self.im2col(input, din, dout);
            &owned
        };
        // dW += dOut * col^T
        T::gemm(
            self.out_channels,
            n,
            k,
            T::one(),
            grad_out,
            n as isize,
            1,
            col,
            1,
            n as isize,
            T::one(),
            dw,
            k as isize,
            1,
        );
        if !need_input_grad {
            return None;
        }
        // dCol = W^T * dOut
        let mut dcol = vec![T::zero(); k * n];
        T::gemm(
            k,
            self.out_channels,
            n,
            T::one(),
            &self.weight,
            1,
            k as isize,
            grad_out,
            n as isize,
            1,
            T::zero(),
            &mut dcol,
            n as isize,
            1,
        );
        if self.is_pointwise() {
            Some(dcol)
        } else {
            Some(self.col2im(&dcol, din, dout))
        }
    }
}

pub fn relu_forward<T: Scalar>(x: &mut [T]) {
    x.iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = T::zero()
        }
    });
}

/// `out` is the ReLU output; zero outputs block the gradient.
pub fn relu_backward<T: Scalar>(out: &[T], grad: &mut [T]) {
    for (g, &y) in grad.iter_mut().zip(out) {
        if y <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Per-channel normalization over the spatial plane, no affine parameters.
/// Returns the per-channel inverse standard deviations for the backward pass.
pub fn instance_norm_forward<T: Scalar>(x: &mut [T], dims: Dims) -> Vec<T> {
    let n = dims.plane();
    let nf = T::from_f64(n as f64);
    let eps = T::from_f64(INSTANCE_NORM_EPS);
    x.chunks_exact_mut(n)
        .map(|plane| {
            let mean = plane.iter().copied().sum::<T>() / nf;
            let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let inv = T::one() / (var + eps).sqrt();
            plane.iter_mut().for_each(|v| *v = (*v - mean) * inv);
            inv
        })
        .collect()
}

/// `out` is the normalized output, `grad` is overwritten with the input
/// gradient.
pub fn instance_norm_backward<T: Scalar>(out: &[T], inv_std: &[T], dims: Dims, grad: &mut [T]) {
    let n = dims.plane();
    let nf = T::from_f64(n as f64);
    for ((g, y), &inv) in grad.chunks_exact_mut(n).zip(out.chunks_exact(n)).zip(inv_std) {
        let mean_g = g.iter().copied().sum::<T>() / nf;
        let mean_gy = g.iter().zip(y).map(|(&a, &b)| a * b).sum::<T>() / nf;
        for (gi, &yi) in g.iter_mut().zip(y) {
            *gi = inv * (*gi - mean_g - yi * mean_gy);
        }
    }
}

pub fn global_avg_pool<T: Scalar>(x: &[T], dims: Dims) -> Vec<T> {
    let nf = T::from_f64(dims.plane() as f64);
    x.chunks_exact(dims.plane())
        .map(|plane| plane.iter().copied().sum::<T>() / nf)
        .collect()
}

pub fn global_avg_pool_backward<T: Scalar>(grad: &[T], dims: Dims) -> Vec<T> {
    let nf = T::from_f64(dims.plane() as f64);
    grad.iter()
        .flat_map(|&g| std::iter::repeat_n(g / nf, dims.plane()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct 7-loop convolution used as the reference.
    fn naive_conv(conv: &Conv2d<f64>, x: &[f64], din: Dims) -> Vec<f64> {
        let dout = conv.output_dims(din).unwrap();
        let (kh, kw) = conv.kernel;
        let mut out = vec![0.0; dout.len()];
        for oc in 0..dout.c {
            for oy in 0..dout.h {
                for ox in 0..dout.w {
                    let mut acc = conv.bias[oc];
                    for ic in 0..din.c {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let iy = (oy * conv.stride + ki) as isize - conv.padding.0 as isize;
                                let ix = (ox * conv.stride + kj) as isize - conv.padding.1 as isize;
                                if iy < 0 || ix < 0 || iy >= din.h as isize || ix >= din.w as isize {
                                    continue;
                                }
                                let wv = conv.weight[((oc * din.c + ic) * kh + ki) * kw + kj];
                                acc += wv * x[(ic * din.h + iy as usize) * din.w + ix as usize];
                            }
                        }
                    }
                    out[(oc * dout.h + oy) * dout.w + ox] = acc;
                }
            }
        }
        out
    }

    fn random_conv(rng: &mut ChaCha8Rng, cin: usize, cout: usize, k: (usize, usize), s: usize, p: (usize, usize)) -> Conv2d<f64> {
        let mut c = Conv2d::zeros(cin, cout, k, s, p);
        c.init_he(rng, 1.0);
        for b in &mut c.bias {
            *b = rng.random_range(-1.0..1.0);
        }
        c
    }

    #[test]
    fn conv_extents() {
        assert_eq!(conv_extent(224, 3, 1, 0), Some(222));
        assert_eq!(conv_extent(220, 3, 2, 1), Some(110));
        assert_eq!(conv_extent(2, 3, 1, 0), None);
        assert_eq!(conv_extent(1, 3, 2, 1), Some(1));
    }

    #[test]
    fn single_conv_parameter_count() {
        let c = Conv2d::<f32>::zeros(1, 1, (3, 3), 1, (0, 0));
        assert_eq!(c.num_parameters(), 10);
    }

    #[test]
    fn im2col_conv_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(k, s, p) in &[((3, 3), 1, (0, 0)), ((3, 3), 2, (1, 1)), ((3, 1), 1, (0, 0)), ((1, 3), 1, (0, 0)), ((1, 1), 1, (0, 0))] {
            let conv = random_conv(&mut rng, 3, 4, k, s, p);
            let din = Dims { c: 3, h: 9, w: 8 };
            let x: Vec<f64> = (0..din.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (y, _) = conv.forward(&x, din);
            let r = naive_conv(&conv, &x, din);
            for (a, b) in y.iter().zip(&r) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(k, s, p) in &[((3, 3), 1, (0, 0)), ((3, 3), 2, (1, 1)), ((1, 1), 1, (0, 0))] {
            let conv = random_conv(&mut rng, 2, 3, k, s, p);
            let din = Dims { c: 2, h: 7, w: 6 };
            let x: Vec<f64> = (0..din.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dout = conv.output_dims(din).unwrap();
            let g: Vec<f64> = (0..dout.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let loss = |c: &Conv2d<f64>, x: &[f64]| -> f64 {
                c.forward(x, din).0.iter().zip(&g).map(|(a, b)| a * b).sum()
            };
            let mut dw = vec![0.0; conv.weight.len()];
            let mut db = vec![0.0; conv.bias.len()];
            let dx = conv.backward(&x, din, &g, &mut dw, &mut db, true).unwrap();
            let eps = 1e-6;
            for i in (0..x.len()).step_by(5) {
                let mut xp = x.clone();
                xp[i] += eps;
                let mut xm = x.clone();
                xm[i] -= eps;
                let fd = (loss(&conv, &xp) - loss(&conv, &xm)) / (2.0 * eps);
                assert!((fd - dx[i]).abs() < 1e-7, "dx[{i}] {fd} vs {}", dx[i]);
            }
            for i in (0..conv.weight.len()).step_by(3) {
                let mut cp = conv.clone();
                cp.weight[i] += eps;
                let mut cm = conv.clone();
                cm.weight[i] -= eps;
                let fd = (loss(&cp, &x) - loss(&cm, &x)) / (2.0 * eps);
                assert!((fd - dw[i]).abs() < 1e-7);
            }
            for i in 0..conv.bias.len() {
                let mut cp = conv.clone();
                cp.bias[i] += eps;
                let mut cm = conv.clone();
                cm.bias[i] -= eps;
                let fd = (loss(&cp, &x) - loss(&cm, &x)) / (2.0 * eps);
                assert!((fd - db[i]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn instance_norm_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = Dims { c: 2, h: 3, w: 4 };
        let x: Vec<f64> = (0..dims.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g: Vec<f64> = (0..dims.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |x: &[f64]| -> f64 {
            let mut y = x.to_vec();
            instance_norm_forward(&mut y, dims);
            y.iter().zip(&g).map(|(a, b)| a * b).sum()
        };
        let mut y = x.clone();
        let inv = instance_norm_forward(&mut y, dims);
        let mut dx = g.clone();
        instance_norm_backward(&y, &inv, dims, &mut dx);
        for i in 0..x.len() {
            let eps = 1e-6;
            let mut xp = x.clone();
            xp[i] += eps;
            let mut xm = x.clone();
            xm[i] -= eps;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * eps);
            assert!((fd - dx[i]).abs() < 1e-7);
        }
        // normalized planes have zero mean and unit variance (up to eps)
        for plane in y.chunks_exact(dims.plane()) {
            let m: f64 = plane.iter().sum::<f64>() / 12.0;
            assert!(m.abs() < 1e-12);
        }
    }
}
