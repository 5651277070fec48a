//! Stride-1 2-D convolution with zero padding.
//!
//! Kernels walk the receptive field as shifted row slices so the innermost
//! loop is a contiguous multiply-add the compiler can vectorize. Work is split
//! over output planes; within a plane the reduction order is always
//! (input channel, ky, kx), independent of thread count.

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Shape, Tensor};

/// Kernel `(out, in, k, k)` and bias `(1, out, 1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights {
    pub kernel: Tensor,
    pub bias: Tensor,
}

impl ConvWeights {
    pub fn new(kernel: Tensor, bias: Tensor) -> Result<Self> {
        check_weights(&kernel, &bias)?;
        Ok(ConvWeights { kernel, bias })
    }

    pub fn zeros(out_ch: usize, in_ch: usize, k: usize) -> Self {
        ConvWeights {
            kernel: Tensor::zeros(Shape::new(out_ch, in_ch, k, k)),
            bias: Tensor::zeros(Shape::new(1, out_ch, 1, 1)),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape().n
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape().c
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel.shape().h
    }

    /// Same-size padding for this kernel.
    pub fn same_padding(&self) -> usize {
        self.kernel_size() / 2
    }
}

fn check_weights(kernel: &Tensor, bias: &Tensor) -> Result<()> {
    let k = kernel.shape();
    if k.h != k.w || k.h == 0 {
        return Err(Error::shape("conv2d", "square kernel", k));
    }
    if bias.len() != k.n {
        return Err(Error::shape(
            "conv2d",
            format!("{} bias values", k.n),
            format!("{} bias values", bias.len()),
        ));
    }
    Ok(())
}

struct Geometry {
    input: Shape,
    out_ch: usize,
    k: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn new(x: Shape, kernel: Shape, pad: usize) -> Result<Self> {
        if x.c != kernel.c {
            return Err(Error::Channels {
                op: "conv2d",
                expected: kernel.c,
                actual: x.c,
            });
        }
        let k = kernel.h;
        if x.h + 2 * pad < k || x.w + 2 * pad < k {
            return Err(Error::shape(
                "conv2d",
                format!("spatial size of at least {k} after padding {pad}"),
                x,
            ));
        }
        Ok(Geometry {
            input: x,
            out_ch: kernel.n,
            k,
            pad,
            oh: x.h + 2 * pad + 1 - k,
            ow: x.w + 2 * pad + 1 - k,
        })
    }

    fn output(&self) -> Shape {
        Shape::new(self.input.n, self.out_ch, self.oh, self.ow)
    }

    /// Output rows `oy` that read input row `oy + ky - pad`.
    fn rows(&self, ky: usize) -> std::ops::Range<usize> {
        let lo = self.pad.saturating_sub(ky);
        let hi = (self.input.h + self.pad).saturating_sub(ky).min(self.oh);
        lo..hi.max(lo)
    }

    /// Output columns `ox` that read input column `ox + kx - pad`.
    fn cols(&self, kx: usize) -> std::ops::Range<usize> {
        let lo = self.pad.saturating_sub(kx);
        let hi = (self.input.w + self.pad).saturating_sub(kx).min(self.ow);
        lo..hi.max(lo)
    }
}

/// Output `(N, out, H + 2p - k + 1, W + 2p - k + 1)`.
pub fn conv2d(x: &Tensor, w: &ConvWeights, pad: usize) -> Result<Tensor> {
    conv2d_raw(x, &w.kernel, &w.bias, pad)
}

pub fn conv2d_raw(x: &Tensor, kernel: &Tensor, bias: &Tensor, pad: usize) -> Result<Tensor> {
    check_weights(kernel, bias)?;
    let g = Geometry::new(x.shape(), kernel.shape(), pad)?;
    let out_shape = g.output();
    let mut out = Tensor::zeros(out_shape);
    let (k, cin, iw, ow) = (g.k, g.input.c, g.input.w, g.ow);
    let in_plane = g.input.plane();
    let xd = x.data();
    let kd = kernel.data();
    let bd = bias.data();

    par::for_each_chunk(out.data_mut(), out_shape.plane(), |idx, plane| {
        let n = idx / g.out_ch;
        let co = idx % g.out_ch;
        plane.fill(bd[co]);
        for ci in 0..cin {
            let src = &xd[(n * cin + ci) * in_plane..(n * cin + ci + 1) * in_plane];
            let wk = &kd[(co * cin + ci) * k * k..(co * cin + ci + 1) * k * k];
            for ky in 0..k {
                let rows = g.rows(ky);
                for kx in 0..k {
                    let wv = wk[ky * k + kx];
                    let cols = g.cols(kx);
                    if cols.is_empty() {
                        continue;
                    }
                    let shift = kx as isize - pad as isize;
                    for oy in rows.clone() {
                        let iy = oy + ky - pad;
                        let dst = &mut plane[oy * ow + cols.start..oy * ow + cols.end];
                        let s0 = (iy * iw) as isize + cols.start as isize + shift;
                        let s = &src[s0 as usize..s0 as usize + cols.len()];
                        for (d, &v) in dst.iter_mut().zip(s) {
                            *d += wv * v;
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Gradient with respect to the input.
pub fn conv2d_backward_input(
    grad_out: &Tensor,
    input_shape: Shape,
    kernel: &Tensor,
    pad: usize,
) -> Result<Tensor> {
    let g = Geometry::new(input_shape, kernel.shape(), pad)?;
    if grad_out.shape() != g.output() {
        return Err(Error::shape(
            "conv2d backward",
            g.output(),
            grad_out.shape(),
        ));
    }
    let mut gx = Tensor::zeros(input_shape);
    let (k, cin, iw, ow, cout) = (g.k, g.input.c, g.input.w, g.ow, g.out_ch);
    let out_plane = g.oh * g.ow;
    let gd = grad_out.data();
    let kd = kernel.data();

    par::for_each_chunk(gx.data_mut(), input_shape.plane(), |idx, plane| {
        let n = idx / cin;
        let ci = idx % cin;
        for co in 0..cout {
            let gsrc = &gd[(n * cout + co) * out_plane..(n * cout + co + 1) * out_plane];
            let wk = &kd[(co * cin + ci) * k * k..(co * cin + ci + 1) * k * k];
            for ky in 0..k {
                let rows = g.rows(ky);
                for kx in 0..k {
                    let wv = wk[ky * k + kx];
                    let cols = g.cols(kx);
                    if cols.is_empty() {
                        continue;
                    }
                    let shift = kx as isize - pad as isize;
                    for oy in rows.clone() {
                        let iy = oy + ky - pad;
                        let s = &gsrc[oy * ow + cols.start..oy * ow + cols.end];
                        let d0 = ((iy * iw) as isize + cols.start as isize + shift) as usize;
                        let dst = &mut plane[d0..d0 + cols.len()];
                        for (d, &v) in dst.iter_mut().zip(s) {
                            *d += wv * v;
                        }
                    }
                }
            }
        }
    });
    Ok(gx)
}

/// Gradients with respect to kernel and bias.
pub fn conv2d_backward_weights(
    grad_out: &Tensor,
    x: &Tensor,
    kernel_shape: Shape,
    pad: usize,
) -> Result<(Tensor, Tensor)> {
    let g = Geometry::new(x.shape(), kernel_shape, pad)?;
    if grad_out.shape() != g.output() {
        return Err(Error::shape(
            "conv2d backward",
            g.output(),
            grad_out.shape(),
        ));
    }
    let (k, cin, iw, ow, cout, batch) = (g.k, g.input.c, g.input.w, g.ow, g.out_ch, g.input.n);
    let out_plane = g.oh * g.ow;
    let in_plane = g.input.plane();
    let gd = grad_out.data();
    let xd = x.data();

    let mut gk = Tensor::zeros(kernel_shape);
    par::for_each_chunk(gk.data_mut(), cin * k * k, |co, wgrad| {
        let mut acc = vec![0.0f64; cin * k * k];
        for n in 0..batch {
            let gsrc = &gd[(n * cout + co) * out_plane..(n * cout + co + 1) * out_plane];
            for ci in 0..cin {
                let src = &xd[(n * cin + ci) * in_plane..(n * cin + ci + 1) * in_plane];
                for ky in 0..k {
                    let rows = g.rows(ky);
                    for kx in 0..k {
                        let cols = g.cols(kx);
                        if cols.is_empty() {
                            continue;
                        }
                        let shift = kx as isize - pad as isize;
                        let mut sum = 0.0f64;
                        for oy in rows.clone() {
                            let iy = oy + ky - pad;
                            let gs = &gsrc[oy * ow + cols.start..oy * ow + cols.end];
                            let s0 = ((iy * iw) as isize + cols.start as isize + shift) as usize;
                            let xs = &src[s0..s0 + cols.len()];
                            let dot: f32 = gs.iter().zip(xs).map(|(a, b)| a * b).sum();
                            sum += dot as f64;
                        }
                        acc[(ci * k + ky) * k + kx] += sum;
                    }
                }
            }
        }
        for (d, a) in wgrad.iter_mut().zip(acc) {
            *d = a as f32;
        }
    });

    let mut gb = Tensor::zeros(Shape::new(1, cout, 1, 1));
    for (co, b) in gb.data_mut().iter_mut().enumerate() {
        let mut sum = 0.0f64;
        for n in 0..batch {
            let gsrc = &gd[(n * cout + co) * out_plane..(n * cout + co + 1) * out_plane];
            sum += gsrc.iter().map(|&v| v as f64).sum::<f64>();
        }
        *b = sum as f32;
    }
    Ok((gk, gb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop convolution with explicit zero padding.
    fn oracle(x: &Tensor, w: &ConvWeights, pad: usize) -> Tensor {
        let s = x.shape();
        let (co_n, k) = (w.out_channels(), w.kernel_size());
        let oh = s.h + 2 * pad + 1 - k;
        let ow = s.w + 2 * pad + 1 - k;
        Tensor::from_fn(Shape::new(s.n, co_n, oh, ow), |n, co, oy, ox| {
            let mut acc = w.bias.data()[co] as f64;
            for ci in 0..s.c {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = oy as isize + ky as isize - pad as isize;
                        let ix = ox as isize + kx as isize - pad as isize;
                        if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                            continue;
                        }
                        acc += w.kernel.at(co, ci, ky, kx) as f64
                            * x.at(n, ci, iy as usize, ix as usize) as f64;
                    }
                }
            }
            acc as f32
        })
    }

    #[test]
    fn identity_1x1() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::randn(Shape::new(2, 1, 5, 6), 1.0, &mut rng);
        let w = ConvWeights::new(
            Tensor::full(Shape::new(1, 1, 1, 1), 1.0),
            Tensor::zeros(Shape::new(1, 1, 1, 1)),
        )
        .unwrap();
        assert_eq!(conv2d(&x, &w, 0).unwrap(), x);
    }

    #[test]
    fn ones_kernel_counts_padding() {
        let x = Tensor::full(Shape::new(1, 1, 5, 5), 1.0);
        let w = ConvWeights::new(
            Tensor::full(Shape::new(1, 1, 3, 3), 1.0),
            Tensor::zeros(Shape::new(1, 1, 1, 1)),
        )
        .unwrap();
        let y = conv2d(&x, &w, 1).unwrap();
        assert_eq!(y.at(0, 0, 2, 2), 9.0);
        for (cy, cx) in [(0, 0), (0, 4), (4, 0), (4, 4)] {
            assert_eq!(y.at(0, 0, cy, cx), 4.0);
        }
        assert_eq!(y.at(0, 0, 0, 2), 6.0);
        assert_eq!(y.at(0, 0, 2, 4), 6.0);
    }

    #[test]
    fn matches_oracle_2x4x4() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::randn(Shape::new(1, 2, 4, 4), 1.0, &mut rng);
        let w = ConvWeights::new(
            Tensor::randn(Shape::new(3, 2, 3, 3), 1.0, &mut rng),
            Tensor::randn(Shape::new(1, 3, 1, 1), 1.0, &mut rng),
        )
        .unwrap();
        let y = conv2d(&x, &w, 1).unwrap();
        assert!(y.max_abs_diff(&oracle(&x, &w, 1)) < 1e-5);
    }

    #[test]
    fn channel_mismatch_is_reported() {
        let x = Tensor::zeros(Shape::new(1, 4, 3, 3));
        let w = ConvWeights::zeros(2, 3, 3);
        match conv2d(&x, &w, 1) {
            Err(Error::Channels {
                expected: 3,
                actual: 4,
                ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn linear_in_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = Shape::new(1, 3, 6, 5);
        let x = Tensor::randn(s, 1.0, &mut rng);
        let y = Tensor::randn(s, 1.0, &mut rng);
        let mut w = ConvWeights::zeros(2, 3, 3);
        w.kernel = Tensor::randn(w.kernel.shape(), 1.0, &mut rng);
        let (a, b) = (0.7f32, -1.3f32);
        let mix = Tensor::from_vec(
            s,
            x.data()
                .iter()
                .zip(y.data())
                .map(|(p, q)| a * p + b * q)
                .collect(),
        )
        .unwrap();
        let lhs = conv2d(&mix, &w, 1).unwrap();
        let cx = conv2d(&x, &w, 1).unwrap();
        let cy = conv2d(&y, &w, 1).unwrap();
        for ((l, p), q) in lhs.data().iter().zip(cx.data()).zip(cy.data()) {
            let r = a * p + b * q;
            assert!((l - r).abs() <= 1e-4 * r.abs().max(1.0));
        }
    }
}
