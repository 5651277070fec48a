use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Batch, channel, height, width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in one (n, c) plane.
    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub const fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Dense NCHW tensor of `f32`, width fastest.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn full(shape: Shape, value: f32) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(
                "Tensor::from_vec",
                format!("{} elements for {shape}", shape.len()),
                format!("{} elements", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for n in 0..shape.n {
            for c in 0..shape.c {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    /// Standard-normal entries scaled by `std`.
    pub fn randn<R: Rng + ?Sized>(shape: Shape, std: f32, rng: &mut R) -> Self {
        let data = (0..shape.len())
            .map(|_| rng.sample::<f32, _>(StandardNormal) * std)
            .collect();
        Tensor { shape, data }
    }

    /// Uniform entries in `[lo, hi)`.
    pub fn uniform<R: Rng + ?Sized>(shape: Shape, lo: f32, hi: f32, rng: &mut R) -> Self {
        let data = (0..shape.len()).map(|_| rng.random_range(lo..hi)).collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let s = self.shape;
        ((n * s.c + c) * s.h + y) * s.w + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.offset(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f32) {
        let i = self.offset(n, c, y, x);
        self.data[i] = v;
    }

    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    /// Reinterpret with a new shape of the same element count.
    pub fn reshape(self, shape: Shape) -> Result<Self> {
        Tensor::from_vec(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, k: f32) -> Tensor {
        self.map(|v| v * k)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn clamp01(&self) -> Tensor {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Batch item `n` as a (1, C, H, W) tensor.
    pub fn item(&self, n: usize) -> Tensor {
        let s = self.shape;
        let len = s.c * s.plane();
        Tensor {
            shape: Shape::new(1, s.c, s.h, s.w),
            data: self.data[n * len..(n + 1) * len].to_vec(),
        }
    }

    /// Stack (1, C, H, W) tensors along the batch axis.
    pub fn stack(items: &[&Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::Empty("Tensor::stack needs at least one item".into()))?;
        let s = first.shape;
        let mut data = Vec::with_capacity(s.len() * items.len());
        let mut n = 0;
        for t in items {
            let ts = t.shape;
            if (ts.c, ts.h, ts.w) != (s.c, s.h, s.w) {
                return Err(Error::shape("Tensor::stack", s, ts));
            }
            n += ts.n;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            shape: Shape::new(n, s.c, s.h, s.w),
            data,
        })
    }

    /// Window `[y0, y0+h) x [x0, x0+w)` of every plane.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Tensor> {
        let s = self.shape;
        if y0 + h > s.h || x0 + w > s.w {
            return Err(Error::InvalidArgument(format!(
                "crop window {h}x{w} at ({y0}, {x0}) exceeds {}x{} image",
                s.h, s.w
            )));
        }
        let out = Shape::new(s.n, s.c, h, w);
        let mut data = Vec::with_capacity(out.len());
        for n in 0..s.n {
            for c in 0..s.c {
                for y in y0..y0 + h {
                    let start = self.offset(n, c, y, x0);
                    data.extend_from_slice(&self.data[start..start + w]);
                }
            }
        }
        Ok(Tensor { shape: out, data })
    }
}
