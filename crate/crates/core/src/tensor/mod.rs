//! Dense NCHW tensors and the deterministic kernels the models are built from.
//!
//! Every op is a pure function. Work is split across output planes only, so each
//! output value is accumulated in the same order regardless of thread count.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

use crate::error::{Error, Result};

pub mod grad;
mod kernel;
pub mod ops;

pub use ops::*;

/// Floating point element type. `f32` for inference and training, `f64` for
/// gradient checking through the same code path.
pub trait Scalar:
    Float + FromPrimitive + Default + Debug + Sum + Send + Sync + 'static
{
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 converts")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
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

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Batch/channel/height/width array, row-major with width fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::shape(format!(
                "tensor {shape} needs {} values, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: Shape, value: T) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.numel());
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

    /// Single image, single channel.
    pub fn plane_from_vec(h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        Self::new(Shape::new(1, 1, h, w), data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let s = self.shape;
        ((n * s.c + c) * s.h + y) * s.w + x
    }

    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.offset(n, c, y, x)]
    }

    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.offset(n, c, y, x);
        self.data[i] = v;
    }

    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Channels `[start, end)` of every batch item.
    pub fn channels(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.shape.c {
            return Err(Error::shape(format!(
                "channel range {start}..{end} outside {}",
                self.shape
            )));
        }
        let s = self.shape;
        let p = s.plane();
        let mut data = Vec::with_capacity(s.n * (end - start) * p);
        for n in 0..s.n {
            let base = n * s.c * p;
            data.extend_from_slice(&self.data[base + start * p..base + end * p]);
        }
        Ok(Tensor {
            shape: Shape::new(s.n, end - start, s.h, s.w),
            data,
        })
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(parts: &[&Tensor<T>]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat of zero tensors"))?
            .shape;
        let mut c = 0;
        for t in parts {
            let s = t.shape;
            if s.n != first.n || s.h != first.h || s.w != first.w {
                return Err(Error::shape(format!("concat {} with {}", first, s)));
            }
            c += s.c;
        }
        let p = first.plane();
        let mut data = Vec::with_capacity(first.n * c * p);
        for n in 0..first.n {
            for t in parts {
                let cp = t.shape.c * p;
                data.extend_from_slice(&t.data[n * cp..(n + 1) * cp]);
            }
        }
        Ok(Tensor {
            shape: Shape::new(first.n, c, first.h, first.w),
            data,
        })
    }

    /// Stack single-item tensors along the batch axis.
    pub fn stack(items: &[Tensor<T>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("stack of zero tensors"))?
            .shape;
        let mut n = 0;
        let mut data = Vec::new();
        for t in items {
            let s = t.shape;
            if s.c != first.c || s.h != first.h || s.w != first.w {
                return Err(Error::shape(format!("stack {} with {}", first, s)));
            }
            n += s.n;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            shape: Shape::new(n, first.c, first.h, first.w),
            data,
        })
    }

    /// Batch item `n` as a tensor of batch size one.
    pub fn item(&self, n: usize) -> Self {
        let s = self.shape;
        let len = s.c * s.plane();
        Tensor {
            shape: Shape::new(1, s.c, s.h, s.w),
            data: self.data[n * len..(n + 1) * len].to_vec(),
        }
    }

    pub(crate) fn planes_mut(&mut self) -> std::slice::ChunksExactMut<'_, T> {
        let p = self.shape.plane().max(1);
        self.data.chunks_exact_mut(p)
    }
}

/// Convolution filters laid out as (out_channels, in_channels, kh, kw).
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights<T = f32> {
    out_channels: usize,
    in_channels: usize,
    kh: usize,
    kw: usize,
    data: Vec<T>,
}

impl<T: Scalar> ConvWeights<T> {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kh: usize,
        kw: usize,
        data: Vec<T>,
    ) -> Result<Self> {
        if kh == 0 || kw == 0 {
            return Err(Error::shape("kernel extent must be at least 1"));
        }
        let want = out_channels * in_channels * kh * kw;
        if data.len() != want {
            return Err(Error::shape(format!(
                "filters ({out_channels}, {in_channels}, {kh}, {kw}) need {want} values, got {}",
                data.len()
            )));
        }
        Ok(ConvWeights {
            out_channels,
            in_channels,
            kh,
            kw,
            data,
        })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, kh: usize, kw: usize) -> Self {
        ConvWeights {
            out_channels,
            in_channels,
            kh,
            kw,
            data: vec![T::zero(); out_channels * in_channels * kh * kw],
        }
    }

    pub fn from_fn(
        out_channels: usize,
        in_channels: usize,
        kh: usize,
        kw: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(out_channels * in_channels * kh * kw);
        for o in 0..out_channels {
            for i in 0..in_channels {
                for y in 0..kh {
                    for x in 0..kw {
                        data.push(f(o, i, y, x));
                    }
                }
            }
        }
        ConvWeights {
            out_channels,
            in_channels,
            kh,
            kw,
            data,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kh(&self) -> usize {
        self.kh
    }

    pub fn kw(&self) -> usize {
        self.kw
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kh, self.kw]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn at(&self, o: usize, i: usize, y: usize, x: usize) -> T {
        self.data[((o * self.in_channels + i) * self.kh + y) * self.kw + x]
    }

    /// The kh×kw filter connecting input channel `i` to output channel `o`.
    pub fn kernel(&self, o: usize, i: usize) -> &[T] {
        let k = self.kh * self.kw;
        let start = (o * self.in_channels + i) * k;
        &self.data[start..start + k]
    }

    pub fn cast<U: Scalar>(&self) -> ConvWeights<U> {
        ConvWeights {
            out_channels: self.out_channels,
            in_channels: self.in_channels,
            kh: self.kh,
            kw: self.kw,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    /// Output channels `[start, end)`.
    pub fn select_out(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.out_channels {
            return Err(Error::shape(format!(
                "output channel range {start}..{end} outside {}",
                self.out_channels
            )));
        }
        let per = self.in_channels * self.kh * self.kw;
        ConvWeights::new(
            end - start,
            self.in_channels,
            self.kh,
            self.kw,
            self.data[start * per..end * per].to_vec(),
        )
    }
}
