use rayon::prelude::*;

use super::kernel::{gather_acc, scatter_acc, Geometry};
use super::{ConvWeights, Scalar, Shape, Tensor};
use crate::error::{Error, Result};

/// Border extension used by [`pad2d`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum PadMode {
    Zero,
    /// Half-sample mirror: `x[-1] = x[0]`, `x[-2] = x[1]`, `x[n] = x[n-1]`.
    Symmetric,
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub const fn uniform(p: usize) -> Self {
        Padding {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }
}

pub(crate) fn mirror(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

pub fn pad2d<T: Scalar>(input: &Tensor<T>, pad: Padding, mode: PadMode) -> Result<Tensor<T>> {
    let s = input.shape();
    if mode == PadMode::Symmetric && (s.h == 0 || s.w == 0) && pad != Padding::default() {
        return Err(Error::shape("cannot mirror-pad an empty plane"));
    }
    let oh = s.h + pad.top + pad.bottom;
    let ow = s.w + pad.left + pad.right;
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, oh, ow));
    out.data_mut()
        .par_chunks_mut((oh * ow).max(1))
        .enumerate()
        .for_each(|(pi, dst)| {
            let src = &input.data()[pi * s.plane()..(pi + 1) * s.plane()];
            for y in 0..oh {
                let sy = y as isize - pad.top as isize;
                for x in 0..ow {
                    let sx = x as isize - pad.left as isize;
                    dst[y * ow + x] = match mode {
                        PadMode::Zero => {
                            if sy >= 0 && sx >= 0 && (sy as usize) < s.h && (sx as usize) < s.w {
                                src[sy as usize * s.w + sx as usize]
                            } else {
                                T::zero()
                            }
                        }
                        PadMode::Symmetric => src[mirror(sy, s.h) * s.w + mirror(sx, s.w)],
                    };
                }
            }
        });
    Ok(out)
}

/// Strided 2-D cross-correlation with symmetric zero padding and no bias.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weights: &ConvWeights<T>,
    stride: usize,
    zero_padding: usize,
) -> Result<Tensor<T>> {
    let s = input.shape();
    if stride == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    if s.c != weights.in_channels() {
        return Err(Error::shape(format!(
            "conv2d input has {} channels, filters expect {}",
            s.c,
            weights.in_channels()
        )));
    }
    let (ph, pw) = (s.h + 2 * zero_padding, s.w + 2 * zero_padding);
    if ph < weights.kh() || pw < weights.kw() {
        return Err(Error::shape(format!(
            "kernel {}x{} larger than padded input {ph}x{pw}",
            weights.kh(),
            weights.kw()
        )));
    }
    let geo = Geometry {
        oh: (ph - weights.kh()) / stride + 1,
        ow: (pw - weights.kw()) / stride + 1,
        ih: s.h,
        iw: s.w,
        kh: weights.kh(),
        kw: weights.kw(),
        stride,
        off_y: zero_padding,
        off_x: zero_padding,
    };
    let oc = weights.out_channels();
    let mut out = Tensor::zeros(Shape::new(s.n, oc, geo.oh, geo.ow));
    out.data_mut()
        .par_chunks_mut((geo.oh * geo.ow).max(1))
        .enumerate()
        .for_each(|(pi, dst)| {
            let (n, o) = (pi / oc, pi % oc);
            for i in 0..s.c {
                gather_acc(dst, input.plane(n, i), weights.kernel(o, i), &geo);
            }
        });
    Ok(out)
}

/// Crop offset aligning a transposed convolution with its split-filter form.
///
/// A kernel of extent `k` at stride `s` is treated as `ceil(k / s)` taps per phase;
/// the offset centres that tap window the same way `(taps - 1) / 2` padding does
/// for the efficient filters.
pub fn transposed_offset(k: usize, stride: usize) -> usize {
    let taps = k.div_ceil(stride);
    stride * ((taps - 1) / 2)
}

/// Strided transposed convolution producing exactly `(stride·h, stride·w)`.
///
/// `out[Y, X] = sum x[iy, ix] · w[Y - iy·s + off, X - ix·s + off]`, i.e. zero-insertion
/// upsampling followed by true convolution with `w`.
pub fn conv2d_transposed<T: Scalar>(
    input: &Tensor<T>,
    weights: &ConvWeights<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let s = input.shape();
    if stride == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    if s.c != weights.in_channels() {
        return Err(Error::shape(format!(
            "transposed conv input has {} channels, filters expect {}",
            s.c,
            weights.in_channels()
        )));
    }
    let geo = Geometry {
        oh: s.h * stride,
        ow: s.w * stride,
        ih: s.h,
        iw: s.w,
        kh: weights.kh(),
        kw: weights.kw(),
        stride,
        off_y: transposed_offset(weights.kh(), stride),
        off_x: transposed_offset(weights.kw(), stride),
    };
    let oc = weights.out_channels();
    let mut out = Tensor::zeros(Shape::new(s.n, oc, geo.oh, geo.ow));
    out.data_mut()
        .par_chunks_mut((geo.oh * geo.ow).max(1))
        .enumerate()
        .for_each(|(pi, dst)| {
            let (n, o) = (pi / oc, pi % oc);
            for i in 0..s.c {
                scatter_acc(dst, input.plane(n, i), weights.kernel(o, i), &geo);
            }
        });
    Ok(out)
}

/// `out[n, c, y·s+i, x·s+j] = in[n, c·s² + i·s + j, y, x]`
pub fn pixel_shuffle<T: Scalar>(input: &Tensor<T>, s: usize) -> Result<Tensor<T>> {
    let sh = input.shape();
    if s == 0 || sh.c % (s * s) != 0 {
        return Err(Error::shape(format!(
            "pixel shuffle by {s} needs channels divisible by {}, got {}",
            s * s,
            sh.c
        )));
    }
    let oc = sh.c / (s * s);
    let (oh, ow) = (sh.h * s, sh.w * s);
    let mut out = Tensor::zeros(Shape::new(sh.n, oc, oh, ow));
    for (pi, dst) in out.planes_mut().enumerate() {
        let (n, c) = (pi / oc, pi % oc);
        for i in 0..s {
            for j in 0..s {
                let src = input.plane(n, c * s * s + i * s + j);
                for y in 0..sh.h {
                    let row = &mut dst[(y * s + i) * ow..(y * s + i + 1) * ow];
                    for x in 0..sh.w {
                        row[x * s + j] = src[y * sh.w + x];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Exact inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle<T: Scalar>(input: &Tensor<T>, s: usize) -> Result<Tensor<T>> {
    let sh = input.shape();
    if s == 0 || sh.h % s != 0 || sh.w % s != 0 {
        return Err(Error::shape(format!(
            "pixel unshuffle by {s} needs spatial size divisible by it, got {}x{}",
            sh.h, sh.w
        )));
    }
    let (oh, ow) = (sh.h / s, sh.w / s);
    let oc = sh.c * s * s;
    let mut out = Tensor::zeros(Shape::new(sh.n, oc, oh, ow));
    for (pi, dst) in out.planes_mut().enumerate() {
        let (n, co) = (pi / oc, pi % oc);
        let (c, phase) = (co / (s * s), co % (s * s));
        let (i, j) = (phase / s, phase % s);
        let src = input.plane(n, c);
        for y in 0..oh {
            for x in 0..ow {
                dst[y * ow + x] = src[(y * s + i) * sh.w + x * s + j];
            }
        }
    }
    Ok(out)
}

/// Per-pixel numerically stable softmax across channels.
pub fn softmax_channels<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.c == 0 {
        return Err(Error::shape("softmax over zero channels"));
    }
    let p = s.plane();
    let mut out = Tensor::zeros(s);
    let src = input.data();
    let dst = out.data_mut();
    let mut scratch = vec![T::zero(); s.c];
    for n in 0..s.n {
        let base = n * s.c * p;
        for q in 0..p {
            let mut m = T::neg_infinity();
            for c in 0..s.c {
                m = m.max(src[base + c * p + q]);
            }
            let mut sum = T::zero();
            for (c, e) in scratch.iter_mut().enumerate() {
                *e = (src[base + c * p + q] - m).exp();
                sum = sum + *e;
            }
            for (c, e) in scratch.iter().enumerate() {
                dst[base + c * p + q] = *e / sum;
            }
        }
    }
    Ok(out)
}

/// Index of the first maximal channel at each pixel, shape (n, h·w).
pub(crate) fn channel_argmax<T: Scalar>(input: &Tensor<T>) -> Vec<usize> {
    let s = input.shape();
    let p = s.plane();
    let src = input.data();
    let mut idx = vec![0usize; s.n * p];
    for n in 0..s.n {
        let base = n * s.c * p;
        for q in 0..p {
            let mut best = 0;
            let mut bv = src[base + q];
            for c in 1..s.c {
                let v = src[base + c * p + q];
                if v > bv {
                    bv = v;
                    best = c;
                }
            }
            idx[n * p + q] = best;
        }
    }
    idx
}

/// Per-pixel maximum over channels, shape (n, 1, h, w).
pub fn channel_max<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.c == 0 {
        return Err(Error::shape("max over zero channels"));
    }
    let p = s.plane();
    let idx = channel_argmax(input);
    let data = idx
        .iter()
        .enumerate()
        .map(|(k, &c)| input.data()[(k / p * s.c + c) * p + k % p])
        .collect();
    Tensor::new(Shape::new(s.n, 1, s.h, s.w), data)
}

/// `out = sum_c values_c ⊙ weights_c`, shape (n, 1, h, w).
pub fn weighted_channel_sum<T: Scalar>(values: &Tensor<T>, weights: &Tensor<T>) -> Result<Tensor<T>> {
    let s = values.shape();
    if s != weights.shape() {
        return Err(Error::shape(format!(
            "weighted sum of {} with weights {}",
            s,
            weights.shape()
        )));
    }
    let p = s.plane();
    let mut out = Tensor::zeros(Shape::new(s.n, 1, s.h, s.w));
    let (v, w) = (values.data(), weights.data());
    let dst = out.data_mut();
    for n in 0..s.n {
        let base = n * s.c * p;
        let row = &mut dst[n * p..(n + 1) * p];
        for c in 0..s.c {
            let off = base + c * p;
            for (q, o) in row.iter_mut().enumerate() {
                *o = *o + v[off + q] * w[off + q];
            }
        }
    }
    Ok(out)
}

/// Elementwise product of equally shaped tensors.
pub fn hadamard<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!("hadamard {} with {}", a.shape(), b.shape())));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    Tensor::new(a.shape(), data)
}

pub fn tanh_map<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| v.tanh())
}

/// `x` where positive, `slope[c]·x` otherwise.
pub fn prelu_map<T: Scalar>(input: &Tensor<T>, slope: &[T]) -> Result<Tensor<T>> {
    let s = input.shape();
    if slope.len() != s.c {
        return Err(Error::shape(format!(
            "prelu has {} slopes for {} channels",
            slope.len(),
            s.c
        )));
    }
    let mut out = input.clone();
    for (pi, plane) in out.planes_mut().enumerate() {
        let a = slope[pi % s.c];
        for v in plane {
            if *v <= T::zero() {
                *v = a * *v;
            }
        }
    }
    Ok(out)
}

/// Adds `bias[c]` to every pixel of channel `c`.
pub fn add_channel_bias<T: Scalar>(input: &Tensor<T>, bias: &[T]) -> Result<Tensor<T>> {
    let s = input.shape();
    if bias.len() != s.c {
        return Err(Error::shape(format!(
            "bias has {} entries for {} channels",
            bias.len(),
            s.c
        )));
    }
    let mut out = input.clone();
    for (pi, plane) in out.planes_mut().enumerate() {
        let b = bias[pi % s.c];
        for v in plane {
            *v = *v + b;
        }
    }
    Ok(out)
}

/// Split interpolation filters of size (s·k)×(s·k) into the s² efficient k×k
/// filters that run at low resolution.
///
/// Output channel `o·s² + i·s + j` holds phase (i, j) of filter `o`. The efficient
/// filters are applied by cross-correlation, so each is stored tap-reversed:
/// `w̃[a, b] = w[(k-1-a)·s + i, (k-1-b)·s + j]`. With this layout
/// `conv2d_transposed(x, w, s) == pixel_shuffle(conv2d(x, w̃, 1, (k-1)/2), s)` for odd k.
pub fn demultiplex_filter<T: Scalar>(w: &ConvWeights<T>, s: usize) -> Result<ConvWeights<T>> {
    if s == 0 || w.kh() % s != 0 || w.kw() % s != 0 {
        return Err(Error::shape(format!(
            "filter {}x{} is not a multiple of the scale {s}",
            w.kh(),
            w.kw()
        )));
    }
    let (kh, kw) = (w.kh() / s, w.kw() / s);
    Ok(ConvWeights::from_fn(
        w.out_channels() * s * s,
        w.in_channels(),
        kh,
        kw,
        |oc, ic, a, b| {
            let (o, phase) = (oc / (s * s), oc % (s * s));
            let (i, j) = (phase / s, phase % s);
            w.at(o, ic, (kh - 1 - a) * s + i, (kw - 1 - b) * s + j)
        },
    ))
}

/// Multiplex groups of s² efficient filters back into full interpolation filters;
/// the exact inverse of [`demultiplex_filter`].
pub fn multiplex_filter<T: Scalar>(w: &ConvWeights<T>, s: usize) -> Result<ConvWeights<T>> {
    if s == 0 || w.out_channels() % (s * s) != 0 {
        return Err(Error::shape(format!(
            "{} efficient filters do not group into sets of {}",
            w.out_channels(),
            s * s
        )));
    }
    let (kh, kw) = (w.kh(), w.kw());
    Ok(ConvWeights::from_fn(
        w.out_channels() / (s * s),
        w.in_channels(),
        kh * s,
        kw * s,
        |o, ic, y, x| {
            let (a, i) = (y / s, y % s);
            let (b, j) = (x / s, x % s);
            w.at(o * s * s + i * s + j, ic, kh - 1 - a, kw - 1 - b)
        },
    ))
}
