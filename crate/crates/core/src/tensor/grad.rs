//! Reverse-mode derivatives of the ops in [`super::ops`].
//!
//! Each function takes the forward inputs and the upstream gradient and returns
//! gradients for every differentiable argument. Accumulation order is fixed
//! (batch index, then channel, then taps), so results do not depend on threading.

use rayon::prelude::*;

use super::kernel::{gather_acc, scatter_acc, weight_grad_acc, Geometry};
use super::ops::{channel_argmax, mirror, softmax_channels, transposed_offset, PadMode, Padding};
use super::{ConvWeights, Scalar, Shape, Tensor};
use crate::error::{Error, Result};

fn expect_shape<T: Scalar>(t: &Tensor<T>, want: Shape, what: &str) -> Result<()> {
    if t.shape() != want {
        return Err(Error::shape(format!(
            "{what}: expected {want}, got {}",
            t.shape()
        )));
    }
    Ok(())
}

/// Gradients of [`super::conv2d`] with respect to its input and filters.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &ConvWeights<T>,
    stride: usize,
    zero_padding: usize,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, ConvWeights<T>)> {
    let s = input.shape();
    let g = grad_out.shape();
    let (oc, ic) = (weights.out_channels(), weights.in_channels());
    if s.c != ic || g.c != oc || g.n != s.n {
        return Err(Error::shape(format!(
            "conv2d backward: input {s}, grad {g}, filters {:?}",
            weights.dims()
        )));
    }
    let geo = Geometry {
        oh: g.h,
        ow: g.w,
        ih: s.h,
        iw: s.w,
        kh: weights.kh(),
        kw: weights.kw(),
        stride,
        off_y: zero_padding,
        off_x: zero_padding,
    };
    if (s.h + 2 * zero_padding).saturating_sub(geo.kh) / stride + 1 != g.h
        || (s.w + 2 * zero_padding).saturating_sub(geo.kw) / stride + 1 != g.w
    {
        return Err(Error::shape(format!("conv2d backward: grad {g} does not match input {s}")));
    }

    let mut gi = Tensor::zeros(s);
    gi.data_mut()
        .par_chunks_mut(s.plane().max(1))
        .enumerate()
        .for_each(|(pi, dst)| {
            let (n, i) = (pi / ic, pi % ic);
            for o in 0..oc {
                scatter_acc(dst, grad_out.plane(n, o), weights.kernel(o, i), &Geometry {
                    oh: geo.ih,
                    ow: geo.iw,
                    ih: geo.oh,
                    iw: geo.ow,
                    ..geo
                });
            }
        });

    let mut gw = ConvWeights::zeros(oc, ic, geo.kh, geo.kw);
    gw.data_mut()
        .par_chunks_mut(geo.kh * geo.kw)
        .enumerate()
        .for_each(|(ki, dst)| {
            let (o, i) = (ki / ic, ki % ic);
            for n in 0..s.n {
                weight_grad_acc(dst, grad_out.plane(n, o), input.plane(n, i), &geo);
            }
        });
    Ok((gi, gw))
}

/// Gradients of [`super::conv2d_transposed`].
pub fn conv2d_transposed_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &ConvWeights<T>,
    stride: usize,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, ConvWeights<T>)> {
    let s = input.shape();
    let (oc, ic) = (weights.out_channels(), weights.in_channels());
    if s.c != ic {
        return Err(Error::shape("transposed conv backward: channel mismatch"));
    }
    expect_shape(
        grad_out,
        Shape::new(s.n, oc, s.h * stride, s.w * stride),
        "transposed conv backward grad",
    )?;
    // Geometry of the forward scatter seen as a gather from the output grid.
    let geo = Geometry {
        oh: s.h,
        ow: s.w,
        ih: s.h * stride,
        iw: s.w * stride,
        kh: weights.kh(),
        kw: weights.kw(),
        stride,
        off_y: transposed_offset(weights.kh(), stride),
        off_x: transposed_offset(weights.kw(), stride),
    };

    let mut gi = Tensor::zeros(s);
    gi.data_mut()
        .par_chunks_mut(s.plane().max(1))
        .enumerate()
        .for_each(|(pi, dst)| {
            let (n, i) = (pi / ic, pi % ic);
            for o in 0..oc {
                gather_acc(dst, grad_out.plane(n, o), weights.kernel(o, i), &geo);
            }
        });

    let mut gw = ConvWeights::zeros(oc, ic, geo.kh, geo.kw);
    gw.data_mut()
        .par_chunks_mut(geo.kh * geo.kw)
        .enumerate()
        .for_each(|(ki, dst)| {
            let (o, i) = (ki / ic, ki % ic);
            for n in 0..s.n {
                weight_grad_acc(dst, input.plane(n, i), grad_out.plane(n, o), &geo);
            }
        });
    Ok((gi, gw))
}

/// Gradient of [`super::pad2d`]: folds border gradient back onto its source pixels.
pub fn pad2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input_shape: Shape,
    pad: Padding,
    mode: PadMode,
) -> Result<Tensor<T>> {
    let s = input_shape;
    let (oh, ow) = (s.h + pad.top + pad.bottom, s.w + pad.left + pad.right);
    expect_shape(grad_out, Shape::new(s.n, s.c, oh, ow), "pad backward grad")?;
    let mut gi = Tensor::zeros(s);
    for (pi, dst) in gi.planes_mut().enumerate() {
        let src = &grad_out.data()[pi * oh * ow..(pi + 1) * oh * ow];
        for y in 0..oh {
            let sy = y as isize - pad.top as isize;
            for x in 0..ow {
                let sx = x as isize - pad.left as isize;
                let g = src[y * ow + x];
                match mode {
                    PadMode::Zero => {
                        if sy >= 0 && sx >= 0 && (sy as usize) < s.h && (sx as usize) < s.w {
                            let d = &mut dst[sy as usize * s.w + sx as usize];
                            *d = *d + g;
                        }
                    }
                    PadMode::Symmetric => {
                        let d = &mut dst[mirror(sy, s.h) * s.w + mirror(sx, s.w)];
                        *d = *d + g;
                    }
                }
            }
        }
    }
    Ok(gi)
}

/// Pixel shuffle is a permutation, so its gradient is the inverse permutation.
pub fn pixel_shuffle_backward<T: Scalar>(grad_out: &Tensor<T>, s: usize) -> Result<Tensor<T>> {
    super::pixel_unshuffle(grad_out, s)
}

/// Uses the forward *output* `tanh(x)`.
pub fn tanh_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    expect_shape(grad_out, output.shape(), "tanh backward grad")?;
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| g * (T::one() - y * y))
        .collect();
    Tensor::new(output.shape(), data)
}

/// Returns (input gradient, slope gradient).
pub fn prelu_backward<T: Scalar>(
    input: &Tensor<T>,
    slope: &[T],
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>)> {
    let s = input.shape();
    expect_shape(grad_out, s, "prelu backward grad")?;
    if slope.len() != s.c {
        return Err(Error::shape("prelu backward: slope count mismatch"));
    }
    let p = s.plane();
    let mut gi = Tensor::zeros(s);
    let mut gs = vec![T::zero(); s.c];
    for n in 0..s.n {
        for c in 0..s.c {
            let base = (n * s.c + c) * p;
            let a = slope[c];
            for q in base..base + p {
                let (x, g) = (input.data()[q], grad_out.data()[q]);
                if x > T::zero() {
                    gi.data_mut()[q] = g;
                } else {
                    gi.data_mut()[q] = a * g;
                    gs[c] = gs[c] + x * g;
                }
            }
        }
    }
    Ok((gi, gs))
}

/// Gradient of a per-channel bias: sum over batch and pixels.
pub fn bias_backward<T: Scalar>(grad_out: &Tensor<T>) -> Vec<T> {
    let s = grad_out.shape();
    let mut gb = vec![T::zero(); s.c];
    for n in 0..s.n {
        for (c, slot) in gb.iter_mut().enumerate() {
            *slot = grad_out.plane(n, c).iter().fold(*slot, |a, &g| a + g);
        }
    }
    gb
}

/// Routes the gradient to the first maximal channel at each pixel.
pub fn channel_max_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let s = input.shape();
    expect_shape(grad_out, Shape::new(s.n, 1, s.h, s.w), "max backward grad")?;
    let p = s.plane();
    let mut gi = Tensor::zeros(s);
    for (k, &c) in channel_argmax(input).iter().enumerate() {
        let (n, q) = (k / p, k % p);
        gi.data_mut()[(n * s.c + c) * p + q] = grad_out.data()[k];
    }
    Ok(gi)
}

/// Gradient of `sum_c values_c ⊙ softmax(logits)_c`.
///
/// Returns (values gradient, logits gradient); the latter is `g·p_c·(v_c − out)`.
pub fn softmax_weighted_sum_backward<T: Scalar>(
    values: &Tensor<T>,
    logits: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let s = values.shape();
    expect_shape(logits, s, "attention logits")?;
    expect_shape(grad_out, Shape::new(s.n, 1, s.h, s.w), "attention grad")?;
    let prob = softmax_channels(logits)?;
    let p = s.plane();
    let mut gv = Tensor::zeros(s);
    let mut gl = Tensor::zeros(s);
    for n in 0..s.n {
        let base = n * s.c * p;
        for q in 0..p {
            let g = grad_out.data()[n * p + q];
            let mut out = T::zero();
            for c in 0..s.c {
                let i = base + c * p + q;
                out = out + values.data()[i] * prob.data()[i];
            }
            for c in 0..s.c {
                let i = base + c * p + q;
                let pc = prob.data()[i];
                gv.data_mut()[i] = g * pc;
                gl.data_mut()[i] = g * pc * (values.data()[i] - out);
            }
        }
    }
    Ok((gv, gl))
}
