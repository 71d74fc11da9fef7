//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use esr_core::models::bicubic::keys;
use esr_core::{ConvWeights, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape, lo: f32, hi: f32) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(lo..hi))
}

pub fn random_weights(rng: &mut ChaCha8Rng, o: usize, i: usize, kh: usize, kw: usize) -> ConvWeights {
    ConvWeights::from_fn(o, i, kh, kw, |_, _, _, _| rng.gen_range(-1.0..1.0))
}

/// Zero insertion followed by a full 2-D convolution with the un-flipped
/// kernel, accumulated in f64. Output is ((h-1)s + k) × ((w-1)s + k).
pub fn naive_transposed(x: &[f64], h: usize, w: usize, k: &[f64], kh: usize, kw: usize, s: usize) -> Vec<f64> {
    let (uh, uw) = ((h - 1) * s + 1, (w - 1) * s + 1);
    let mut up = vec![0.0; uh * uw];
    for y in 0..h {
        for x0 in 0..w {
            up[y * s * uw + x0 * s] = x[y * w + x0];
        }
    }
    let (oh, ow) = (uh + kh - 1, uw + kw - 1);
    let mut out = vec![0.0; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = 0.0;
            for ky in 0..kh {
                for kx in 0..kw {
                    let (uy, ux) = (oy as isize - ky as isize, ox as isize - kx as isize);
                    if uy >= 0 && ux >= 0 && (uy as usize) < uh && (ux as usize) < uw {
                        acc += up[uy as usize * uw + ux as usize] * k[ky * kw + kx];
                    }
                }
            }
            out[oy * ow + ox] = acc;
        }
    }
    out
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Cubic convolution evaluated independently at every output coordinate, with
/// half-pixel centres and mirrored borders.
pub fn cubic_upscale(x: &[f64], h: usize, w: usize, s: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * s * w * s];
    for oy in 0..h * s {
        let sy = (oy as f64 + 0.5) / s as f64 - 0.5;
        for ox in 0..w * s {
            let sx = (ox as f64 + 0.5) / s as f64 - 0.5;
            let mut acc = 0.0;
            let (y0, x0) = (sy.floor() as isize, sx.floor() as isize);
            for m in y0 - 1..=y0 + 2 {
                let wy = keys(sy - m as f64);
                for n in x0 - 1..=x0 + 2 {
                    acc += wy * keys(sx - n as f64) * x[reflect(m, h) * w + reflect(n, w)];
                }
            }
            out[oy * w * s + ox] = acc;
        }
    }
    out
}

/// Antialiased cubic resampling by 1/s at every output coordinate: the kernel is
/// stretched by s and normalised by s per axis, borders mirrored.
pub fn cubic_downscale(x: &[f64], h: usize, w: usize, s: usize) -> Vec<f64> {
    let (oh, ow) = (h / s, w / s);
    let sf = s as f64;
    let mut out = vec![0.0; oh * ow];
    for oy in 0..oh {
        let cy = (oy as f64 + 0.5) * sf - 0.5;
        for ox in 0..ow {
            let cx = (ox as f64 + 0.5) * sf - 0.5;
            let mut acc = 0.0;
            for m in (cy - 2.0 * sf).floor() as isize..=(cy + 2.0 * sf).ceil() as isize {
                let wy = keys((m as f64 - cy) / sf) / sf;
                if wy == 0.0 {
                    continue;
                }
                for n in (cx - 2.0 * sf).floor() as isize..=(cx + 2.0 * sf).ceil() as isize {
                    let wx = keys((n as f64 - cx) / sf) / sf;
                    acc += wy * wx * x[reflect(m, h) * w + reflect(n, w)];
                }
            }
            out[oy * ow + ox] = acc;
        }
    }
    out
}

pub fn to_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Piecewise-constant test card: random axis-aligned rectangles and discs.
pub fn shapes_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<f32> {
    let mut img = vec![rng.gen_range(40.0..200.0f32); h * w];
    for _ in 0..12 {
        let v = rng.gen_range(0.0..255.0f32);
        let (cy, cx) = (rng.gen_range(0..h) as f32, rng.gen_range(0..w) as f32);
        let r = rng.gen_range(3.0..(h.min(w) as f32 / 3.0));
        let disc = rng.gen_bool(0.5);
        for y in 0..h {
            for x in 0..w {
                let (dy, dx) = (y as f32 - cy, x as f32 - cx);
                let inside = if disc { dy * dy + dx * dx < r * r } else { dy.abs() < r && dx.abs() < r * 0.6 };
                if inside {
                    img[y * w + x] = v;
                }
            }
        }
    }
    img
}

/// Separable Gaussian blur with mirrored borders.
pub fn gaussian_blur(img: &[f32], h: usize, w: usize, sigma: f32) -> Vec<f32> {
    let r = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f32> = (-r..=r).map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f32 = taps.iter().sum();
    let taps: Vec<f32> = taps.iter().map(|t| t / total).collect();
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * img[y * w + reflect(x as isize + i as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * tmp[reflect(y as isize + i as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}
